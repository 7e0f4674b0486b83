#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "uhead/error.hpp"
#include "uhead/optim.hpp"

using namespace uhead;

namespace {

struct Scalar {
  std::vector<float> theta;
  std::vector<float> grad;
  std::array<std::span<float>, 1> params() { return {std::span<float>(theta)}; }
  std::array<std::span<const float>, 1> grads() const { return {std::span<const float>(grad)}; }
};

} // namespace

TEST_CASE("schedule endpoints are exact") {
  const CosineSchedule s;
  CHECK(static_cast<float>(lr_at(s, 0)) == 0.0001f);
  CHECK(static_cast<float>(lr_at(s, s.warmup_steps)) == 0.0028f);
  CHECK(static_cast<float>(lr_at(s, s.total_steps)) == 1e-8f);
  CHECK(lr_at(s, 0) == 0.0001);
  CHECK(lr_at(s, s.warmup_steps) == 0.0028);
  CHECK(lr_at(s, s.total_steps) == 1e-8);
  CHECK_THROWS_AS(lr_at(s, s.total_steps + 1), Error);
}

TEST_CASE("schedule shape") {
  CosineSchedule s;
  s.warmup_steps = 10;
  s.total_steps = 110;
  for (std::uint64_t t = 0; t < 10; ++t) {
    CHECK(lr_at(s, t) < lr_at(s, t + 1));
    const double lin = s.warmup_start_lr + (s.peak_lr - s.warmup_start_lr) * t / 10.0;
    CHECK(lr_at(s, t) == doctest::Approx(lin).epsilon(1e-12));
  }
  for (std::uint64_t t = 10; t < 110; ++t) {
    CHECK(lr_at(s, t) >= lr_at(s, t + 1));
    const double cos = s.final_lr + 0.5 * (s.peak_lr - s.final_lr) * (1 + std::cos(M_PI * (t - 10) / 100.0));
    CHECK(lr_at(s, t) == doctest::Approx(cos).epsilon(1e-12));
  }
  CHECK(lr_at(s, 60) == doctest::Approx(s.final_lr + 0.5 * (s.peak_lr - s.final_lr)));
}

TEST_CASE("schedule validation") {
  CosineSchedule s;
  s.warmup_steps = s.total_steps;
  CHECK_THROWS_AS(validate(s), Error);
  s = {};
  s.peak_lr = 1e-5;
  CHECK_THROWS_AS(validate(s), Error);
  s = {};
  s.final_lr = 0.0;
  CHECK_THROWS_AS(validate(s), Error);
}

TEST_CASE("episodes map to steps") {
  const auto s = schedule_from_episodes(25, 460, 200000, 256);
  CHECK(s.warmup_steps == 25 * 200000 / 256);
  CHECK(s.total_steps == 460ull * 200000 / 256);
}

TEST_CASE("adamw first step by hand") {
  OptimizerConfig c;
  c.weight_decay = 0.0;
  Scalar p{{1.0f}, {1.0f}};
  auto st = make_optimizer_state(c, p.params());
  const auto params = p.params();
  const auto grads = p.grads();
  adamw_step(params, grads, st, 0.1);
  CHECK(p.theta[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-7));
  CHECK(st.step_count == 1);

  c.weight_decay = 0.0001;
  Scalar q{{1.0f}, {1.0f}};
  auto st2 = make_optimizer_state(c, q.params());
  adamw_step(q.params(), q.grads(), st2, 0.1);
  CHECK(q.theta[0] == doctest::Approx(0.89999).epsilon(1e-7));
}

TEST_CASE("adamw identity without gradient or decay") {
  OptimizerConfig c;
  c.weight_decay = 0.0;
  Scalar p{{1.5f, -2.0f, 0.25f}, {0.0f, 0.0f, 0.0f}};
  auto st = make_optimizer_state(c, p.params());
  for (int i = 0; i < 10; ++i)
    adamw_step(p.params(), p.grads(), st, 0.01);
  CHECK(p.theta == std::vector<float>{1.5f, -2.0f, 0.25f});
  CHECK(st.step_count == 10);
}

TEST_CASE("adamw is deterministic") {
  OptimizerConfig c;
  Scalar a{{0.3f, 0.7f}, {0.1f, -0.2f}}, b = a;
  auto sa = make_optimizer_state(c, a.params());
  auto sb = make_optimizer_state(c, b.params());
  for (int i = 0; i < 5; ++i) {
    adamw_step(a.params(), a.grads(), sa, 0.01);
    adamw_step(b.params(), b.grads(), sb, 0.01);
  }
  CHECK(a.theta == b.theta);
  CHECK(sa == sb);
}

TEST_CASE("adamw minimizes a convex quadratic") {
  // f(x) = 0.5 (x - 3)^2 from x = -2.
  OptimizerConfig c;
  c.weight_decay = 0.0;
  Scalar p{{-2.0f}, {0.0f}};
  auto st = make_optimizer_state(c, p.params());
  const double f0 = 0.5 * 25.0;
  for (int i = 0; i < 1000; ++i) {
    p.grad[0] = p.theta[0] - 3.0f;
    adamw_step(p.params(), p.grads(), st, 0.05 * (1.0 - i / 1000.0) + 1e-4);
  }
  const double f = 0.5 * (p.theta[0] - 3.0) * (p.theta[0] - 3.0);
  CHECK(f <= 0.01 * f0);
}

TEST_CASE("adamw rejects bad input") {
  OptimizerConfig c;
  Scalar p{{1.0f}, {NAN}};
  auto st = make_optimizer_state(c, p.params());
  CHECK_THROWS_AS(adamw_step(p.params(), p.grads(), st, 0.1), Error);
  Scalar q{{1.0f, 2.0f}, {1.0f}};
  auto sq = make_optimizer_state(c, q.params());
  CHECK_THROWS_AS(adamw_step(q.params(), q.grads(), sq, 0.1), Error);
}

TEST_CASE("sgd momentum by hand") {
  OptimizerConfig c;
  c.kind = OptimizerKind::SGD;
  c.weight_decay = 0.0;
  Scalar p{{1.0f}, {1.0f}};
  auto st = make_optimizer_state(c, p.params());
  sgd_step(p.params(), p.grads(), st, 0.1);
  CHECK(p.theta[0] == doctest::Approx(0.9));
  const float before = p.theta[0];
  sgd_step(p.params(), p.grads(), st, 0.1);
  CHECK(before - p.theta[0] == doctest::Approx(0.19).epsilon(1e-6));

  Scalar z{{2.0f}, {0.0f}};
  auto sz = make_optimizer_state(c, z.params());
  optimizer_step(z.params(), z.grads(), sz, 0.1);
  CHECK(z.theta[0] == 2.0f);
}

TEST_CASE("optimizer defaults") {
  const OptimizerConfig c;
  CHECK(c.kind == OptimizerKind::AdamW);
  CHECK(c.beta1 == 0.8);
  CHECK(c.beta2 == 0.95);
  CHECK(c.eps == 1e-8);
  CHECK(c.weight_decay == 0.0001);
  CHECK(c.momentum == 0.9);
}
