#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "uhead/error.hpp"
#include "uhead/losses.hpp"
#include "uhead/rng.hpp"

using namespace uhead;

TEST_CASE("task cross-entropy examples") {
  const std::vector<double> zero{0.0, 0.0};
  CHECK(task_cross_entropy(std::span<const double>(zero), 0) == doctest::Approx(0.6931471805599453));
  const std::vector<double> sep{10.0, -10.0};
  // -log sigmoid(20) = log1p(exp(-20)).
  CHECK(task_cross_entropy(std::span<const double>(sep), 0) == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
  CHECK(task_cross_entropy(std::span<const double>(sep), 0) == doctest::Approx(2.061e-9).epsilon(1e-3));
  CHECK(task_cross_entropy(std::span<const double>(sep), 1) == doctest::Approx(20.0).epsilon(1e-8));
  const std::vector<float> f{10.0f, -10.0f};
  CHECK(task_cross_entropy(std::span<const float>(f), 1) == doctest::Approx(20.0).epsilon(1e-8));
}

TEST_CASE("task cross-entropy errors") {
  const std::vector<double> two{0.0, 1.0};
  CHECK_THROWS_AS(task_cross_entropy(std::span<const double>(two), 2), Error);
  const std::vector<double> one{0.0};
  CHECK_THROWS_AS(task_cross_entropy(std::span<const double>(one), 0), Error);
  const std::vector<double> bad{0.0, NAN};
  CHECK_THROWS_AS(task_cross_entropy(std::span<const double>(bad), 0), Error);
}

TEST_CASE("cross-entropy is shift invariant and nonnegative") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t c = 2 + rng.below(8);
    std::vector<float> z(c), zs(c);
    const float shift = static_cast<float>(rng.uniform(-50.0, 50.0));
    for (std::size_t k = 0; k < c; ++k) {
      z[k] = static_cast<float>(rng.uniform(-5.0, 5.0));
      zs[k] = z[k] + shift;
    }
    const std::size_t y = rng.below(c);
    const double a = task_cross_entropy(std::span<const float>(z), y);
    const double b = task_cross_entropy(std::span<const float>(zs), y);
    CHECK(a >= 0.0);
    CHECK(std::abs(static_cast<float>(a) - static_cast<float>(b)) <= 1e-6f * std::max(1.0f, static_cast<float>(a)) + 1e-5f);
  }
}

TEST_CASE("l2 loss prediction") {
  CHECK(l2_losspred(0.5, 0.5) == 0.0);
  CHECK(l2_losspred(1.0, 0.0) == 1.0);
  CHECK(l2_losspred(0.2, 1.4) == doctest::Approx(1.44));
  CHECK_THROWS_AS(l2_losspred(NAN, 1.0), Error);
}

TEST_CASE("indicator examples") {
  CHECK(loss_indicator(2.0, 1.0, 0.0) == 1);
  CHECK(loss_indicator(1.0, 2.0, 0.0) == -1);
  CHECK(loss_indicator(1.05, 1.0, 0.1) == 0);
  // Exact ties map to 0 rather than the literal "else" branch.
  CHECK(loss_indicator(1.0, 1.0, 0.0) == 0);
}

TEST_CASE("indicator antisymmetry and monotone invariance") {
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    const double a = rng.uniform(0.0, 5.0), b = rng.uniform(0.0, 5.0);
    const double l = t % 3 == 0 ? 0.0 : rng.uniform(0.0, 1.0);
    CHECK(loss_indicator(a, b, l) == -loss_indicator(b, a, l));
    if (a != b) {
      const int s = loss_indicator(a, b, 0.0);
      CHECK(loss_indicator(10.0 * a, 10.0 * b, 0.0) == s);
      CHECK(loss_indicator(std::exp(a), std::exp(b), 0.0) == s);
      CHECK(loss_indicator(std::sqrt(a), std::sqrt(b), 0.0) == s);
    }
  }
}

TEST_CASE("ranking loss examples") {
  auto r = ranking_loss(0.5, 0.2, 2.0, 1.0, 0.1, 0.0);
  CHECK(r.loss == 0.0);
  CHECK(r.grad_u1 == 0.0);
  CHECK(r.grad_u2 == 0.0);
  r = ranking_loss(0.2, 0.5, 2.0, 1.0, 0.1, 0.0);
  CHECK(r.loss == doctest::Approx(0.4));
  CHECK(r.grad_u1 == -1.0);
  CHECK(r.grad_u2 == 1.0);
  r = ranking_loss(0.25, 0.2, 2.0, 1.0, 0.1, 0.0);
  CHECK(r.loss == doctest::Approx(0.05));
  // Indicator 0 means no loss at all.
  r = ranking_loss(0.2, 0.9, 1.0, 1.0, 0.1, 0.0);
  CHECK(r.loss == 0.0);
  CHECK(r.grad_u1 == 0.0);
}

TEST_CASE("ranking loss is zero iff ordered by the margin") {
  Rng rng(8);
  for (int t = 0; t < 2000; ++t) {
    const double u1 = rng.uniform(0.01, 2.0), u2 = rng.uniform(0.01, 2.0);
    const double l1 = rng.uniform(0.0, 3.0), l2 = rng.uniform(0.0, 3.0);
    const double m = rng.uniform(0.0, 0.5), lee = rng.uniform(0.0, 0.3);
    const int s = loss_indicator(l1, l2, lee);
    const auto r = ranking_loss(u1, u2, l1, l2, m, lee);
    const bool ordered = s == 0 || s * (u1 - u2) >= m;
    CHECK((r.loss == 0.0) == ordered);
    CHECK(r.loss >= 0.0);
  }
}

TEST_CASE("ranking subgradients match finite differences off the hinge") {
  Rng rng(9);
  const double h = 1e-6;
  for (int t = 0; t < 500; ++t) {
    const double u1 = rng.uniform(0.01, 2.0), u2 = rng.uniform(0.01, 2.0);
    const double l1 = rng.uniform(0.0, 3.0), l2 = rng.uniform(0.0, 3.0);
    const double m = 0.1;
    const int s = loss_indicator(l1, l2, 0.0);
    if (std::abs(-s * (u1 - u2) + m) < 1e-3)
      continue;
    const auto r = ranking_loss(u1, u2, l1, l2, m, 0.0);
    const double d1 = (ranking_loss(u1 + h, u2, l1, l2, m, 0.0).loss - ranking_loss(u1 - h, u2, l1, l2, m, 0.0).loss) / (2 * h);
    const double d2 = (ranking_loss(u1, u2 + h, l1, l2, m, 0.0).loss - ranking_loss(u1, u2 - h, l1, l2, m, 0.0).loss) / (2 * h);
    CHECK(r.grad_u1 == doctest::Approx(d1).epsilon(1e-6));
    CHECK(r.grad_u2 == doctest::Approx(d2).epsilon(1e-6));
  }
}

TEST_CASE("ranking loss is invariant to monotone transforms of task losses") {
  Rng rng(10);
  for (int t = 0; t < 500; ++t) {
    const double u1 = rng.uniform(0.01, 2.0), u2 = rng.uniform(0.01, 2.0);
    const double l1 = rng.uniform(0.0, 3.0), l2 = rng.uniform(0.0, 3.0);
    const auto a = ranking_loss(u1, u2, l1, l2, 0.1, 0.0);
    const auto b = ranking_loss(u1, u2, 10.0 * l1 + 3.0, 10.0 * l2 + 3.0, 0.1, 0.0);
    CHECK(a.loss == b.loss);
    CHECK(a.grad_u1 == b.grad_u1);
  }
}

TEST_CASE("joint vanilla loss") {
  CHECK(joint_vanilla_loss(1.0, 0.5, 1.0) == doctest::Approx(1.25));
  CHECK(joint_vanilla_loss(0.0, 0.0, 0.0) == 0.0);
  CHECK(joint_vanilla_loss(2.0, 1.0, 2.0) == doctest::Approx(3.0));
}

TEST_CASE("loss variant validation") {
  LossVariant v;
  CHECK(v.margin == 0.1);
  CHECK(v.leeway == 0.0);
  CHECK_NOTHROW(validate(v));
  v.margin = -0.1;
  CHECK_THROWS_AS(validate(v), Error);
  v.margin = 0.1;
  v.leeway = -1.0;
  CHECK_THROWS_AS(validate(v), Error);
}
