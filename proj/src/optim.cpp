// SPDX-License-Identifier: Apache-2.0
#include "uhead/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "uhead/error.hpp"

namespace uhead {
namespace {

bool positive_finite(double v) { return std::isfinite(v) && v > 0; }

void check_congruent(std::span<const std::span<float>> params,
                     std::span<const std::span<const float>> grads, const OptimizerState &state,
                     bool needs_second) {
  require(params.size() == grads.size() && params.size() == state.first.size() &&
              (!needs_second || params.size() == state.second.size()),
          ErrorCode::DimensionMismatch, "optimizer: tensor count mismatch");
  for (std::size_t t = 0; t < params.size(); ++t) {
    require(params[t].size() == grads[t].size() && params[t].size() == state.first[t].size() &&
                (!needs_second || params[t].size() == state.second[t].size()),
            ErrorCode::DimensionMismatch,
            "optimizer: shape mismatch in tensor " + std::to_string(t));
    for (float g : grads[t])
      require(std::isfinite(g), ErrorCode::NonFinite,
              "optimizer: non-finite gradient in tensor " + std::to_string(t));
  }
}

} // namespace

void validate(const CosineSchedule &s) {
  require(positive_finite(s.warmup_start_lr) && positive_finite(s.peak_lr) &&
              positive_finite(s.final_lr),
          ErrorCode::InvalidArgument, "schedule: learning rates must be positive");
  require(s.peak_lr >= s.warmup_start_lr, ErrorCode::InvalidArgument,
          "schedule: peak_lr must be >= warmup_start_lr");
  require(s.warmup_steps >= 1 && s.total_steps >= 1, ErrorCode::InvalidArgument,
          "schedule: warmup_steps and total_steps must be positive");
  require(s.warmup_steps < s.total_steps, ErrorCode::InvalidArgument,
          "schedule: warmup_steps must be < total_steps");
}

double lr_at(const CosineSchedule &s, std::uint64_t step) {
  validate(s);
  require(step <= s.total_steps, ErrorCode::InvalidArgument,
          "lr_at: step " + std::to_string(step) + " beyond total_steps " +
              std::to_string(s.total_steps));
  // Convex-combination form so both endpoints come out exactly.
  if (step <= s.warmup_steps) {
    const double t = static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    return s.warmup_start_lr * (1.0 - t) + s.peak_lr * t;
  }
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.total_steps - s.warmup_steps);
  const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return s.final_lr * (1.0 - c) + s.peak_lr * c;
}

CosineSchedule schedule_from_episodes(double warmup_episodes, double total_episodes,
                                      std::uint64_t episode_size, std::uint64_t batch_size) {
  require(batch_size >= 1 && episode_size >= 1, ErrorCode::InvalidArgument,
          "schedule_from_episodes: sizes must be positive");
  const double steps_per_episode = static_cast<double>(episode_size) / static_cast<double>(batch_size);
  CosineSchedule s;
  s.warmup_steps = static_cast<std::uint64_t>(std::llround(warmup_episodes * steps_per_episode));
  s.total_steps = static_cast<std::uint64_t>(std::llround(total_episodes * steps_per_episode));
  validate(s);
  return s;
}

void validate(const OptimizerConfig &c) {
  require(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1, ErrorCode::InvalidArgument,
          "optimizer: betas must lie in [0, 1)");
  require(positive_finite(c.eps), ErrorCode::InvalidArgument, "optimizer: eps must be positive");
  require(std::isfinite(c.weight_decay) && c.weight_decay >= 0, ErrorCode::InvalidArgument,
          "optimizer: weight_decay must be >= 0");
  require(c.momentum >= 0 && c.momentum < 1, ErrorCode::InvalidArgument,
          "optimizer: momentum must lie in [0, 1)");
}

OptimizerState make_optimizer_state(const OptimizerConfig &config,
                                    std::span<const std::span<float>> params) {
  validate(config);
  OptimizerState s;
  s.config = config;
  for (auto p : params) {
    s.first.emplace_back(p.size(), 0.0f);
    if (config.kind == OptimizerKind::AdamW)
      s.second.emplace_back(p.size(), 0.0f);
  }
  return s;
}

void adamw_step(std::span<const std::span<float>> params,
                std::span<const std::span<const float>> grads, OptimizerState &state, double lr) {
  require(positive_finite(lr), ErrorCode::InvalidArgument, "adamw_step: lr must be positive");
  check_congruent(params, grads, state, true);
  const auto &c = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k];
    auto g = grads[k];
    auto &m = state.first[k];
    auto &v = state.second[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      const double th = theta[i];
      theta[i] = static_cast<float>(th - lr * (m_hat / (std::sqrt(v_hat) + c.eps) + c.weight_decay * th));
    }
  }
}

void sgd_step(std::span<const std::span<float>> params,
              std::span<const std::span<const float>> grads, OptimizerState &state, double lr) {
  require(positive_finite(lr), ErrorCode::InvalidArgument, "sgd_step: lr must be positive");
  check_congruent(params, grads, state, false);
  const auto &c = state.config;
  state.step_count += 1;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k];
    auto g = grads[k];
    auto &buf = state.first[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double vi = c.momentum * buf[i] + static_cast<double>(g[i]);
      buf[i] = static_cast<float>(vi);
      const double th = theta[i];
      theta[i] = static_cast<float>(th - lr * (vi + c.weight_decay * th));
    }
  }
}

void optimizer_step(std::span<const std::span<float>> params,
                    std::span<const std::span<const float>> grads, OptimizerState &state, double lr) {
  if (state.config.kind == OptimizerKind::AdamW)
    adamw_step(params, grads, state, lr);
  else
    sgd_step(params, grads, state, lr);
}

} // namespace uhead
