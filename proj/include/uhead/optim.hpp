// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace uhead {

/// Warmup-cosine schedule over optimizer steps: linear ramp from
/// warmup_start_lr to peak_lr over warmup_steps, then cosine decay to
/// final_lr at total_steps.
struct CosineSchedule {
  double warmup_start_lr = 0.0001;
  double peak_lr = 0.0028;
  double final_lr = 1e-8;
  std::uint64_t warmup_steps = 25;
  std::uint64_t total_steps = 460;
};

void validate(const CosineSchedule &schedule);

double lr_at(const CosineSchedule &schedule, std::uint64_t step);

/// Maps an episode-based configuration onto optimizer steps, e.g. a
/// 25/460 episode warmup/total split at a given batch size.
CosineSchedule schedule_from_episodes(double warmup_episodes, double total_episodes,
                                      std::uint64_t episode_size, std::uint64_t batch_size);

enum class OptimizerKind { AdamW, SGD };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::AdamW;
  double beta1 = 0.8;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0001;
  double momentum = 0.9; // SGD only

  bool operator==(const OptimizerConfig &) const = default;
};

void validate(const OptimizerConfig &config);

/// Per-tensor moment buffers. SGD uses `first` as its momentum buffer.
struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t step_count = 0;
  std::vector<std::vector<float>> first;
  std::vector<std::vector<float>> second;

  bool operator==(const OptimizerState &) const = default;
};

/// Fresh state with zeroed buffers shaped like `params`.
OptimizerState make_optimizer_state(const OptimizerConfig &config,
                                    std::span<const std::span<float>> params);

template <std::size_t N>
OptimizerState make_optimizer_state(const OptimizerConfig &config,
                                    const std::array<std::span<float>, N> &params) {
  return make_optimizer_state(config, std::span<const std::span<float>>(params));
}

/// Decoupled weight decay:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
void adamw_step(std::span<const std::span<float>> params,
                std::span<const std::span<const float>> grads, OptimizerState &state, double lr);

///   v <- momentum v + g;  theta <- theta - lr (v + wd theta)
void sgd_step(std::span<const std::span<float>> params,
              std::span<const std::span<const float>> grads, OptimizerState &state, double lr);

/// Dispatches on state.config.kind.
void optimizer_step(std::span<const std::span<float>> params,
                    std::span<const std::span<const float>> grads, OptimizerState &state, double lr);

} // namespace uhead
