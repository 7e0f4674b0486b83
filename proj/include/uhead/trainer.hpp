// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uhead/cache.hpp"
#include "uhead/head.hpp"
#include "uhead/losses.hpp"
#include "uhead/optim.hpp"

namespace uhead {

/// Where the detached task loss of a sample comes from. All three give
/// identical values on a cache built with a classifier.
enum class LossSource { Stored, FromLogits, FromClassifier };

struct TrainConfig {
  LossVariant loss;
  std::uint64_t batch_size = 256;
  OptimizerConfig optimizer;
  /// total_steps of the schedule is the training horizon.
  CosineSchedule schedule;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_every = 0; // 0 disables periodic checkpoints
  LossSource loss_source = LossSource::Stored;
};

void validate(const TrainConfig &config);

struct TrainRecord {
  std::uint64_t step = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  /// Share of pairs with a positive hinge; 0 for L2 regression.
  double active_fraction = 0.0;

  bool operator==(const TrainRecord &) const = default;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::string checkpoint; // where the final head was written, if anywhere

  bool operator==(const TrainLog &) const = default;
};

/// One JSON object per line.
std::string to_jsonl(const TrainLog &log);

/// Shuffles the batch with `seed`, splits it in halves and pairs
/// first_half[k] with second_half[k].
std::vector<std::pair<std::size_t, std::size_t>> make_pairs(std::span<const std::size_t> batch,
                                                            std::uint64_t seed);

struct TrainResult {
  UncertaintyHead head;
  TrainLog log;
};

using CheckpointSink = std::function<void(std::uint64_t step, const UncertaintyHead &head)>;

/// Trains only the head; the cache and classifier are read, never written.
/// Epoch e of training visits cached view e mod n_epochs in a seed-derived
/// order, in full batches (the remainder of an epoch is dropped). Aborts
/// with the step index on a non-finite loss.
TrainResult train_head(const CacheReader &cache, UncertaintyHead head, const TrainConfig &config,
                       const ClassifierHead *classifier = nullptr, const CheckpointSink &sink = {});

} // namespace uhead
