// SPDX-License-Identifier: Apache-2.0
#include "uhead/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "uhead/rng.hpp"

namespace uhead {
namespace {

struct EpochView {
  std::uint64_t index = ~std::uint64_t{0};
  Matrix<float> embeddings;
  std::vector<float> losses;
};

std::vector<float> view_losses(const CacheReader &cache, std::uint64_t view, LossSource source,
                               const Matrix<float> &embeddings, const ClassifierHead *classifier) {
  const auto &h = cache.header();
  switch (source) {
  case LossSource::Stored:
    return cache.epoch_losses(view);
  case LossSource::FromLogits: {
    const auto logits = cache.epoch_logits(view);
    const auto labels = cache.epoch_labels(view);
    std::vector<float> out(h.n_samples);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = static_cast<float>(task_cross_entropy(logits.row(i), labels[i]));
    return out;
  }
  case LossSource::FromClassifier: {
    const auto labels = cache.epoch_labels(view);
    std::vector<float> out(h.n_samples), logit(classifier->n_classes());
    for (std::size_t i = 0; i < out.size(); ++i) {
      classifier->logits(embeddings.row(i), logit);
      out[i] = static_cast<float>(task_cross_entropy(std::span<const float>(logit), labels[i]));
    }
    return out;
  }
  }
  fail(ErrorCode::InvalidArgument, "unknown loss source");
}

} // namespace

void validate(const TrainConfig &c) {
  validate(c.loss);
  validate(c.optimizer);
  validate(c.schedule);
  require(c.loss.kind != LossKind::JointVanilla, ErrorCode::InvalidArgument,
          "train: the joint objective needs a live backbone and is reference-only");
  require(c.batch_size >= 2, ErrorCode::InvalidArgument, "train: batch_size must be >= 2");
  require(c.loss.kind != LossKind::RankingMargin || c.batch_size % 2 == 0, ErrorCode::InvalidArgument,
          "train: ranking loss pairs samples, batch_size must be even");
}

std::string to_jsonl(const TrainLog &log) {
  std::string out;
  char buf[256];
  for (const auto &r : log.records) {
    std::snprintf(buf, sizeof buf,
                  "{\"step\":%llu,\"lr\":%.17g,\"mean_loss\":%.17g,\"active_fraction\":%.17g}\n",
                  static_cast<unsigned long long>(r.step), r.lr, r.mean_loss, r.active_fraction);
    out += buf;
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> make_pairs(std::span<const std::size_t> batch,
                                                            std::uint64_t seed) {
  require(batch.size() % 2 == 0, ErrorCode::InvalidArgument,
          "make_pairs: batch of " + std::to_string(batch.size()) + " cannot be paired");
  std::vector<std::size_t> shuffled(batch.begin(), batch.end());
  Rng rng(seed);
  rng.shuffle(shuffled);
  const std::size_t half = shuffled.size() / 2;
  std::vector<std::pair<std::size_t, std::size_t>> pairs(half);
  for (std::size_t k = 0; k < half; ++k)
    pairs[k] = {shuffled[k], shuffled[half + k]};
  return pairs;
}

TrainResult train_head(const CacheReader &cache, UncertaintyHead head, const TrainConfig &config,
                       const ClassifierHead *classifier, const CheckpointSink &sink) {
  validate(config);
  const auto &h = cache.header();
  require(h.embed_dim == head.shape().input_dim, ErrorCode::DimensionMismatch,
          "train: cache embed_dim " + std::to_string(h.embed_dim) + " differs from head input_dim " +
              std::to_string(head.shape().input_dim));
  switch (config.loss_source) {
  case LossSource::Stored:
    require(h.has_losses, ErrorCode::InvalidArgument, "train: cache has no stored losses");
    break;
  case LossSource::FromLogits:
    require(h.has_logits, ErrorCode::InvalidArgument, "train: cache has no stored logits");
    break;
  case LossSource::FromClassifier:
    require(classifier != nullptr, ErrorCode::InvalidArgument, "train: classifier required");
    require(classifier->embed_dim() == h.embed_dim && classifier->n_classes() == h.n_classes,
            ErrorCode::DimensionMismatch, "train: classifier does not match the cache");
    break;
  }
  require(h.n_samples >= config.batch_size, ErrorCode::InvalidArgument,
          "train: batch_size exceeds the number of cached samples");

  const std::uint64_t steps_per_epoch = h.n_samples / config.batch_size;
  const std::uint64_t total = config.schedule.total_steps;
  const std::size_t bs = config.batch_size;
  const bool ranking = config.loss.kind == LossKind::RankingMargin;

  auto params = head.mutable_params().tensors();
  auto state = make_optimizer_state(config.optimizer, params);

  TrainResult result{head, {}};
  result.log.records.reserve(total);
  EpochView view;
  std::vector<std::size_t> order;
  std::vector<std::size_t> positions(bs);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  std::vector<float> targets(bs), out_grad(bs);

  for (std::uint64_t step = 0; step < total; ++step) {
    const std::uint64_t epoch = step / steps_per_epoch;
    if (step % steps_per_epoch == 0) {
      const std::uint64_t v = epoch % h.n_epochs;
      if (v != view.index) {
        view.index = v;
        view.embeddings = cache.epoch_embeddings(v);
        view.losses = view_losses(cache, v, config.loss_source, view.embeddings, classifier);
      }
      order = random_permutation(h.n_samples, derive_seed(derive_seed(config.seed, "epoch"), epoch));
    }
    const std::size_t first = static_cast<std::size_t>((step % steps_per_epoch) * bs);
    std::span<const std::size_t> batch(order.data() + first, bs);
    const auto x = gather_rows<float>(view.embeddings, batch);
    for (std::size_t k = 0; k < bs; ++k)
      targets[k] = view.losses[batch[k]];

    auto fwd = head_forward(head, x.view());
    const auto &u = fwd.output;
    double loss = 0.0, active = 0.0;
    std::fill(out_grad.begin(), out_grad.end(), 0.0f);
    if (ranking) {
      const auto pairs = make_pairs(positions, derive_seed(derive_seed(config.seed, "pairs"), step));
      const double inv = 1.0 / static_cast<double>(pairs.size());
      for (auto [a, b] : pairs) {
        const auto pl = ranking_loss(u[a], u[b], targets[a], targets[b], config.loss.margin,
                                     config.loss.leeway);
        loss += pl.loss;
        active += pl.loss > 0.0 ? 1.0 : 0.0;
        out_grad[a] = static_cast<float>(pl.grad_u1 * inv);
        out_grad[b] = static_cast<float>(pl.grad_u2 * inv);
      }
      loss *= inv;
      active *= inv;
    } else {
      const double inv = 1.0 / static_cast<double>(bs);
      for (std::size_t k = 0; k < bs; ++k) {
        const double diff = static_cast<double>(u[k]) - targets[k];
        loss += diff * diff;
        out_grad[k] = static_cast<float>(2.0 * diff * inv);
      }
      loss *= inv;
    }
    require(std::isfinite(loss), ErrorCode::NonFinite,
            "train: non-finite loss at step " + std::to_string(step));

    const auto grads = head_backward(head, fwd.cache, std::span<const float>(out_grad));
    const double lr = lr_at(config.schedule, step);
    auto g = grads.tensors();
    optimizer_step(params, std::span<const std::span<const float>>(g), state, lr);
    result.log.records.push_back({step, lr, loss, active});

    if (sink && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0)
      sink(step + 1, head);
  }
  result.head = std::move(head);
  return result;
}

} // namespace uhead
