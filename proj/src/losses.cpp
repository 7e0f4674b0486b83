// SPDX-License-Identifier: Apache-2.0
#include "uhead/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uhead/error.hpp"

namespace uhead {
namespace {

template <class T> double cross_entropy(std::span<const T> logits, std::size_t label) {
  require(logits.size() >= 2, ErrorCode::InvalidArgument,
          "task_cross_entropy: need at least 2 classes");
  require(label < logits.size(), ErrorCode::InvalidArgument,
          "task_cross_entropy: label " + std::to_string(label) + " out of range for " +
              std::to_string(logits.size()) + " classes");
  double mx = -INFINITY;
  for (T v : logits) {
    require(std::isfinite(v), ErrorCode::NonFinite, "task_cross_entropy: non-finite logit");
    mx = std::max(mx, static_cast<double>(v));
  }
  double sum = 0.0;
  for (T v : logits)
    sum += std::exp(static_cast<double>(v) - mx);
  const double loss = std::log(sum) - (static_cast<double>(logits[label]) - mx);
  return std::max(loss, 0.0);
}

void require_finite(double v, const char *what) {
  require(std::isfinite(v), ErrorCode::NonFinite, std::string(what) + ": non-finite input");
}

} // namespace

void validate(const LossVariant &v) {
  require(std::isfinite(v.margin) && v.margin >= 0, ErrorCode::InvalidArgument,
          "loss variant: margin must be >= 0");
  require(std::isfinite(v.leeway) && v.leeway >= 0, ErrorCode::InvalidArgument,
          "loss variant: leeway must be >= 0");
}

double task_cross_entropy(std::span<const float> logits, std::size_t label) {
  return cross_entropy(logits, label);
}

double task_cross_entropy(std::span<const double> logits, std::size_t label) {
  return cross_entropy(logits, label);
}

double l2_losspred(double u, double task_loss) {
  require_finite(u, "l2_losspred");
  require_finite(task_loss, "l2_losspred");
  const double d = u - task_loss;
  return d * d;
}

int loss_indicator(double a, double b, double l) {
  if (a > l + b)
    return 1;
  if (a + l < b)
    return -1;
  return 0;
}

PairLoss ranking_loss(double u1, double u2, double t1, double t2, double margin, double leeway) {
  const int s = loss_indicator(t1, t2, leeway);
  if (s == 0)
    return {};
  const double hinge = -s * (u1 - u2) + margin;
  if (!(hinge > 0.0))
    return {};
  return {hinge, static_cast<double>(-s), static_cast<double>(s)};
}

double joint_vanilla_loss(double task_loss, double u, double detached_task_loss) {
  return task_loss + l2_losspred(u, detached_task_loss);
}

} // namespace uhead
