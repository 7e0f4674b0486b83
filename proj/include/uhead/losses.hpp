// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

namespace uhead {

enum class LossKind { RankingMargin, L2Regression, JointVanilla };

struct LossVariant {
  LossKind kind = LossKind::RankingMargin;
  double margin = 0.1;
  double leeway = 0.0;
};

/// Throws unless margin and leeway are finite and nonnegative.
void validate(const LossVariant &variant);

/// -log softmax(logits)[label] with max subtraction; evaluated in double.
double task_cross_entropy(std::span<const float> logits, std::size_t label);
double task_cross_entropy(std::span<const double> logits, std::size_t label);

double l2_losspred(double u, double task_loss);

/// +1 if loss1 > l + loss2, -1 if loss1 + l < loss2, 0 otherwise.
/// With l = 0 only exact ties land in the 0 branch.
int loss_indicator(double task_loss_1, double task_loss_2, double leeway);

struct PairLoss {
  double loss = 0.0;
  double grad_u1 = 0.0;
  double grad_u2 = 0.0;
};

/// Hinge on the ordering of (u1, u2): the sample with the larger task loss
/// must carry the larger uncertainty, by at least `margin`. Subgradient at
/// the hinge point is 0.
PairLoss ranking_loss(double u1, double u2, double task_loss_1, double task_loss_2,
                      double margin, double leeway);

/// Joint objective of plain loss prediction, task loss plus the squared
/// uncertainty error. Reference only; the head trainer never uses it.
double joint_vanilla_loss(double task_loss, double u, double detached_task_loss);

} // namespace uhead
