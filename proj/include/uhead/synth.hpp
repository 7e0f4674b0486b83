// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uhead/cache.hpp"
#include "uhead/matrix.hpp"

namespace uhead {

/// Gaussian mixture with a label-noise field; the per-point Bayes risk is
/// available in closed form, which makes it a ground truth for aleatoric
/// uncertainty.
///
/// Class means are mean_scale * unit vectors (+-e0 for two classes, e_c for
/// n_classes <= embed_dim, seeded random directions otherwise), shifted by
/// `offset`. A point x drawn from class c keeps its label with probability
/// 1 - rho(x) and otherwise takes a uniformly drawn other label, where
///   rho(x) = noise_max * exp(-d(x)^2 / (2 noise_width^2))
/// and d(x) is the distance to the boundary between the two most likely
/// classes (noise_width = 0 makes rho constant).
struct SyntheticOracle {
  std::uint32_t n_classes = 2;
  std::uint32_t embed_dim = 8;
  double mean_scale = 1.0;
  double sigma = 0.5;
  double noise_max = 0.0;
  double noise_width = 0.0;
  /// Per-epoch views jitter the base point by N(0, (view_jitter * sigma)^2).
  double view_jitter = 0.1;
  std::uint64_t seed = 0;
  /// Defaults to a sub-seed of `seed`; views never affect base points.
  std::optional<std::uint64_t> view_seed;
  /// Translation of the whole mixture (empty = none).
  std::vector<double> offset;
};

void validate(const SyntheticOracle &oracle);

Matrix<double> class_means(const SyntheticOracle &oracle);

/// Clean class posterior p(c | x) of the mixture.
std::vector<double> class_posterior(const SyntheticOracle &oracle, std::span<const double> x);
double flip_probability(const SyntheticOracle &oracle, std::span<const double> x);
/// Posterior of the observed (noisy) label.
std::vector<double> observed_posterior(const SyntheticOracle &oracle, std::span<const double> x);
/// 1 - max_k p(observed label = k | x).
double bayes_risk(const SyntheticOracle &oracle, std::span<const double> x);

/// Bayes-optimal linear classifier of the clean mixture (shared isotropic
/// covariance, equal priors): W_c = mu_c / sigma^2, b_c = -|mu_c|^2 / (2 sigma^2).
ClassifierHead oracle_classifier(const SyntheticOracle &oracle);

struct SynthData {
  CacheContents cache;            // losses and logits from oracle_classifier
  ClassifierHead classifier;
  Matrix<double> base_points;     // n x embed_dim, before view jitter
  std::vector<std::uint32_t> true_labels;
  std::vector<double> flip_prob;
  std::vector<double> bayes_risk;
};

/// Sample i belongs to class i mod n_classes; all draws are counter-based
/// on (seed, i) so a sample does not depend on n_samples.
SynthData synth_generate(const SyntheticOracle &oracle, std::size_t n_samples, std::size_t n_epochs);

/// R-AUROC reached when the uncertainties are the true Bayes risk.
double oracle_ceiling_r_auroc(MatrixView<const float> embeddings, std::span<const std::uint32_t> labels,
                              std::span<const double> bayes_risk);
double oracle_ceiling_r_auroc(const CacheContents &cache, std::span<const double> bayes_risk,
                              std::size_t epoch = 0);

/// 1 where the Bayes risk exceeds `threshold` (stand-in for images with
/// several plausible labels).
std::vector<std::uint8_t> multilabel_flags(std::span<const double> bayes_risk, double threshold);

/// One value per line.
std::string bayes_risk_text(std::span<const double> bayes_risk);
std::vector<double> parse_bayes_risk_text(const std::string &text);

} // namespace uhead
