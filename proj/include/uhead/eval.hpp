// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uhead/head.hpp"
#include "uhead/matrix.hpp"

namespace uhead {

/// Mann-Whitney AUROC: P(score_pos > score_neg) with ties counted 1/2.
/// Exact (integer pair counts), O(n log n).
double auroc(std::span<const double> scores, std::span<const std::uint8_t> positives);
double auroc(std::span<const float> scores, std::span<const std::uint8_t> positives);

/// Cosine 1-NN over the rows, self excluded, ties to the smallest index.
std::vector<std::size_t> nn1(MatrixView<const float> embeddings);

/// 1 where the nearest neighbour shares the label.
std::vector<std::uint8_t> nn1_correctness(MatrixView<const float> embeddings,
                                          std::span<const std::uint32_t> labels);

double recall_at_1(MatrixView<const float> embeddings, std::span<const std::uint32_t> labels);

/// AUROC of uncertainties against 1-NN mistakes. Throws UndefinedMetric
/// when every neighbour is correct or every neighbour is wrong.
double r_auroc(MatrixView<const float> embeddings, std::span<const std::uint32_t> labels,
               std::span<const float> uncertainties);
double r_auroc(MatrixView<const float> embeddings, std::span<const std::uint32_t> labels,
               std::span<const double> uncertainties);

double ambiguity_auroc(std::span<const float> uncertainties, std::span<const std::uint8_t> is_multilabel);

/// OOD is the positive class.
double id_ood_auroc(std::span<const float> uncertainties_id, std::span<const float> uncertainties_ood);

enum class Perturbation { GaussianNoise, CoordinateMask, Rescale };

const char *to_string(Perturbation p) noexcept;
Perturbation perturbation_from_string(const std::string &name);

/// Embedding-space deterioration at the given severity; severity 0 is the
/// identity.
///  - GaussianNoise: x + s * rms(x) * xi, rescaled back to |x|
///  - CoordinateMask: zero round(s * d) coordinates, nested as s grows
///  - Rescale: x / (1 + s)
/// Random draws depend on (seed, row) only, so severities share them.
Matrix<float> perturb(MatrixView<const float> embeddings, Perturbation kind, double severity,
                      std::uint64_t seed);

struct DeteriorationCurve {
  Perturbation perturbation = Perturbation::GaussianNoise;
  std::vector<double> severities;
  std::vector<double> medians;
};

DeteriorationCurve deterioration_sweep(const UncertaintyHead &head, MatrixView<const float> embeddings,
                                       Perturbation kind, std::span<const double> severities,
                                       std::uint64_t seed);

double median(std::vector<double> values);

/// Fraction of pairs with distinct targets whose uncertainties are ordered
/// like the targets (uncertainty ties count 1/2).
double pairwise_ranking_accuracy(std::span<const float> uncertainties, std::span<const float> targets);

double spearman(std::span<const double> a, std::span<const double> b);

struct EvalReport {
  std::string dataset;
  double r_auroc = 0.0;
  double recall_at_1 = 0.0;
  std::optional<double> ambiguity_auroc;
  std::optional<double> id_ood_auroc;
  std::optional<double> oracle_ceiling_r_auroc;
  std::optional<double> spearman_bayes_risk;
  std::optional<DeteriorationCurve> deterioration;
};

void validate(const EvalReport &report);
/// key=value, one metric per line.
std::string to_text(const EvalReport &report);
std::string to_json(const EvalReport &report);
EvalReport eval_report_from_json(const std::string &json);
/// Two columns, "severity median_uncertainty".
std::string curve_table(const DeteriorationCurve &curve);

} // namespace uhead
