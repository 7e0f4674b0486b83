// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uhead/matrix.hpp"

namespace uhead {

struct TsneConfig {
  double perplexity = 30.0;
  std::uint32_t iterations = 1000;
  double learning_rate = 200.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::uint32_t momentum_switch = 250;
  double early_exaggeration = 12.0;
  std::uint32_t exaggeration_iterations = 250;
  std::uint64_t seed = 0;
};

void validate(const TsneConfig &config, std::size_t n_samples);

struct Affinities {
  Matrix<double> p;                     // symmetric joint probabilities
  Matrix<double> conditional;           // row i is p(j | i)
  std::vector<double> row_perplexity;   // achieved exp(entropy) per row
};

/// Per-row bandwidth by bisection (at most 64 steps) on log(beta) over
/// distances divided by the row's mean distance; that normalization makes
/// P invariant to a global rescaling of the embeddings. Rows whose
/// distances are all zero fall back to a floor of 1e-12 on the mean.
Affinities tsne_affinities(MatrixView<const float> embeddings, double perplexity);

/// KL(P || Q) for the Student-t kernel of `y` (n x 2).
double tsne_kl(const Matrix<double> &p, MatrixView<const double> y);

struct TsneResult {
  Matrix<double> coords; // n x 2
  double initial_kl = 0.0;
  double final_kl = 0.0;
};

/// Exact O(n^2) tSNE with momentum, gains and early exaggeration.
TsneResult tsne_embed(MatrixView<const float> embeddings, const TsneConfig &config);

struct ScatterStyle {
  double base_radius = 2.5;
  double radius_scale = 9.0;  // added radius at the maximum uncertainty
  double min_opacity = 0.15;
  double max_opacity = 1.0;
  double canvas = 800.0;
  double padding = 24.0;
};

void validate(const ScatterStyle &style);

struct Circle {
  double cx = 0, cy = 0, r = 0, opacity = 0;
  std::uint32_t label = 0;
};

/// Maps uncertainties (min-max normalized over the plotted set) to radius
/// and opacity: larger and more transparent as uncertainty grows. Circles
/// come back in a canonical order, so row order never changes the output.
std::vector<Circle> scatter_circles(MatrixView<const double> coords, std::span<const std::uint32_t> labels,
                                    std::span<const float> uncertainties, const ScatterStyle &style);

std::string render_scatter_svg(MatrixView<const double> coords, std::span<const std::uint32_t> labels,
                               std::span<const float> uncertainties, const ScatterStyle &style);
void render_scatter(MatrixView<const double> coords, std::span<const std::uint32_t> labels,
                    std::span<const float> uncertainties, const ScatterStyle &style,
                    const std::filesystem::path &path);

/// "x y label uncertainty" per line.
std::string coordinate_table(MatrixView<const double> coords, std::span<const std::uint32_t> labels,
                             std::span<const float> uncertainties);

} // namespace uhead
