// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uhead/head.hpp"
#include "uhead/matrix.hpp"

// Data-parallel inner loops. Every `*_parallel` kernel has a `*_serial`
// twin computing the same values in the same per-element order, so the
// two agree bitwise at any thread count; the serial versions are kept for
// tests and the benchmark.
namespace uhead::kernels {

int max_threads() noexcept;

/// Inverse L2 norms; throws on a zero-norm row (cosine is undefined).
std::vector<double> inverse_norms(MatrixView<const float> rows);

/// Cosine nearest neighbour of every query among the listed database rows.
/// When `exclude_self` is set, query i never matches database row i.
/// Ties go to the smallest database index. Returns database row indices.
std::vector<std::size_t> nearest_cosine_serial(MatrixView<const float> queries,
                                               MatrixView<const float> database,
                                               std::span<const std::size_t> candidates,
                                               bool exclude_self);
std::vector<std::size_t> nearest_cosine_parallel(MatrixView<const float> queries,
                                                 MatrixView<const float> database,
                                                 std::span<const std::size_t> candidates,
                                                 bool exclude_self);

/// Pairwise squared Euclidean distances, n x n, double.
Matrix<double> squared_distances_serial(MatrixView<const double> points);
Matrix<double> squared_distances_parallel(MatrixView<const double> points);

/// Exact tSNE gradient of KL(P || Q) at `y` (n x 2). Writes the gradient
/// into `grad` and returns the Student-t normalizer Z.
double tsne_gradient_serial(const Matrix<double> &p, MatrixView<const double> y,
                            double exaggeration, MatrixView<double> grad);
double tsne_gradient_parallel(const Matrix<double> &p, MatrixView<const double> y,
                              double exaggeration, MatrixView<double> grad);

/// Head inference in fixed row blocks of `kPredictBlock`; block results do
/// not depend on thread count.
inline constexpr std::size_t kPredictBlock = 256;
std::vector<float> head_predict_serial(const UncertaintyHead &head, MatrixView<const float> batch);
std::vector<float> head_predict_parallel(const UncertaintyHead &head, MatrixView<const float> batch);

} // namespace uhead::kernels
