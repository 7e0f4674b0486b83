// SPDX-License-Identifier: Apache-2.0
// Reference implementations of the parallel kernels.
#include <cmath>

#include "uhead/kernels.hpp"

namespace uhead::kernels {

std::vector<double> inverse_norms(MatrixView<const float> rows) {
  std::vector<double> inv(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    double s = 0.0;
    for (float v : rows.row(i))
      s += static_cast<double>(v) * v;
    require(s > 0.0 && std::isfinite(s), ErrorCode::InvalidArgument,
            "cosine: row " + std::to_string(i) + " has zero norm");
    inv[i] = 1.0 / std::sqrt(s);
  }
  return inv;
}

std::vector<std::size_t> nearest_cosine_serial(MatrixView<const float> queries,
                                               MatrixView<const float> database,
                                               std::span<const std::size_t> candidates,
                                               bool exclude_self) {
  require(queries.cols() == database.cols(), ErrorCode::DimensionMismatch,
          "nearest_cosine: query/database dimension mismatch");
  const auto qn = inverse_norms(queries);
  const auto dn = inverse_norms(database);
  std::vector<std::size_t> out(queries.rows(), 0);
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    auto q = queries.row(i);
    double best = -INFINITY;
    std::size_t best_j = database.rows();
    for (std::size_t j : candidates) {
      if (exclude_self && j == i)
        continue;
      auto r = database.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k)
        dot += static_cast<double>(q[k]) * r[k];
      const double sim = dot * qn[i] * dn[j];
      if (sim > best || (sim == best && j < best_j)) {
        best = sim;
        best_j = j;
      }
    }
    require(best_j < database.rows(), ErrorCode::InvalidArgument,
            "nearest_cosine: no candidate for query " + std::to_string(i));
    out[i] = best_j;
  }
  return out;
}

Matrix<double> squared_distances_serial(MatrixView<const double> x) {
  const std::size_t n = x.rows();
  Matrix<double> d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double t = x(i, k) - x(j, k);
        s += t * t;
      }
      d(i, j) = s;
    }
  return d;
}

double tsne_gradient_serial(const Matrix<double> &p, MatrixView<const double> y,
                            double exaggeration, MatrixView<double> grad) {
  const std::size_t n = y.rows();
  // Row sums of the unnormalized kernel, reduced in row order.
  std::vector<double> row_z(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j)
        continue;
      const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      row_z[i] += 1.0 / (1.0 + dx * dx + dy * dy);
    }
  double z = 0.0;
  for (double r : row_z)
    z += r;
  for (std::size_t i = 0; i < n; ++i) {
    double gx = 0.0, gy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j)
        continue;
      const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      const double w = 1.0 / (1.0 + dx * dx + dy * dy);
      const double coeff = (exaggeration * p(i, j) - w / z) * w;
      gx += coeff * dx;
      gy += coeff * dy;
    }
    grad(i, 0) = 4.0 * gx;
    grad(i, 1) = 4.0 * gy;
  }
  return z;
}

std::vector<float> head_predict_serial(const UncertaintyHead &head, MatrixView<const float> batch) {
  std::vector<float> out(batch.rows());
  for (std::size_t start = 0; start < batch.rows(); start += kPredictBlock) {
    const std::size_t len = std::min(kPredictBlock, batch.rows() - start);
    MatrixView<const float> block(batch.data().subspan(start * batch.cols(), len * batch.cols()), len,
                                  batch.cols());
    auto u = head_predict(head, block);
    std::copy(u.begin(), u.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return out;
}

} // namespace uhead::kernels
