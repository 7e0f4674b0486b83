// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "uhead/kernels.hpp"

namespace uhead::kernels {
namespace {

// Query rows per tile; a tile of queries sweeps the database once.
constexpr std::size_t kQueryTile = 32;

// Rethrows the first exception raised inside a parallel region.
class ExceptionSlot {
public:
  template <class F> void run(F &&f) noexcept {
    try {
      f();
    } catch (...) {
#pragma omp critical(uhead_exception_slot)
      if (!error_)
        error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_)
      std::rethrow_exception(error_);
  }

private:
  std::exception_ptr error_;
};

} // namespace

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::vector<std::size_t> nearest_cosine_parallel(MatrixView<const float> queries,
                                                 MatrixView<const float> database,
                                                 std::span<const std::size_t> candidates,
                                                 bool exclude_self) {
  require(queries.cols() == database.cols(), ErrorCode::DimensionMismatch,
          "nearest_cosine: query/database dimension mismatch");
  const auto qn = inverse_norms(queries);
  const auto dn = inverse_norms(database);
  const std::size_t nq = queries.rows(), dim = queries.cols();
  const std::size_t n_tiles = (nq + kQueryTile - 1) / kQueryTile;
  std::vector<std::size_t> out(nq, database.rows());

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(n_tiles); ++t) {
    const std::size_t lo = static_cast<std::size_t>(t) * kQueryTile;
    const std::size_t hi = std::min(nq, lo + kQueryTile);
    double best[kQueryTile];
    std::fill(best, best + kQueryTile, -INFINITY);
    for (std::size_t j : candidates) {
      auto r = database.row(j);
      for (std::size_t i = lo; i < hi; ++i) {
        if (exclude_self && j == i)
          continue;
        auto q = queries.row(i);
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k)
          dot += static_cast<double>(q[k]) * r[k];
        const double sim = dot * qn[i] * dn[j];
        double &b = best[i - lo];
        if (sim > b || (sim == b && j < out[i])) {
          b = sim;
          out[i] = j;
        }
      }
    }
  }
  for (std::size_t i = 0; i < nq; ++i)
    require(out[i] < database.rows(), ErrorCode::InvalidArgument,
            "nearest_cosine: no candidate for query " + std::to_string(i));
  return out;
}

Matrix<double> squared_distances_parallel(MatrixView<const double> x) {
  const std::size_t n = x.rows(), dim = x.cols();
  Matrix<double> d(n, n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double t = x(i, k) - x(j, k);
        s += t * t;
      }
      d(i, j) = s;
    }
  }
  return d;
}

double tsne_gradient_parallel(const Matrix<double> &p, MatrixView<const double> y,
                              double exaggeration, MatrixView<double> grad) {
  const auto n = static_cast<std::ptrdiff_t>(y.rows());
  std::vector<double> row_z(y.rows(), 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double acc = 0.0;
    for (std::size_t j = 0; j < y.rows(); ++j) {
      if (i == j)
        continue;
      const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      acc += 1.0 / (1.0 + dx * dx + dy * dy);
    }
    row_z[i] = acc;
  }
  double z = 0.0;
  for (double r : row_z)
    z += r;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double gx = 0.0, gy = 0.0;
    for (std::size_t j = 0; j < y.rows(); ++j) {
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

std::vector<float> head_predict_parallel(const UncertaintyHead &head, MatrixView<const float> batch) {
  std::vector<float> out(batch.rows());
  const std::size_t n_blocks = (batch.rows() + kPredictBlock - 1) / kPredictBlock;
  ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(n_blocks); ++b) {
    slot.run([&] {
      const std::size_t start = static_cast<std::size_t>(b) * kPredictBlock;
      const std::size_t len = std::min(kPredictBlock, batch.rows() - start);
      MatrixView<const float> block(batch.data().subspan(start * batch.cols(), len * batch.cols()),
                                    len, batch.cols());
      auto u = head_predict(head, block);
      std::copy(u.begin(), u.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
    });
  }
  slot.rethrow();
  return out;
}

} // namespace uhead::kernels
