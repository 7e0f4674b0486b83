// Shared helpers for the unit tests. The reference implementations here are
// deliberately naive and share no code with the library.
#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <span>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "uhead/head.hpp"
#include "uhead/matrix.hpp"

namespace testing {

inline uhead::Matrix<float> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                          double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, scale);
  uhead::Matrix<float> m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      m(i, j) = static_cast<float>(dist(gen));
  return m;
}

inline uhead::Matrix<double> to_double(const uhead::Matrix<float> &m) {
  uhead::Matrix<double> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out(i, j) = m(i, j);
  return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string &tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("uhead-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;
  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
  static int &counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

// ---- oracles ---------------------------------------------------------------

/// Exhaustive pair count: P(score_pos > score_neg) + 0.5 P(tie).
inline double auroc_pairs(const std::vector<double> &scores, const std::vector<std::uint8_t> &pos) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!pos[i])
      continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (pos[j])
        continue;
      den += 1.0;
      if (scores[i] > scores[j])
        num += 1.0;
      else if (scores[i] == scores[j])
        num += 0.5;
    }
  }
  return num / den;
}

/// Brute-force cosine 1-NN in long double; ties go to the smaller index.
inline std::vector<std::size_t> nn1_brute(const uhead::Matrix<float> &x) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<long double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    long double s = 0;
    for (std::size_t k = 0; k < d; ++k)
      s += static_cast<long double>(x(i, k)) * x(i, k);
    norm[i] = std::sqrt(s);
  }
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    long double best = -2;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i)
        continue;
      long double s = 0;
      for (std::size_t k = 0; k < d; ++k)
        s += static_cast<long double>(x(i, k)) * x(j, k);
      s /= norm[i] * norm[j];
      if (s > best) {
        best = s;
        out[i] = j;
      }
    }
  }
  return out;
}

/// Scalar-loop forward pass of the head in double.
inline std::vector<double> head_forward_naive(const uhead::UncertaintyHead64 &head, const uhead::Matrix<double> &x) {
  const auto &s = head.shape();
  const auto &p = head.params();
  const std::size_t d = s.input_dim, h = s.hidden_dim;
  auto leaky = [&](double z) { return z > 0 ? z : s.leaky_slope * z; };
  std::vector<double> out(x.rows());
  std::vector<double> a1(h), a2(h);
  for (std::size_t n = 0; n < x.rows(); ++n) {
    for (std::size_t j = 0; j < h; ++j) {
      double z = p.b1[j];
      for (std::size_t k = 0; k < d; ++k)
        z += x(n, k) * p.w1[k * h + j];
      a1[j] = leaky(z);
    }
    for (std::size_t j = 0; j < h; ++j) {
      double z = p.b2[j];
      for (std::size_t k = 0; k < h; ++k)
        z += a1[k] * p.w2[k * h + j];
      a2[j] = leaky(z);
    }
    double z = p.b3[0];
    for (std::size_t k = 0; k < h; ++k)
      z += a2[k] * p.w3[k];
    const double bz = s.softplus_beta * z;
    out[n] = bz > s.softplus_threshold ? z : std::log1p(std::exp(bz)) / s.softplus_beta;
  }
  return out;
}

/// Central finite differences (step h) of L = sum_n g_n u_n against
/// head_backward, over every parameter. Returns the max relative error
/// |a - f| / max(|a|, |f|, floor).
inline double fd_max_relative_error(const uhead::UncertaintyHead64 &head, const uhead::Matrix<double> &x,
                                    const std::vector<double> &g, double h = 1e-5, double floor = 1e-6) {
  auto fwd = uhead::head_forward(head, x);
  const auto grads = uhead::head_backward(head, fwd.cache, std::span<const double>(g));
  auto objective = [&](const uhead::UncertaintyHead64 &hd) {
    const auto u = head_forward_naive(hd, x);
    double s = 0;
    for (std::size_t n = 0; n < u.size(); ++n)
      s += g[n] * u[n];
    return s;
  };
  double worst = 0.0;
  auto probe = head;
  const auto analytic = grads.tensors();
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t k = 0; k < analytic[t].size(); ++k) {
      auto &v = probe.mutable_params().tensors()[t][k];
      const double orig = v;
      v = orig + h;
      const double fp = objective(probe);
      v = orig - h;
      const double fm = objective(probe);
      v = orig;
      const double f = (fp - fm) / (2 * h);
      const double a = analytic[t][k];
      worst = std::max(worst, std::abs(a - f) / std::max({std::abs(a), std::abs(f), floor}));
    }
  }
  return worst;
}

/// Smallest |pre-activation| over the hidden layers; inputs whose value is
/// tiny sit on a LeakyReLU kink where differences are meaningless.
inline double min_abs_preactivation(const uhead::UncertaintyHead64 &head, const uhead::Matrix<double> &x) {
  const auto fwd = uhead::head_forward(head, x);
  double m = INFINITY;
  for (const auto *z : {&fwd.cache.z1, &fwd.cache.z2})
    for (std::size_t i = 0; i < z->rows(); ++i)
      for (std::size_t j = 0; j < z->cols(); ++j)
        m = std::min(m, std::abs((*z)(i, j)));
  return m;
}

} // namespace testing
