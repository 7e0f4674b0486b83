// SPDX-License-Identifier: Apache-2.0
#include "uhead/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <tuple>

#include "uhead/binary_io.hpp"
#include "uhead/kernels.hpp"
#include "uhead/rng.hpp"

namespace uhead {
namespace {

constexpr int kMaxBisection = 64;
constexpr double kMinQ = 1e-12;

// tab10
constexpr const char *kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

void check_aligned(MatrixView<const double> coords, std::span<const std::uint32_t> labels,
                   std::span<const float> u) {
  require(coords.cols() == 2, ErrorCode::DimensionMismatch, "scatter: coordinates must be n x 2");
  require(labels.size() == coords.rows() && u.size() == coords.rows(), ErrorCode::DimensionMismatch,
          "scatter: labels/uncertainties not aligned with coordinates");
  for (double v : coords.data())
    require(std::isfinite(v), ErrorCode::NonFinite, "scatter: non-finite coordinate");
  for (float v : u)
    require(std::isfinite(v), ErrorCode::NonFinite, "scatter: non-finite uncertainty");
}

// Conditional row for squared distances `d` (self at index i excluded).
double row_entropy(std::span<const double> d, std::size_t i, double beta, std::span<double> out) {
  double mn = INFINITY;
  for (std::size_t j = 0; j < d.size(); ++j)
    if (j != i)
      mn = std::min(mn, d[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    out[j] = j == i ? 0.0 : std::exp(-beta * (d[j] - mn));
    z += out[j];
  }
  double h = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (j == i)
      continue;
    out[j] /= z;
    h += beta * (d[j] - mn) * out[j];
  }
  return std::log(z) + h;
}

} // namespace

void validate(const TsneConfig &c, std::size_t n) {
  require(n >= 3, ErrorCode::InvalidArgument, "tsne: need at least 3 points");
  require(std::isfinite(c.perplexity) && c.perplexity > 1.0, ErrorCode::InvalidArgument,
          "tsne: perplexity must exceed 1");
  require(c.perplexity < static_cast<double>(n), ErrorCode::InvalidArgument,
          "tsne: perplexity must be below the number of points");
  require(c.iterations >= 1, ErrorCode::InvalidArgument, "tsne: iterations must be positive");
  require(std::isfinite(c.learning_rate) && c.learning_rate > 0, ErrorCode::InvalidArgument,
          "tsne: learning_rate must be positive");
  require(c.early_exaggeration >= 1.0, ErrorCode::InvalidArgument, "tsne: exaggeration must be >= 1");
}

Affinities tsne_affinities(MatrixView<const float> emb, double perplexity) {
  TsneConfig probe;
  probe.perplexity = perplexity;
  validate(probe, emb.rows());
  for (float v : emb.data())
    require(std::isfinite(v), ErrorCode::NonFinite, "tsne: non-finite embedding");
  const std::size_t n = emb.rows();
  Matrix<double> x(n, emb.cols());
  std::copy(emb.data().begin(), emb.data().end(), x.data().begin());
  const auto d = kernels::squared_distances_parallel(x.view());

  Affinities a;
  a.conditional = Matrix<double>(n, n);
  a.row_perplexity.assign(n, 0.0);
  const double target = std::log(perplexity);

#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::vector<double> row(d.row(i).begin(), d.row(i).end());
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i)
        mean += row[j];
    mean = std::max(mean / static_cast<double>(n - 1), 1e-12);
    for (auto &v : row)
      v /= mean;
    auto out = a.conditional.row(i);
    double lo = -50.0, hi = 50.0, log_beta = 0.0;
    double h = row_entropy(row, i, 1.0, out);
    for (int it = 0; it < kMaxBisection && std::abs(h - target) > 1e-13; ++it) {
      if (h > target)
        lo = log_beta; // too flat, sharpen
      else
        hi = log_beta;
      log_beta = 0.5 * (lo + hi);
      h = row_entropy(row, i, std::exp(log_beta), out);
    }
    a.row_perplexity[i] = std::exp(h);
  }

  a.p = Matrix<double>(n, n);
  const double norm = 1.0 / (2.0 * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      a.p(i, j) = (a.conditional(i, j) + a.conditional(j, i)) * norm;
  return a;
}

double tsne_kl(const Matrix<double> &p, MatrixView<const double> y) {
  const std::size_t n = y.rows();
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
        z += 1.0 / (1.0 + dx * dx + dy * dy);
      }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || p(i, j) <= 0.0)
        continue;
      const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      const double q = std::max(1.0 / (1.0 + dx * dx + dy * dy) / z, kMinQ);
      kl += p(i, j) * std::log(p(i, j) / q);
    }
  return kl;
}

TsneResult tsne_embed(MatrixView<const float> emb, const TsneConfig &c) {
  validate(c, emb.rows());
  const auto aff = tsne_affinities(emb, c.perplexity);
  const std::size_t n = emb.rows();

  TsneResult r;
  r.coords = Matrix<double>(n, 2);
  Rng rng(c.seed);
  for (auto &v : r.coords.data())
    v = 1e-2 * rng.normal();
  r.initial_kl = tsne_kl(aff.p, r.coords.view());

  Matrix<double> grad(n, 2), update(n, 2), gains(n, 2, 1.0);
  for (std::uint32_t it = 0; it < c.iterations; ++it) {
    const double exag = it < c.exaggeration_iterations ? c.early_exaggeration : 1.0;
    const double momentum = it < c.momentum_switch ? c.initial_momentum : c.final_momentum;
    kernels::tsne_gradient_parallel(aff.p, r.coords.view(), exag, grad.view());
    for (std::size_t k = 0; k < n * 2; ++k) {
      const double g = grad.data()[k];
      double &gain = gains.data()[k];
      double &u = update.data()[k];
      gain = (g > 0) != (u > 0) ? gain + 0.2 : gain * 0.8;
      gain = std::max(gain, 0.01);
      u = momentum * u - c.learning_rate * gain * g;
      r.coords.data()[k] += u;
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += r.coords(i, 0);
      my += r.coords(i, 1);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      r.coords(i, 0) -= mx;
      r.coords(i, 1) -= my;
      require(std::isfinite(r.coords(i, 0)) && std::isfinite(r.coords(i, 1)), ErrorCode::NonFinite,
              "tsne: non-finite coordinates at iteration " + std::to_string(it));
    }
  }
  r.final_kl = tsne_kl(aff.p, r.coords.view());
  return r;
}

void validate(const ScatterStyle &s) {
  require(s.base_radius > 0 && s.radius_scale >= 0, ErrorCode::InvalidArgument,
          "scatter: radius must be positive");
  require(s.min_opacity >= 0 && s.min_opacity <= s.max_opacity && s.max_opacity <= 1.0,
          ErrorCode::InvalidArgument, "scatter: opacity bounds must satisfy 0 <= min <= max <= 1");
  require(s.canvas > 2 * s.padding && s.padding >= 0, ErrorCode::InvalidArgument, "scatter: canvas too small");
}

std::vector<Circle> scatter_circles(MatrixView<const double> coords, std::span<const std::uint32_t> labels,
                                    std::span<const float> u, const ScatterStyle &s) {
  validate(s);
  check_aligned(coords, labels, u);
  const std::size_t n = coords.rows();
  std::vector<Circle> out;
  if (n == 0)
    return out;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    x0 = std::min(x0, coords(i, 0));
    x1 = std::max(x1, coords(i, 0));
    y0 = std::min(y0, coords(i, 1));
    y1 = std::max(y1, coords(i, 1));
  }
  const auto [umin, umax] = std::minmax_element(u.begin(), u.end());
  const double urange = static_cast<double>(*umax) - *umin;
  const double span = std::max({x1 - x0, y1 - y0, 1e-12});
  const double scale = (s.canvas - 2 * s.padding) / span;
  for (std::size_t i = 0; i < n; ++i) {
    const double nu = urange > 0 ? (static_cast<double>(u[i]) - *umin) / urange : 0.0;
    Circle c;
    c.cx = s.padding + (coords(i, 0) - x0) * scale;
    c.cy = s.padding + (y1 - coords(i, 1)) * scale;
    c.r = s.base_radius + s.radius_scale * nu;
    c.opacity = std::clamp(s.max_opacity - (s.max_opacity - s.min_opacity) * nu, s.min_opacity, s.max_opacity);
    c.label = labels[i];
    out.push_back(c);
  }
  // Large, faint circles first so the confident core stays visible on top.
  std::sort(out.begin(), out.end(), [](const Circle &a, const Circle &b) {
    if (a.r != b.r)
      return a.r > b.r;
    return std::tie(a.cx, a.cy, a.label, a.opacity) < std::tie(b.cx, b.cy, b.label, b.opacity);
  });
  return out;
}

std::string render_scatter_svg(MatrixView<const double> coords, std::span<const std::uint32_t> labels,
                               std::span<const float> u, const ScatterStyle &s) {
  const auto circles = scatter_circles(coords, labels, u, s);
  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\">\n",
                s.canvas, s.canvas, s.canvas, s.canvas);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto &c : circles) {
    std::snprintf(buf, sizeof buf,
                  "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"%.3f\" fill=\"%s\" fill-opacity=\"%.4f\"/>\n", c.cx,
                  c.cy, c.r, kPalette[c.label % 10], c.opacity);
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

void render_scatter(MatrixView<const double> coords, std::span<const std::uint32_t> labels,
                    std::span<const float> u, const ScatterStyle &s, const std::filesystem::path &path) {
  write_text_atomic(path, render_scatter_svg(coords, labels, u, s));
}

std::string coordinate_table(MatrixView<const double> coords, std::span<const std::uint32_t> labels,
                             std::span<const float> u) {
  check_aligned(coords, labels, u);
  std::string s = "# x y label uncertainty\n";
  char buf[160];
  for (std::size_t i = 0; i < coords.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %u %.9g\n", coords(i, 0), coords(i, 1), labels[i],
                  static_cast<double>(u[i]));
    s += buf;
  }
  return s;
}

} // namespace uhead
