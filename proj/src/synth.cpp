// SPDX-License-Identifier: Apache-2.0
#include "uhead/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "uhead/eval.hpp"
#include "uhead/rng.hpp"

namespace uhead {
namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

void check_point(const SyntheticOracle &o, std::span<const double> x) {
  require(x.size() == o.embed_dim, ErrorCode::DimensionMismatch, "synth: point dimension mismatch");
}

} // namespace

void validate(const SyntheticOracle &o) {
  require(o.n_classes >= 2, ErrorCode::InvalidArgument, "synth: need at least 2 classes");
  require(o.embed_dim >= 1, ErrorCode::InvalidArgument, "synth: embed_dim must be >= 1");
  require(o.n_classes != 2 || o.embed_dim >= 1, ErrorCode::InvalidArgument, "synth: embed_dim");
  require(std::isfinite(o.mean_scale) && o.mean_scale > 0, ErrorCode::InvalidArgument,
          "synth: mean_scale must be positive");
  require(std::isfinite(o.sigma) && o.sigma > 0, ErrorCode::InvalidArgument, "synth: sigma must be > 0");
  require(o.noise_max >= 0 && o.noise_max <= 0.5, ErrorCode::InvalidArgument,
          "synth: noise_max must lie in [0, 0.5]");
  require(std::isfinite(o.noise_width) && o.noise_width >= 0, ErrorCode::InvalidArgument,
          "synth: noise_width must be >= 0");
  require(std::isfinite(o.view_jitter) && o.view_jitter >= 0, ErrorCode::InvalidArgument,
          "synth: view_jitter must be >= 0");
  require(o.offset.empty() || o.offset.size() == o.embed_dim, ErrorCode::DimensionMismatch,
          "synth: offset must be empty or have embed_dim entries");
}

Matrix<double> class_means(const SyntheticOracle &o) {
  validate(o);
  Matrix<double> m(o.n_classes, o.embed_dim);
  if (o.n_classes == 2) {
    m(0, 0) = o.mean_scale;
    m(1, 0) = -o.mean_scale;
  } else if (o.n_classes <= o.embed_dim) {
    for (std::size_t c = 0; c < o.n_classes; ++c)
      m(c, c) = o.mean_scale;
  } else {
    Rng rng(derive_seed(o.seed, "class_means"));
    for (std::size_t c = 0; c < o.n_classes; ++c) {
      double n2 = 0.0;
      for (auto &v : m.row(c)) {
        v = rng.normal();
        n2 += v * v;
      }
      for (auto &v : m.row(c))
        v *= o.mean_scale / std::sqrt(n2);
    }
  }
  if (!o.offset.empty())
    for (std::size_t c = 0; c < o.n_classes; ++c)
      for (std::size_t k = 0; k < o.embed_dim; ++k)
        m(c, k) += o.offset[k];
  for (std::size_t a = 0; a < o.n_classes; ++a)
    for (std::size_t b = a + 1; b < o.n_classes; ++b)
      require(sq_dist(m.row(a), m.row(b)) > 0, ErrorCode::InvalidArgument, "synth: coinciding means");
  return m;
}

std::vector<double> class_posterior(const SyntheticOracle &o, std::span<const double> x) {
  check_point(o, x);
  const auto m = class_means(o);
  std::vector<double> logit(o.n_classes);
  for (std::size_t c = 0; c < o.n_classes; ++c)
    logit[c] = -sq_dist(x, m.row(c)) / (2.0 * o.sigma * o.sigma);
  const double mx = *std::max_element(logit.begin(), logit.end());
  double z = 0.0;
  for (auto &l : logit) {
    l = std::exp(l - mx);
    z += l;
  }
  for (auto &l : logit)
    l /= z;
  return logit;
}

double flip_probability(const SyntheticOracle &o, std::span<const double> x) {
  check_point(o, x);
  if (o.noise_max == 0.0)
    return 0.0;
  if (o.noise_width == 0.0)
    return o.noise_max;
  const auto m = class_means(o);
  std::size_t a = 0, b = 1;
  std::vector<double> d2(o.n_classes);
  for (std::size_t c = 0; c < o.n_classes; ++c)
    d2[c] = sq_dist(x, m.row(c));
  if (d2[b] < d2[a])
    std::swap(a, b);
  for (std::size_t c = 2; c < o.n_classes; ++c) {
    if (d2[c] < d2[a]) {
      b = a;
      a = c;
    } else if (d2[c] < d2[b]) {
      b = c;
    }
  }
  const double dist = (d2[b] - d2[a]) / (2.0 * std::sqrt(sq_dist(m.row(a), m.row(b))));
  return o.noise_max * std::exp(-dist * dist / (2.0 * o.noise_width * o.noise_width));
}

std::vector<double> observed_posterior(const SyntheticOracle &o, std::span<const double> x) {
  auto p = class_posterior(o, x);
  const double rho = flip_probability(o, x);
  const double spread = rho / static_cast<double>(o.n_classes - 1);
  for (auto &v : p)
    v = v * (1.0 - rho) + (1.0 - v) * spread;
  return p;
}

double bayes_risk(const SyntheticOracle &o, std::span<const double> x) {
  const auto q = observed_posterior(o, x);
  return std::max(0.0, 1.0 - *std::max_element(q.begin(), q.end()));
}

ClassifierHead oracle_classifier(const SyntheticOracle &o) {
  const auto m = class_means(o);
  const double s2 = o.sigma * o.sigma;
  Matrix<float> w(o.n_classes, o.embed_dim);
  std::vector<float> b(o.n_classes);
  for (std::size_t c = 0; c < o.n_classes; ++c) {
    double n2 = 0.0;
    for (std::size_t k = 0; k < o.embed_dim; ++k) {
      w(c, k) = static_cast<float>(m(c, k) / s2);
      n2 += m(c, k) * m(c, k);
    }
    b[c] = static_cast<float>(-n2 / (2.0 * s2));
  }
  return ClassifierHead(std::move(w), std::move(b));
}

SynthData synth_generate(const SyntheticOracle &o, std::size_t n_samples, std::size_t n_epochs) {
  validate(o);
  require(n_samples >= o.n_classes, ErrorCode::InvalidArgument, "synth: n_samples must be >= n_classes");
  require(n_epochs >= 1 && n_epochs <= 0xffff, ErrorCode::InvalidArgument, "synth: bad n_epochs");
  const auto means = class_means(o);
  const std::size_t d = o.embed_dim, C = o.n_classes;
  const std::uint64_t base_seed = derive_seed(o.seed, "base");
  const std::uint64_t view_seed = o.view_seed ? *o.view_seed : derive_seed(o.seed, "views");

  Matrix<double> base(n_samples, d);
  std::vector<std::uint32_t> true_labels(n_samples), labels(n_samples);
  std::vector<double> flip(n_samples), risk(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    Rng rng(derive_seed(base_seed, i));
    const auto c = static_cast<std::uint32_t>(i % C);
    auto x = base.row(i);
    for (std::size_t k = 0; k < d; ++k)
      x[k] = means(c, k) + o.sigma * rng.normal();
    true_labels[i] = c;
    flip[i] = flip_probability(o, x);
    auto y = c;
    if (rng.uniform() < flip[i]) {
      const auto shift = static_cast<std::uint32_t>(1 + rng.below(C - 1));
      y = static_cast<std::uint32_t>((c + shift) % C);
    }
    labels[i] = y;
    risk[i] = bayes_risk(o, x);
  }

  std::vector<Matrix<float>> views;
  for (std::size_t e = 0; e < n_epochs; ++e) {
    Matrix<float> v(n_samples, d);
    for (std::size_t i = 0; i < n_samples; ++i) {
      Rng rng(derive_seed(view_seed, i, e + 1));
      for (std::size_t k = 0; k < d; ++k)
        v(i, k) = static_cast<float>(base(i, k) + o.view_jitter * o.sigma * rng.normal());
    }
    views.push_back(std::move(v));
  }

  auto clf = oracle_classifier(o);
  auto cache = make_cache(std::move(views), labels, static_cast<std::uint32_t>(C), &clf);
  return {std::move(cache), std::move(clf), std::move(base), std::move(true_labels), std::move(flip),
          std::move(risk)};
}

double oracle_ceiling_r_auroc(MatrixView<const float> emb, std::span<const std::uint32_t> labels,
                              std::span<const double> risk) {
  return r_auroc(emb, labels, risk);
}

double oracle_ceiling_r_auroc(const CacheContents &cache, std::span<const double> risk, std::size_t epoch) {
  require(epoch < cache.embeddings.size(), ErrorCode::InvalidArgument, "oracle ceiling: epoch out of range");
  return oracle_ceiling_r_auroc(cache.embeddings[epoch].view(), cache.labels, risk);
}

std::vector<std::uint8_t> multilabel_flags(std::span<const double> risk, double threshold) {
  std::vector<std::uint8_t> f(risk.size());
  for (std::size_t i = 0; i < risk.size(); ++i)
    f[i] = risk[i] > threshold ? 1 : 0;
  return f;
}

std::string bayes_risk_text(std::span<const double> risk) {
  std::string s;
  char buf[64];
  for (double r : risk) {
    std::snprintf(buf, sizeof buf, "%.17g\n", r);
    s += buf;
  }
  return s;
}

std::vector<double> parse_bayes_risk_text(const std::string &text) {
  std::istringstream in(text);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    char *end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    require(end && *end == '\0' && std::isfinite(v) && v >= 0 && v <= 1, ErrorCode::Corrupt,
            "bayes risk file: bad value '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

} // namespace uhead
