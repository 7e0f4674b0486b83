// SPDX-License-Identifier: Apache-2.0
#include "uhead/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "uhead/kernels.hpp"
#include "uhead/rng.hpp"

namespace uhead {
namespace {

template <class T> double auroc_impl(std::span<const T> scores, std::span<const std::uint8_t> pos) {
  require(scores.size() == pos.size(), ErrorCode::DimensionMismatch,
          "auroc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t n_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(!std::isnan(static_cast<double>(scores[i])), ErrorCode::NonFinite, "auroc: NaN score");
    n_pos += pos[i] ? 1 : 0;
  }
  const std::uint64_t n_neg = scores.size() - n_pos;
  require(n_pos > 0 && n_neg > 0, ErrorCode::UndefinedMetric,
          "auroc: need at least one positive and one negative");
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney U, accumulated per tie group in integers.
  std::uint64_t twice_u = 0, neg_below = 0;
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo;
    std::uint64_t p = 0, q = 0;
    while (hi < order.size() && scores[order[hi]] == scores[order[lo]]) {
      (pos[order[hi]] ? p : q) += 1;
      ++hi;
    }
    twice_u += 2 * p * neg_below + p * q;
    neg_below += q;
    lo = hi;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

template <class T>
double r_auroc_impl(MatrixView<const float> emb, std::span<const std::uint32_t> labels,
                    std::span<const T> u) {
  require(u.size() == emb.rows(), ErrorCode::DimensionMismatch,
          "r_auroc: uncertainties not aligned with embeddings");
  const auto correct = nn1_correctness(emb, labels);
  std::vector<std::uint8_t> wrong(correct.size());
  std::size_t n_wrong = 0;
  for (std::size_t i = 0; i < correct.size(); ++i) {
    wrong[i] = correct[i] ? 0 : 1;
    n_wrong += wrong[i];
  }
  require(n_wrong > 0 && n_wrong < wrong.size(), ErrorCode::UndefinedMetric,
          n_wrong == 0 ? "r_auroc: undefined, every nearest neighbour is correct"
                       : "r_auroc: undefined, every nearest neighbour is wrong");
  return auroc_impl(u, std::span<const std::uint8_t>(wrong));
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo;
    while (hi < order.size() && v[order[hi]] == v[order[lo]])
      ++hi;
    const double r = 0.5 * static_cast<double>(lo + hi - 1);
    for (std::size_t k = lo; k < hi; ++k)
      ranks[order[k]] = r;
    lo = hi;
  }
  return ranks;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

} // namespace

double auroc(std::span<const double> s, std::span<const std::uint8_t> p) { return auroc_impl(s, p); }
double auroc(std::span<const float> s, std::span<const std::uint8_t> p) { return auroc_impl(s, p); }

std::vector<std::size_t> nn1(MatrixView<const float> emb) {
  require(emb.rows() >= 2, ErrorCode::InvalidArgument, "nn1: need at least 2 rows");
  std::vector<std::size_t> all(emb.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return kernels::nearest_cosine_parallel(emb, emb, all, true);
}

std::vector<std::uint8_t> nn1_correctness(MatrixView<const float> emb,
                                          std::span<const std::uint32_t> labels) {
  require(labels.size() == emb.rows(), ErrorCode::DimensionMismatch,
          "nn1: labels not aligned with embeddings");
  const auto nn = nn1(emb);
  std::vector<std::uint8_t> correct(nn.size());
  for (std::size_t i = 0; i < nn.size(); ++i)
    correct[i] = labels[nn[i]] == labels[i] ? 1 : 0;
  return correct;
}

double recall_at_1(MatrixView<const float> emb, std::span<const std::uint32_t> labels) {
  const auto c = nn1_correctness(emb, labels);
  const auto hits = std::accumulate(c.begin(), c.end(), std::size_t{0});
  return static_cast<double>(hits) / static_cast<double>(c.size());
}

double r_auroc(MatrixView<const float> e, std::span<const std::uint32_t> l, std::span<const float> u) {
  return r_auroc_impl(e, l, u);
}
double r_auroc(MatrixView<const float> e, std::span<const std::uint32_t> l, std::span<const double> u) {
  return r_auroc_impl(e, l, u);
}

double ambiguity_auroc(std::span<const float> u, std::span<const std::uint8_t> is_multilabel) {
  return auroc(u, is_multilabel);
}

double id_ood_auroc(std::span<const float> id, std::span<const float> ood) {
  require(!id.empty() && !ood.empty(), ErrorCode::InvalidArgument,
          "id_ood_auroc: both sides must be nonempty");
  std::vector<float> all(id.begin(), id.end());
  all.insert(all.end(), ood.begin(), ood.end());
  std::vector<std::uint8_t> is_ood(all.size(), 0);
  std::fill(is_ood.begin() + static_cast<std::ptrdiff_t>(id.size()), is_ood.end(), 1);
  return auroc(std::span<const float>(all), is_ood);
}

const char *to_string(Perturbation p) noexcept {
  switch (p) {
  case Perturbation::GaussianNoise: return "gaussian_noise";
  case Perturbation::CoordinateMask: return "coordinate_mask";
  case Perturbation::Rescale: return "rescale";
  }
  return "unknown";
}

Perturbation perturbation_from_string(const std::string &name) {
  for (auto p : {Perturbation::GaussianNoise, Perturbation::CoordinateMask, Perturbation::Rescale})
    if (name == to_string(p))
      return p;
  fail(ErrorCode::InvalidArgument, "unknown perturbation '" + name + "'");
}

Matrix<float> perturb(MatrixView<const float> x, Perturbation kind, double s, std::uint64_t seed) {
  require(std::isfinite(s) && s >= 0, ErrorCode::InvalidArgument, "perturb: severity must be >= 0");
  Matrix<float> out(x.rows(), x.cols(), std::vector<float>(x.data().begin(), x.data().end()));
  if (s == 0.0)
    return out;
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = out.row(i);
    switch (kind) {
    case Perturbation::GaussianNoise: {
      Rng rng(derive_seed(seed, i, 1));
      double norm2 = 0.0;
      for (float v : row)
        norm2 += static_cast<double>(v) * v;
      const double norm = std::sqrt(norm2);
      const double scale = s * norm / std::sqrt(static_cast<double>(d));
      std::vector<double> y(d);
      double ynorm2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        y[k] = row[k] + scale * rng.normal();
        ynorm2 += y[k] * y[k];
      }
      const double back = ynorm2 > 0 ? norm / std::sqrt(ynorm2) : 0.0;
      for (std::size_t k = 0; k < d; ++k)
        row[k] = static_cast<float>(y[k] * back);
      break;
    }
    case Perturbation::CoordinateMask: {
      const auto order = random_permutation(d, derive_seed(seed, i, 2));
      const auto k = static_cast<std::size_t>(std::llround(std::min(s, 1.0) * static_cast<double>(d)));
      for (std::size_t t = 0; t < k; ++t)
        row[order[t]] = 0.0f;
      break;
    }
    case Perturbation::Rescale:
      for (auto &v : row)
        v = static_cast<float>(v / (1.0 + s));
      break;
    }
  }
  return out;
}

double median(std::vector<double> v) {
  require(!v.empty(), ErrorCode::InvalidArgument, "median of empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1)
    return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

DeteriorationCurve deterioration_sweep(const UncertaintyHead &head, MatrixView<const float> emb,
                                       Perturbation kind, std::span<const double> severities,
                                       std::uint64_t seed) {
  require(!severities.empty(), ErrorCode::InvalidArgument, "deterioration_sweep: no severities");
  require(severities.front() == 0.0, ErrorCode::InvalidArgument,
          "deterioration_sweep: severities must start at 0");
  for (std::size_t k = 1; k < severities.size(); ++k)
    require(severities[k] > severities[k - 1], ErrorCode::InvalidArgument,
            "deterioration_sweep: severities must be strictly increasing");
  DeteriorationCurve curve;
  curve.perturbation = kind;
  for (double s : severities) {
    const auto x = perturb(emb, kind, s, seed);
    const auto u = kernels::head_predict_parallel(head, x.view());
    curve.severities.push_back(s);
    curve.medians.push_back(median(std::vector<double>(u.begin(), u.end())));
  }
  return curve;
}

double pairwise_ranking_accuracy(std::span<const float> u, std::span<const float> t) {
  require(u.size() == t.size(), ErrorCode::DimensionMismatch,
          "pairwise_ranking_accuracy: length mismatch");
  const auto n = static_cast<std::ptrdiff_t>(u.size());
  std::uint64_t twice_hits = 0, pairs = 0;
#pragma omp parallel for schedule(dynamic, 16) reduction(+ : twice_hits, pairs)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = i + 1; j < u.size(); ++j) {
      if (t[i] == t[j])
        continue;
      ++pairs;
      if (u[i] == u[j])
        twice_hits += 1;
      else if ((u[i] > u[j]) == (t[i] > t[j]))
        twice_hits += 2;
    }
  }
  require(pairs > 0, ErrorCode::UndefinedMetric, "pairwise_ranking_accuracy: all targets tied");
  return static_cast<double>(twice_hits) / (2.0 * static_cast<double>(pairs));
}

double spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && a.size() >= 2, ErrorCode::InvalidArgument,
          "spearman: need two aligned samples of length >= 2");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  require(saa > 0 && sbb > 0, ErrorCode::UndefinedMetric, "spearman: constant input");
  return sab / std::sqrt(saa * sbb);
}

void validate(const EvalReport &r) {
  auto unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  require(unit(r.r_auroc) && unit(r.recall_at_1), ErrorCode::InvalidArgument,
          "eval report: metrics must lie in [0, 1]");
  for (const auto &m : {r.ambiguity_auroc, r.id_ood_auroc, r.oracle_ceiling_r_auroc})
    require(!m || unit(*m), ErrorCode::InvalidArgument, "eval report: metrics must lie in [0, 1]");
  if (r.deterioration) {
    const auto &c = *r.deterioration;
    require(c.severities.size() == c.medians.size(), ErrorCode::InvalidArgument,
            "eval report: curve columns differ in length");
    for (std::size_t k = 1; k < c.severities.size(); ++k)
      require(c.severities[k] > c.severities[k - 1], ErrorCode::InvalidArgument,
              "eval report: severities must be strictly increasing");
  }
}

std::string to_text(const EvalReport &r) {
  validate(r);
  std::string s;
  s += "dataset=" + r.dataset + "\n";
  s += "r_auroc=" + fmt(r.r_auroc) + "\n";
  s += "recall_at_1=" + fmt(r.recall_at_1) + "\n";
  if (r.ambiguity_auroc)
    s += "ambiguity_auroc=" + fmt(*r.ambiguity_auroc) + "\n";
  if (r.id_ood_auroc)
    s += "id_ood_auroc=" + fmt(*r.id_ood_auroc) + "\n";
  if (r.oracle_ceiling_r_auroc)
    s += "oracle_ceiling_r_auroc=" + fmt(*r.oracle_ceiling_r_auroc) + "\n";
  if (r.spearman_bayes_risk)
    s += "spearman_bayes_risk=" + fmt(*r.spearman_bayes_risk) + "\n";
  if (r.deterioration) {
    s += std::string("deterioration_perturbation=") + to_string(r.deterioration->perturbation) + "\n";
    for (std::size_t k = 0; k < r.deterioration->severities.size(); ++k)
      s += "deterioration_median@" + fmt(r.deterioration->severities[k]) + "=" +
           fmt(r.deterioration->medians[k]) + "\n";
  }
  return s;
}

std::string to_json(const EvalReport &r) {
  validate(r);
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset;
  j["r_auroc"] = r.r_auroc;
  j["recall_at_1"] = r.recall_at_1;
  if (r.ambiguity_auroc)
    j["ambiguity_auroc"] = *r.ambiguity_auroc;
  if (r.id_ood_auroc)
    j["id_ood_auroc"] = *r.id_ood_auroc;
  if (r.oracle_ceiling_r_auroc)
    j["oracle_ceiling_r_auroc"] = *r.oracle_ceiling_r_auroc;
  if (r.spearman_bayes_risk)
    j["spearman_bayes_risk"] = *r.spearman_bayes_risk;
  if (r.deterioration) {
    j["deterioration"] = {{"perturbation", to_string(r.deterioration->perturbation)},
                          {"severities", r.deterioration->severities},
                          {"medians", r.deterioration->medians}};
  }
  return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string &text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.r_auroc = j.at("r_auroc").get<double>();
    r.recall_at_1 = j.at("recall_at_1").get<double>();
    auto opt = [&j](const char *key) -> std::optional<double> {
      if (j.contains(key))
        return j.at(key).get<double>();
      return std::nullopt;
    };
    r.ambiguity_auroc = opt("ambiguity_auroc");
    r.id_ood_auroc = opt("id_ood_auroc");
    r.oracle_ceiling_r_auroc = opt("oracle_ceiling_r_auroc");
    r.spearman_bayes_risk = opt("spearman_bayes_risk");
    if (j.contains("deterioration")) {
      const auto &d = j.at("deterioration");
      DeteriorationCurve c;
      c.perturbation = perturbation_from_string(d.at("perturbation").get<std::string>());
      c.severities = d.at("severities").get<std::vector<double>>();
      c.medians = d.at("medians").get<std::vector<double>>();
      r.deterioration = std::move(c);
    }
    validate(r);
    return r;
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorCode::Corrupt, std::string("eval report: ") + e.what());
  }
}

std::string curve_table(const DeteriorationCurve &c) {
  std::string s = "# severity median_uncertainty (" + std::string(to_string(c.perturbation)) + ")\n";
  char buf[96];
  for (std::size_t k = 0; k < c.severities.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.6g %.9g\n", c.severities[k], c.medians[k]);
    s += buf;
  }
  return s;
}

} // namespace uhead
