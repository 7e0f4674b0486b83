// SPDX-License-Identifier: Apache-2.0
#include "uhead/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include <json.hpp>

#include "uhead/kernels.hpp"

namespace uhead {

const char *to_string(CleanMode mode) noexcept {
  return mode == CleanMode::GlobalQuantile ? "global_quantile" : "per_class_quantile";
}

CleanMode clean_mode_from_string(const std::string &name) {
  if (name == "global_quantile")
    return CleanMode::GlobalQuantile;
  if (name == "per_class_quantile")
    return CleanMode::PerClassQuantile;
  fail(ErrorCode::InvalidArgument, "unknown clean mode '" + name + "'");
}

void validate(const RetrievalPolicy &p) {
  auto ok = [](double f) { return std::isfinite(f) && f >= 0.0 && f < 1.0; };
  require(ok(p.query_reject_fraction), ErrorCode::InvalidArgument,
          "retrieval: query_reject_fraction must lie in [0, 1)");
  require(ok(p.database_clean_fraction), ErrorCode::InvalidArgument,
          "retrieval: database_clean_fraction must lie in [0, 1)");
}

std::size_t quantile_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

std::vector<std::size_t> most_uncertain(std::span<const float> u, std::span<const std::size_t> candidates,
                                        std::size_t k) {
  std::vector<std::size_t> order(candidates.begin(), candidates.end());
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return u[a] != u[b] ? u[a] > u[b] : a > b; });
  order.resize(k);
  return order;
}

std::vector<std::size_t> clean_database(std::span<const float> u,
                                        std::optional<std::span<const std::uint32_t>> labels,
                                        const RetrievalPolicy &policy) {
  validate(policy);
  for (float v : u)
    require(std::isfinite(v), ErrorCode::NonFinite, "clean_database: non-finite uncertainty");
  std::vector<std::uint8_t> removed(u.size(), 0);
  if (policy.clean_mode == CleanMode::GlobalQuantile) {
    std::vector<std::size_t> all(u.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (auto i : most_uncertain(u, all, quantile_count(policy.database_clean_fraction, u.size())))
      removed[i] = 1;
  } else {
    require(labels.has_value(), ErrorCode::InvalidArgument,
            "clean_database: per-class cleaning needs database labels");
    require(labels->size() == u.size(), ErrorCode::DimensionMismatch,
            "clean_database: labels not aligned with uncertainties");
    std::map<std::uint32_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < u.size(); ++i)
      groups[(*labels)[i]].push_back(i);
    for (const auto &[label, members] : groups) {
      const auto k = quantile_count(policy.database_clean_fraction, members.size());
      require(k < members.size(), ErrorCode::InvalidArgument,
              "clean_database: cleaning would empty class " + std::to_string(label));
      for (auto i : most_uncertain(u, members, k))
        removed[i] = 1;
    }
  }
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!removed[i])
      kept.push_back(i);
  return kept;
}

RetrievalOutcome safe_retrieve(MatrixView<const float> queries, std::span<const float> qu,
                               MatrixView<const float> database, std::span<const std::size_t> retained,
                               const RetrievalPolicy &policy,
                               std::optional<std::span<const std::uint32_t>> query_labels,
                               std::optional<std::span<const std::uint32_t>> database_labels) {
  validate(policy);
  require(qu.size() == queries.rows(), ErrorCode::DimensionMismatch,
          "safe_retrieve: query uncertainties not aligned with queries");
  require(queries.cols() == database.cols(), ErrorCode::DimensionMismatch,
          "safe_retrieve: query/database dimension mismatch");
  require(!retained.empty(), ErrorCode::InvalidArgument, "safe_retrieve: retained database is empty");
  for (auto j : retained)
    require(j < database.rows(), ErrorCode::InvalidArgument, "safe_retrieve: retained index out of range");
  require(query_labels.has_value() == database_labels.has_value(), ErrorCode::InvalidArgument,
          "safe_retrieve: evaluation mode needs both query and database labels");
  if (query_labels) {
    require(query_labels->size() == queries.rows() && database_labels->size() == database.rows(),
            ErrorCode::DimensionMismatch, "safe_retrieve: labels not aligned");
  }

  RetrievalOutcome out;
  out.results.assign(queries.rows(), {});
  std::vector<std::size_t> all(queries.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (auto i : most_uncertain(qu, all, quantile_count(policy.query_reject_fraction, queries.rows())))
    out.results[i].rejected = true;

  std::vector<std::size_t> answered_idx;
  for (std::size_t i = 0; i < queries.rows(); ++i)
    if (!out.results[i].rejected)
      answered_idx.push_back(i);
  out.answered = answered_idx.size();
  out.answered_fraction = queries.rows() == 0
                              ? 0.0
                              : static_cast<double>(out.answered) / static_cast<double>(queries.rows());

  if (!answered_idx.empty()) {
    const auto q = gather_rows(queries, answered_idx);
    const auto match = kernels::nearest_cosine_parallel(q.view(), database, retained, false);
    for (std::size_t k = 0; k < answered_idx.size(); ++k)
      out.results[answered_idx[k]].match = match[k];
  }

  if (query_labels) {
    require(out.answered > 0, ErrorCode::UndefinedMetric,
            "safe_retrieve: every query was rejected, error rate undefined");
    std::size_t wrong = 0;
    for (auto i : answered_idx)
      wrong += (*query_labels)[i] != (*database_labels)[out.results[i].match] ? 1 : 0;
    out.error_rate = static_cast<double>(wrong) / static_cast<double>(out.answered);
  }
  return out;
}

std::string to_text(const RetrievalOutcome &o, const RetrievalPolicy &p) {
  char buf[128];
  std::string s;
  std::snprintf(buf, sizeof buf, "query_reject_fraction=%.6f\n", p.query_reject_fraction);
  s += buf;
  std::snprintf(buf, sizeof buf, "database_clean_fraction=%.6f\n", p.database_clean_fraction);
  s += buf;
  s += std::string("clean_mode=") + to_string(p.clean_mode) + "\n";
  s += "n_queries=" + std::to_string(o.results.size()) + "\n";
  s += "answered=" + std::to_string(o.answered) + "\n";
  std::snprintf(buf, sizeof buf, "answered_fraction=%.6f\n", o.answered_fraction);
  s += buf;
  if (o.error_rate) {
    std::snprintf(buf, sizeof buf, "error_rate=%.6f\n", *o.error_rate);
    s += buf;
  }
  return s;
}

std::string to_json(const RetrievalOutcome &o, const RetrievalPolicy &p) {
  nlohmann::ordered_json j;
  j["query_reject_fraction"] = p.query_reject_fraction;
  j["database_clean_fraction"] = p.database_clean_fraction;
  j["clean_mode"] = to_string(p.clean_mode);
  j["n_queries"] = o.results.size();
  j["answered"] = o.answered;
  j["answered_fraction"] = o.answered_fraction;
  if (o.error_rate)
    j["error_rate"] = *o.error_rate;
  auto &res = j["results"] = nlohmann::ordered_json::array();
  for (const auto &r : o.results) {
    if (r.rejected)
      res.push_back(nullptr);
    else
      res.push_back(r.match);
  }
  return j.dump(2) + "\n";
}

} // namespace uhead
