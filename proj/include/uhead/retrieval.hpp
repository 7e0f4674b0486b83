// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uhead/matrix.hpp"

namespace uhead {

enum class CleanMode { GlobalQuantile, PerClassQuantile };

const char *to_string(CleanMode mode) noexcept;
CleanMode clean_mode_from_string(const std::string &name);

struct RetrievalPolicy {
  double query_reject_fraction = 0.10;
  double database_clean_fraction = 0.10;
  CleanMode clean_mode = CleanMode::PerClassQuantile;
};

void validate(const RetrievalPolicy &policy);

/// k = floor(fraction * n) (with a 1e-9 guard against representation
/// error, so 0.1 * 10 is 1).
std::size_t quantile_count(double fraction, std::size_t n);

/// Indices of the k most uncertain items; among equal uncertainties the
/// larger index goes first, so smaller indices are kept.
std::vector<std::size_t> most_uncertain(std::span<const float> uncertainties,
                                        std::span<const std::size_t> candidates, std::size_t k);

/// Retained database indices, ascending.
std::vector<std::size_t> clean_database(std::span<const float> uncertainties,
                                        std::optional<std::span<const std::uint32_t>> labels,
                                        const RetrievalPolicy &policy);

struct QueryResult {
  bool rejected = false;
  std::size_t match = 0; // database row index, valid when !rejected

  bool operator==(const QueryResult &) const = default;
};

struct RetrievalOutcome {
  std::vector<QueryResult> results;
  std::size_t answered = 0;
  double answered_fraction = 0.0;
  /// Only in evaluation mode (labels supplied): share of answered queries
  /// matched to a different label.
  std::optional<double> error_rate;
};

/// Rejects the top query_reject_fraction of queries by uncertainty and
/// matches the rest to their cosine-nearest retained database row.
RetrievalOutcome safe_retrieve(MatrixView<const float> queries, std::span<const float> query_uncertainties,
                               MatrixView<const float> database, std::span<const std::size_t> retained,
                               const RetrievalPolicy &policy,
                               std::optional<std::span<const std::uint32_t>> query_labels = std::nullopt,
                               std::optional<std::span<const std::uint32_t>> database_labels = std::nullopt);

std::string to_text(const RetrievalOutcome &outcome, const RetrievalPolicy &policy);
std::string to_json(const RetrievalOutcome &outcome, const RetrievalPolicy &policy);

} // namespace uhead
