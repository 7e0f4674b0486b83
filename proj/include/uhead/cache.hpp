// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "uhead/matrix.hpp"

namespace uhead {

// File layout (little-endian, no padding):
//   "UCCH" | u16 version | u64 n_samples | u16 n_epochs | u32 embed_dim |
//   u32 n_classes | u16 flags (bit0 has_losses, bit1 has_logits)
// then per epoch:
//   f32 embeddings[n_samples][embed_dim] | u32 labels[n_samples] |
//   [f32 losses[n_samples]] | [f32 logits[n_samples][n_classes]]
inline constexpr std::uint16_t kCacheVersion = 1;
inline constexpr std::size_t kCacheHeaderBytes = 4 + 2 + 8 + 2 + 4 + 4 + 2;
inline constexpr std::uint16_t kCacheFlagLosses = 1u << 0;
inline constexpr std::uint16_t kCacheFlagLogits = 1u << 1;

struct CacheHeader {
  std::uint16_t version = kCacheVersion;
  std::uint64_t n_samples = 0;
  std::uint16_t n_epochs = 0;
  std::uint32_t embed_dim = 0;
  std::uint32_t n_classes = 0;
  bool has_losses = false;
  bool has_logits = false;

  std::uint64_t epoch_block_bytes() const noexcept;
  std::uint64_t file_bytes() const noexcept;
  std::uint64_t embeddings_offset(std::uint64_t epoch) const noexcept;
  std::uint64_t labels_offset(std::uint64_t epoch) const noexcept;
  std::uint64_t losses_offset(std::uint64_t epoch) const noexcept;
  std::uint64_t logits_offset(std::uint64_t epoch) const noexcept;

  bool operator==(const CacheHeader &) const = default;
};

/// Frozen linear classifier c(e) = W e + b; W is n_classes x embed_dim.
class ClassifierHead {
public:
  ClassifierHead(Matrix<float> weight, std::vector<float> bias);

  std::size_t n_classes() const noexcept { return weight_.rows(); }
  std::size_t embed_dim() const noexcept { return weight_.cols(); }
  const Matrix<float> &weight() const noexcept { return weight_; }
  std::span<const float> bias() const noexcept { return bias_; }

  /// Fixed summation order, so logits are bitwise reproducible.
  void logits(std::span<const float> embedding, std::span<float> out) const;
  std::vector<float> logits(std::span<const float> embedding) const;

  bool operator==(const ClassifierHead &) const = default;

private:
  Matrix<float> weight_;
  std::vector<float> bias_;
};

/// Text form: one row per class, "bias,w_0,...,w_{d-1}".
void save_classifier(const ClassifierHead &classifier, const std::filesystem::path &path);
ClassifierHead load_classifier(const std::filesystem::path &path);

/// Whole cache held in memory.
struct CacheContents {
  CacheHeader header;
  std::vector<Matrix<float>> embeddings; // per epoch, n_samples x embed_dim
  std::vector<std::uint32_t> labels;     // shared by all epochs
  std::vector<std::vector<float>> losses; // per epoch, empty unless has_losses
  std::vector<Matrix<float>> logits;      // per epoch, empty unless has_logits

  bool operator==(const CacheContents &) const = default;
};

struct CacheBuildOptions {
  bool store_logits = true; // only meaningful with a classifier
};

/// Assembles and validates contents; losses (and optionally logits) are
/// computed from the classifier when one is given.
CacheContents make_cache(std::vector<Matrix<float>> epochs, std::vector<std::uint32_t> labels,
                         std::uint32_t n_classes, const ClassifierHead *classifier,
                         CacheBuildOptions options = {});

/// Checks every invariant of the layout: shapes, label range, finiteness,
/// nonnegative losses.
void validate(const CacheContents &contents);

std::vector<std::byte> encode_cache(const CacheContents &contents);
void write_cache(const CacheContents &contents, const std::filesystem::path &path);

CacheHeader cache_build(std::vector<Matrix<float>> epochs, std::vector<std::uint32_t> labels,
                        std::uint32_t n_classes, const ClassifierHead *classifier,
                        const std::filesystem::path &path, CacheBuildOptions options = {});

/// Random-access byte source behind the cache reader.
class ByteSource {
public:
  virtual ~ByteSource() = default;
  virtual std::uint64_t size() const = 0;
  virtual void read_at(std::uint64_t offset, std::span<std::byte> out) const = 0;
};

class FileByteSource final : public ByteSource {
public:
  explicit FileByteSource(const std::filesystem::path &path);
  ~FileByteSource() override;
  FileByteSource(const FileByteSource &) = delete;
  FileByteSource &operator=(const FileByteSource &) = delete;

  std::uint64_t size() const override { return size_; }
  void read_at(std::uint64_t offset, std::span<std::byte> out) const override;

private:
  int fd_ = -1;
  std::uint64_t size_ = 0;
  std::filesystem::path path_;
};

class MemoryByteSource final : public ByteSource {
public:
  explicit MemoryByteSource(std::vector<std::byte> bytes) : bytes_(std::move(bytes)) {}
  std::uint64_t size() const override { return bytes_.size(); }
  void read_at(std::uint64_t offset, std::span<std::byte> out) const override;

private:
  std::vector<std::byte> bytes_;
};

CacheHeader parse_cache_header(std::span<const std::byte> bytes, std::uint64_t actual_size);

/// Read handle validating the header up front; records are fetched on demand.
class CacheReader {
public:
  explicit CacheReader(std::unique_ptr<ByteSource> source);

  const CacheHeader &header() const noexcept { return header_; }

  void read_embedding(std::uint64_t epoch, std::uint64_t sample, std::span<float> out) const;
  std::vector<float> embedding(std::uint64_t epoch, std::uint64_t sample) const;
  std::uint32_t label(std::uint64_t epoch, std::uint64_t sample) const;
  float loss(std::uint64_t epoch, std::uint64_t sample) const;
  std::vector<float> logits(std::uint64_t epoch, std::uint64_t sample) const;

  Matrix<float> epoch_embeddings(std::uint64_t epoch) const;
  std::vector<std::uint32_t> epoch_labels(std::uint64_t epoch) const;
  std::vector<float> epoch_losses(std::uint64_t epoch) const;
  Matrix<float> epoch_logits(std::uint64_t epoch) const;

  CacheContents load_all() const;

private:
  void check_record(std::uint64_t epoch, std::uint64_t sample) const;
  template <class T> void read_block(std::uint64_t offset, std::span<T> out) const;

  std::unique_ptr<ByteSource> source_;
  CacheHeader header_;
};

CacheReader cache_open(const std::filesystem::path &path);
CacheContents load_cache(const std::filesystem::path &path);

/// Recomputes per-sample losses from the classifier for every epoch.
/// Refuses a cache that already has losses unless `overwrite` is set.
CacheContents precompute_losses(CacheContents contents, const ClassifierHead &classifier,
                                bool overwrite = false);

/// Plain-text import: one sample per line, "label,v_0,...,v_{d-1}"
/// (commas or whitespace); blank lines and '#' comments are skipped.
struct CsvEpoch {
  Matrix<float> embeddings;
  std::vector<std::uint32_t> labels;
};
CsvEpoch import_csv_epoch(const std::filesystem::path &path);
CsvEpoch parse_csv_epoch(const std::string &text, const std::string &origin = "<text>");

} // namespace uhead
