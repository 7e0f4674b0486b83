// SPDX-License-Identifier: Apache-2.0
#include "uhead/cache.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include "uhead/binary_io.hpp"
#include "uhead/losses.hpp"

namespace uhead {
namespace {

bool all_finite(std::span<const float> v) {
  for (float x : v)
    if (!std::isfinite(x))
      return false;
  return true;
}

std::string where(std::uint64_t epoch, std::uint64_t sample) {
  return "(epoch " + std::to_string(epoch) + ", sample " + std::to_string(sample) + ")";
}

void fill_losses(CacheContents &c, const ClassifierHead &clf, bool store_logits) {
  const auto &h = c.header;
  require(clf.embed_dim() == h.embed_dim, ErrorCode::DimensionMismatch,
          "classifier expects embed_dim " + std::to_string(clf.embed_dim()) + ", cache has " +
              std::to_string(h.embed_dim));
  require(clf.n_classes() == h.n_classes, ErrorCode::DimensionMismatch,
          "classifier has " + std::to_string(clf.n_classes()) + " classes, cache has " +
              std::to_string(h.n_classes));
  c.losses.assign(h.n_epochs, std::vector<float>(h.n_samples));
  c.logits.clear();
  std::vector<float> logit(h.n_classes);
  for (std::size_t e = 0; e < h.n_epochs; ++e) {
    Matrix<float> epoch_logits;
    if (store_logits)
      epoch_logits = Matrix<float>(h.n_samples, h.n_classes);
    for (std::size_t i = 0; i < h.n_samples; ++i) {
      clf.logits(c.embeddings[e].row(i), logit);
      c.losses[e][i] = static_cast<float>(task_cross_entropy(std::span<const float>(logit), c.labels[i]));
      if (store_logits)
        std::copy(logit.begin(), logit.end(), epoch_logits.row(i).begin());
    }
    if (store_logits)
      c.logits.push_back(std::move(epoch_logits));
  }
  c.header.has_losses = true;
  c.header.has_logits = store_logits;
}

} // namespace

std::uint64_t CacheHeader::epoch_block_bytes() const noexcept {
  std::uint64_t b = n_samples * embed_dim * 4 + n_samples * 4;
  if (has_losses)
    b += n_samples * 4;
  if (has_logits)
    b += n_samples * std::uint64_t{n_classes} * 4;
  return b;
}

std::uint64_t CacheHeader::file_bytes() const noexcept {
  return kCacheHeaderBytes + std::uint64_t{n_epochs} * epoch_block_bytes();
}

std::uint64_t CacheHeader::embeddings_offset(std::uint64_t epoch) const noexcept {
  return kCacheHeaderBytes + epoch * epoch_block_bytes();
}
std::uint64_t CacheHeader::labels_offset(std::uint64_t epoch) const noexcept {
  return embeddings_offset(epoch) + n_samples * embed_dim * 4;
}
std::uint64_t CacheHeader::losses_offset(std::uint64_t epoch) const noexcept {
  return labels_offset(epoch) + n_samples * 4;
}
std::uint64_t CacheHeader::logits_offset(std::uint64_t epoch) const noexcept {
  return losses_offset(epoch) + (has_losses ? n_samples * 4 : 0);
}

ClassifierHead::ClassifierHead(Matrix<float> weight, std::vector<float> bias)
    : weight_(std::move(weight)), bias_(std::move(bias)) {
  require(weight_.rows() >= 2 && weight_.cols() >= 1, ErrorCode::InvalidArgument,
          "classifier: need >= 2 classes and >= 1 input dimension");
  require(bias_.size() == weight_.rows(), ErrorCode::DimensionMismatch,
          "classifier: bias length differs from class count");
  require(all_finite(weight_.data()) && all_finite(bias_), ErrorCode::NonFinite,
          "classifier: non-finite parameter");
}

void ClassifierHead::logits(std::span<const float> e, std::span<float> out) const {
  require(e.size() == embed_dim() && out.size() == n_classes(), ErrorCode::DimensionMismatch,
          "classifier: embedding/logit size mismatch");
  for (std::size_t c = 0; c < n_classes(); ++c) {
    auto w = weight_.row(c);
    float acc = bias_[c];
    for (std::size_t j = 0; j < w.size(); ++j)
      acc += w[j] * e[j];
    out[c] = acc;
  }
}

std::vector<float> ClassifierHead::logits(std::span<const float> e) const {
  std::vector<float> out(n_classes());
  logits(e, out);
  return out;
}

void save_classifier(const ClassifierHead &clf, const std::filesystem::path &path) {
  std::ostringstream ss;
  ss.precision(9);
  for (std::size_t c = 0; c < clf.n_classes(); ++c) {
    ss << clf.bias()[c];
    for (float w : clf.weight().row(c))
      ss << ',' << w;
    ss << '\n';
  }
  write_text_atomic(path, ss.str());
}

ClassifierHead load_classifier(const std::filesystem::path &path) {
  // Same row syntax as the CSV import, with the bias in the label column.
  std::istringstream in(read_text(path));
  std::vector<std::vector<float>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#')
      continue;
    for (char &ch : line)
      if (ch == ',')
        ch = ' ';
    std::istringstream ls(line);
    std::vector<float> row;
    std::string tok;
    while (ls >> tok) {
      char *end = nullptr;
      const float v = std::strtof(tok.c_str(), &end);
      require(end && *end == '\0', ErrorCode::Corrupt,
              path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      row.push_back(v);
    }
    if (row.empty())
      continue;
    require(rows.empty() || row.size() == rows.front().size(), ErrorCode::Corrupt,
            path.string() + ":" + std::to_string(lineno) + ": inconsistent column count");
    rows.push_back(std::move(row));
  }
  require(!rows.empty() && rows.front().size() >= 2, ErrorCode::Corrupt,
          path.string() + ": empty classifier file");
  const std::size_t d = rows.front().size() - 1;
  Matrix<float> w(rows.size(), d);
  std::vector<float> b(rows.size());
  for (std::size_t c = 0; c < rows.size(); ++c) {
    b[c] = rows[c][0];
    std::copy(rows[c].begin() + 1, rows[c].end(), w.row(c).begin());
  }
  return ClassifierHead(std::move(w), std::move(b));
}

void validate(const CacheContents &c) {
  const auto &h = c.header;
  require(h.n_samples >= 1 && h.n_epochs >= 1 && h.embed_dim >= 1, ErrorCode::InvalidArgument,
          "cache: n_samples, n_epochs and embed_dim must be positive");
  require(h.n_classes >= 2, ErrorCode::InvalidArgument, "cache: need at least 2 classes");
  require(c.embeddings.size() == h.n_epochs, ErrorCode::DimensionMismatch,
          "cache: epoch count mismatch");
  require(c.labels.size() == h.n_samples, ErrorCode::DimensionMismatch,
          "cache: label count mismatch");
  for (std::size_t e = 0; e < h.n_epochs; ++e) {
    require(c.embeddings[e].rows() == h.n_samples && c.embeddings[e].cols() == h.embed_dim,
            ErrorCode::DimensionMismatch,
            "cache: epoch " + std::to_string(e) + " embeddings have shape " +
                std::to_string(c.embeddings[e].rows()) + "x" + std::to_string(c.embeddings[e].cols()));
    require(all_finite(c.embeddings[e].data()), ErrorCode::NonFinite,
            "cache: non-finite embedding in epoch " + std::to_string(e));
  }
  for (std::size_t i = 0; i < h.n_samples; ++i)
    require(c.labels[i] < h.n_classes, ErrorCode::InvalidArgument,
            "cache: label " + std::to_string(c.labels[i]) + " of sample " + std::to_string(i) +
                " out of range");
  require(h.has_losses == !c.losses.empty(), ErrorCode::InvalidArgument,
          "cache: has_losses flag disagrees with loss blocks");
  if (h.has_losses) {
    require(c.losses.size() == h.n_epochs, ErrorCode::DimensionMismatch, "cache: loss epochs");
    for (std::size_t e = 0; e < h.n_epochs; ++e) {
      require(c.losses[e].size() == h.n_samples, ErrorCode::DimensionMismatch, "cache: loss count");
      for (float l : c.losses[e])
        require(std::isfinite(l) && l >= 0.0f, ErrorCode::InvalidArgument,
                "cache: stored losses must be finite and >= 0");
    }
  }
  require(h.has_logits == !c.logits.empty(), ErrorCode::InvalidArgument,
          "cache: has_logits flag disagrees with logit blocks");
  if (h.has_logits) {
    require(c.logits.size() == h.n_epochs, ErrorCode::DimensionMismatch, "cache: logit epochs");
    for (std::size_t e = 0; e < h.n_epochs; ++e) {
      require(c.logits[e].rows() == h.n_samples && c.logits[e].cols() == h.n_classes,
              ErrorCode::DimensionMismatch, "cache: logit shape");
      require(all_finite(c.logits[e].data()), ErrorCode::NonFinite, "cache: non-finite logit");
    }
  }
}

CacheContents make_cache(std::vector<Matrix<float>> epochs, std::vector<std::uint32_t> labels,
                         std::uint32_t n_classes, const ClassifierHead *classifier,
                         CacheBuildOptions options) {
  require(!epochs.empty(), ErrorCode::InvalidArgument, "cache_build: no epochs");
  require(epochs.size() <= 0xffff, ErrorCode::InvalidArgument, "cache_build: too many epochs");
  CacheContents c;
  c.header.n_samples = epochs.front().rows();
  c.header.n_epochs = static_cast<std::uint16_t>(epochs.size());
  c.header.embed_dim = static_cast<std::uint32_t>(epochs.front().cols());
  c.header.n_classes = n_classes;
  c.embeddings = std::move(epochs);
  c.labels = std::move(labels);
  validate(c);
  if (classifier)
    fill_losses(c, *classifier, options.store_logits);
  validate(c);
  return c;
}

std::vector<std::byte> encode_cache(const CacheContents &c) {
  validate(c);
  const auto &h = c.header;
  ByteWriter w;
  w.put_bytes(std::as_bytes(std::span("UCCH", 4)));
  w.put<std::uint16_t>(kCacheVersion);
  w.put<std::uint64_t>(h.n_samples);
  w.put<std::uint16_t>(h.n_epochs);
  w.put<std::uint32_t>(h.embed_dim);
  w.put<std::uint32_t>(h.n_classes);
  w.put<std::uint16_t>(static_cast<std::uint16_t>((h.has_losses ? kCacheFlagLosses : 0) |
                                                  (h.has_logits ? kCacheFlagLogits : 0)));
  for (std::size_t e = 0; e < h.n_epochs; ++e) {
    w.put_array(c.embeddings[e].data());
    w.put_array(std::span<const std::uint32_t>(c.labels));
    if (h.has_losses)
      w.put_array(std::span<const float>(c.losses[e]));
    if (h.has_logits)
      w.put_array(c.logits[e].data());
  }
  return w.take();
}

void write_cache(const CacheContents &c, const std::filesystem::path &path) {
  write_file_atomic(path, encode_cache(c));
}

CacheHeader cache_build(std::vector<Matrix<float>> epochs, std::vector<std::uint32_t> labels,
                        std::uint32_t n_classes, const ClassifierHead *classifier,
                        const std::filesystem::path &path, CacheBuildOptions options) {
  auto c = make_cache(std::move(epochs), std::move(labels), n_classes, classifier, options);
  write_cache(c, path);
  return c.header;
}

FileByteSource::FileByteSource(const std::filesystem::path &path) : path_(path) {
  fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  require(fd_ >= 0, ErrorCode::Io, "cannot open " + path.string() + ": " + std::strerror(errno));
  struct stat st {};
  if (::fstat(fd_, &st) != 0) {
    ::close(fd_);
    fail(ErrorCode::Io, "cannot stat " + path.string());
  }
  size_ = static_cast<std::uint64_t>(st.st_size);
}

FileByteSource::~FileByteSource() {
  if (fd_ >= 0)
    ::close(fd_);
}

void FileByteSource::read_at(std::uint64_t offset, std::span<std::byte> out) const {
  std::size_t done = 0;
  while (done < out.size()) {
    const auto n = ::pread(fd_, out.data() + done, out.size() - done,
                           static_cast<off_t>(offset + done));
    if (n < 0 && errno == EINTR)
      continue;
    require(n > 0, ErrorCode::Io, "short read from " + path_.string());
    done += static_cast<std::size_t>(n);
  }
}

void MemoryByteSource::read_at(std::uint64_t offset, std::span<std::byte> out) const {
  require(offset + out.size() <= bytes_.size(), ErrorCode::Corrupt, "read past end of buffer");
  std::memcpy(out.data(), bytes_.data() + offset, out.size());
}

CacheHeader parse_cache_header(std::span<const std::byte> bytes, std::uint64_t actual_size) {
  require(bytes.size() >= kCacheHeaderBytes, ErrorCode::Corrupt,
          "cache: file shorter than header (expected at least " +
              std::to_string(kCacheHeaderBytes) + " bytes, actual " + std::to_string(actual_size) + ")");
  require(std::memcmp(bytes.data(), "UCCH", 4) == 0, ErrorCode::Corrupt, "cache: bad magic");
  ByteReader r(bytes.subspan(4, kCacheHeaderBytes - 4));
  CacheHeader h;
  h.version = r.get<std::uint16_t>();
  require(h.version == kCacheVersion, ErrorCode::Corrupt,
          "cache: unsupported version " + std::to_string(h.version));
  h.n_samples = r.get<std::uint64_t>();
  h.n_epochs = r.get<std::uint16_t>();
  h.embed_dim = r.get<std::uint32_t>();
  h.n_classes = r.get<std::uint32_t>();
  const auto flags = r.get<std::uint16_t>();
  require((flags & ~(kCacheFlagLosses | kCacheFlagLogits)) == 0, ErrorCode::Corrupt,
          "cache: unknown flag bits " + std::to_string(flags));
  h.has_losses = flags & kCacheFlagLosses;
  h.has_logits = flags & kCacheFlagLogits;
  require(h.n_samples >= 1 && h.n_epochs >= 1 && h.embed_dim >= 1 && h.n_classes >= 2,
          ErrorCode::Corrupt, "cache: degenerate header dimensions");
  require(actual_size == h.file_bytes(), ErrorCode::Corrupt,
          "cache: size mismatch, expected " + std::to_string(h.file_bytes()) + " bytes, actual " +
              std::to_string(actual_size));
  return h;
}

CacheReader::CacheReader(std::unique_ptr<ByteSource> source) : source_(std::move(source)) {
  const auto size = source_->size();
  std::vector<std::byte> head(std::min<std::uint64_t>(size, kCacheHeaderBytes));
  source_->read_at(0, head);
  header_ = parse_cache_header(head, size);
}

template <class T> void CacheReader::read_block(std::uint64_t offset, std::span<T> out) const {
  source_->read_at(offset, std::as_writable_bytes(out));
}

void CacheReader::check_record(std::uint64_t epoch, std::uint64_t sample) const {
  require(epoch < header_.n_epochs && sample < header_.n_samples, ErrorCode::InvalidArgument,
          "cache: record " + where(epoch, sample) + " out of range");
}

void CacheReader::read_embedding(std::uint64_t epoch, std::uint64_t sample, std::span<float> out) const {
  check_record(epoch, sample);
  require(out.size() == header_.embed_dim, ErrorCode::DimensionMismatch, "cache: output size");
  read_block(header_.embeddings_offset(epoch) + sample * header_.embed_dim * 4, out);
  require(all_finite(out), ErrorCode::Corrupt, "cache: non-finite embedding at " + where(epoch, sample));
}

std::vector<float> CacheReader::embedding(std::uint64_t epoch, std::uint64_t sample) const {
  std::vector<float> out(header_.embed_dim);
  read_embedding(epoch, sample, out);
  return out;
}

std::uint32_t CacheReader::label(std::uint64_t epoch, std::uint64_t sample) const {
  check_record(epoch, sample);
  std::uint32_t v;
  read_block(header_.labels_offset(epoch) + sample * 4, std::span(&v, 1));
  require(v < header_.n_classes, ErrorCode::Corrupt, "cache: label out of range at " + where(epoch, sample));
  return v;
}

float CacheReader::loss(std::uint64_t epoch, std::uint64_t sample) const {
  check_record(epoch, sample);
  require(header_.has_losses, ErrorCode::InvalidArgument, "cache: no stored losses");
  float v;
  read_block(header_.losses_offset(epoch) + sample * 4, std::span(&v, 1));
  require(std::isfinite(v) && v >= 0.0f, ErrorCode::Corrupt, "cache: bad loss at " + where(epoch, sample));
  return v;
}

std::vector<float> CacheReader::logits(std::uint64_t epoch, std::uint64_t sample) const {
  check_record(epoch, sample);
  require(header_.has_logits, ErrorCode::InvalidArgument, "cache: no stored logits");
  std::vector<float> out(header_.n_classes);
  read_block(header_.logits_offset(epoch) + sample * header_.n_classes * 4, std::span(out));
  require(all_finite(out), ErrorCode::Corrupt, "cache: non-finite logit at " + where(epoch, sample));
  return out;
}

Matrix<float> CacheReader::epoch_embeddings(std::uint64_t epoch) const {
  check_record(epoch, 0);
  Matrix<float> m(header_.n_samples, header_.embed_dim);
  read_block(header_.embeddings_offset(epoch), m.data());
  require(all_finite(m.data()), ErrorCode::Corrupt,
          "cache: non-finite embedding in epoch " + std::to_string(epoch));
  return m;
}

std::vector<std::uint32_t> CacheReader::epoch_labels(std::uint64_t epoch) const {
  check_record(epoch, 0);
  std::vector<std::uint32_t> v(header_.n_samples);
  read_block(header_.labels_offset(epoch), std::span(v));
  for (auto l : v)
    require(l < header_.n_classes, ErrorCode::Corrupt, "cache: label out of range");
  return v;
}

std::vector<float> CacheReader::epoch_losses(std::uint64_t epoch) const {
  check_record(epoch, 0);
  require(header_.has_losses, ErrorCode::InvalidArgument, "cache: no stored losses");
  std::vector<float> v(header_.n_samples);
  read_block(header_.losses_offset(epoch), std::span(v));
  for (float l : v)
    require(std::isfinite(l) && l >= 0.0f, ErrorCode::Corrupt, "cache: bad stored loss");
  return v;
}

Matrix<float> CacheReader::epoch_logits(std::uint64_t epoch) const {
  check_record(epoch, 0);
  require(header_.has_logits, ErrorCode::InvalidArgument, "cache: no stored logits");
  Matrix<float> m(header_.n_samples, header_.n_classes);
  read_block(header_.logits_offset(epoch), m.data());
  require(all_finite(m.data()), ErrorCode::Corrupt, "cache: non-finite logit");
  return m;
}

CacheContents CacheReader::load_all() const {
  CacheContents c;
  c.header = header_;
  for (std::uint64_t e = 0; e < header_.n_epochs; ++e) {
    c.embeddings.push_back(epoch_embeddings(e));
    auto labels = epoch_labels(e);
    if (e == 0)
      c.labels = std::move(labels);
    else
      require(labels == c.labels, ErrorCode::Corrupt,
              "cache: labels of epoch " + std::to_string(e) + " differ from epoch 0");
    if (header_.has_losses)
      c.losses.push_back(epoch_losses(e));
    if (header_.has_logits)
      c.logits.push_back(epoch_logits(e));
  }
  return c;
}

CacheReader cache_open(const std::filesystem::path &path) {
  return CacheReader(std::make_unique<FileByteSource>(path));
}

CacheContents load_cache(const std::filesystem::path &path) { return cache_open(path).load_all(); }

CacheContents precompute_losses(CacheContents contents, const ClassifierHead &classifier,
                                bool overwrite) {
  validate(contents);
  require(!contents.header.has_losses || overwrite, ErrorCode::InvalidArgument,
          "precompute_losses: cache already has losses (pass overwrite)");
  fill_losses(contents, classifier, contents.header.has_logits);
  validate(contents);
  return contents;
}

CsvEpoch parse_csv_epoch(const std::string &text, const std::string &origin) {
  std::istringstream in(text);
  std::vector<float> values;
  std::vector<std::uint32_t> labels;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#')
      continue;
    for (char &ch : line)
      if (ch == ',' || ch == '\t' || ch == '\r')
        ch = ' ';
    std::istringstream ls(line);
    std::string tok;
    std::vector<float> row;
    bool have_label = false;
    while (ls >> tok) {
      const std::string loc = origin + ":" + std::to_string(lineno);
      if (!have_label) {
        std::uint32_t label = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), label);
        require(ec == std::errc() && p == tok.data() + tok.size(), ErrorCode::Corrupt,
                loc + ": bad label '" + tok + "'");
        labels.push_back(label);
        have_label = true;
        continue;
      }
      char *end = nullptr;
      const float v = std::strtof(tok.c_str(), &end);
      require(end && *end == '\0' && std::isfinite(v), ErrorCode::Corrupt,
              loc + ": bad value '" + tok + "'");
      row.push_back(v);
    }
    const std::string loc = origin + ":" + std::to_string(lineno);
    require(!row.empty(), ErrorCode::Corrupt, loc + ": row has no embedding values");
    if (dim == 0)
      dim = row.size();
    require(row.size() == dim, ErrorCode::Corrupt,
            loc + ": expected " + std::to_string(dim) + " values, found " + std::to_string(row.size()));
    values.insert(values.end(), row.begin(), row.end());
  }
  require(!labels.empty(), ErrorCode::Corrupt, origin + ": no samples");
  return {Matrix<float>(labels.size(), dim, std::move(values)), std::move(labels)};
}

CsvEpoch import_csv_epoch(const std::filesystem::path &path) {
  return parse_csv_epoch(read_text(path), path.string());
}

} // namespace uhead
