#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <memory>

#include "support.hpp"
#include "uhead/binary_io.hpp"
#include "uhead/cache.hpp"
#include "uhead/error.hpp"
#include "uhead/losses.hpp"

using namespace uhead;

namespace {

std::vector<Matrix<float>> epochs_of(std::size_t e, std::size_t n, std::size_t d, std::uint64_t seed) {
  std::vector<Matrix<float>> out;
  for (std::size_t k = 0; k < e; ++k)
    out.push_back(testing::random_matrix(n, d, seed + k));
  return out;
}

ClassifierHead random_classifier(std::size_t c, std::size_t d, std::uint64_t seed) {
  auto w = testing::random_matrix(c, d, seed);
  std::vector<float> b(c);
  for (std::size_t k = 0; k < c; ++k)
    b[k] = 0.1f * static_cast<float>(k);
  return ClassifierHead(std::move(w), std::move(b));
}

/// Counts every byte the reader pulls from the underlying source.
class CountingSource final : public ByteSource {
public:
  CountingSource(std::vector<std::byte> bytes, std::uint64_t &counter)
      : inner_(std::move(bytes)), counter_(counter) {}
  std::uint64_t size() const override { return inner_.size(); }
  void read_at(std::uint64_t offset, std::span<std::byte> out) const override {
    counter_ += out.size();
    inner_.read_at(offset, out);
  }

private:
  MemoryByteSource inner_;
  std::uint64_t &counter_;
};

} // namespace

TEST_CASE("layout arithmetic without classifier") {
  const auto c = make_cache(epochs_of(2, 4, 3, 1), {0, 1, 0, 1}, 2, nullptr);
  const auto bytes = encode_cache(c);
  // header + 2 * (embeddings + labels)
  CHECK(bytes.size() == 26 + 2 * (4 * 3 * 4 + 4 * 4));
  CHECK(bytes.size() == c.header.file_bytes());
  CHECK(std::memcmp(bytes.data(), "UCCH", 4) == 0);
  CHECK_FALSE(c.header.has_losses);
  CHECK_FALSE(c.header.has_logits);
}

TEST_CASE("layout with losses and logits") {
  const auto clf = random_classifier(3, 5, 4);
  const auto c = make_cache(epochs_of(3, 6, 5, 2), {0, 1, 2, 0, 1, 2}, 3, &clf);
  CHECK(c.header.has_losses);
  CHECK(c.header.has_logits);
  CHECK(encode_cache(c).size() == 26 + 3 * (6 * 5 * 4 + 6 * 4 + 6 * 4 + 6 * 3 * 4));
  CacheBuildOptions no_logits;
  no_logits.store_logits = false;
  const auto d = make_cache(epochs_of(3, 6, 5, 2), {0, 1, 2, 0, 1, 2}, 3, &clf, no_logits);
  CHECK(encode_cache(d).size() == 26 + 3 * (6 * 5 * 4 + 6 * 4 + 6 * 4));
}

TEST_CASE("stored losses follow the classifier's correctness") {
  // Identity classifier on one-hot-favoring embeddings.
  Matrix<float> w(2, 2);
  w(0, 0) = 4.0f;
  w(1, 1) = 4.0f;
  const ClassifierHead clf(w, {0.0f, 0.0f});
  Matrix<float> x(2, 2);
  x(0, 0) = 1.0f; // sample 0: class 0, correct
  x(1, 0) = 1.0f; // sample 1: labelled 1, misclassified
  const auto c = make_cache({x}, {0, 1}, 2, &clf);
  CHECK(c.losses[0][0] < c.losses[0][1]);
  const std::vector<double> z{4.0, 0.0};
  CHECK(c.losses[0][0] == static_cast<float>(task_cross_entropy(std::span<const double>(z), 0)));
}

TEST_CASE("build is deterministic and round-trips bitwise") {
  testing::TempDir dir("cache");
  const auto clf = random_classifier(4, 7, 9);
  std::vector<std::uint32_t> labels{0, 1, 2, 3, 3, 2, 1, 0, 1};
  cache_build(epochs_of(2, 9, 7, 3), labels, 4, &clf, dir / "a.ucache");
  cache_build(epochs_of(2, 9, 7, 3), labels, 4, &clf, dir / "b.ucache");
  CHECK(read_file(dir / "a.ucache") == read_file(dir / "b.ucache"));

  const auto expect = make_cache(epochs_of(2, 9, 7, 3), labels, 4, &clf);
  const auto reader = cache_open(dir / "a.ucache");
  CHECK(reader.header() == expect.header);
  CHECK(reader.load_all() == expect);
  for (std::uint64_t e = 0; e < 2; ++e)
    for (std::uint64_t i = 0; i < 9; ++i) {
      const auto v = reader.embedding(e, i);
      CHECK(std::memcmp(v.data(), expect.embeddings[e].row(i).data(), v.size() * 4) == 0);
      CHECK(reader.label(e, i) == labels[i]);
      const float l = reader.loss(e, i);
      CHECK(std::memcmp(&l, &expect.losses[e][i], 4) == 0);
      CHECK(reader.logits(e, i) == std::vector<float>(expect.logits[e].row(i).begin(), expect.logits[e].row(i).end()));
    }
  CHECK(load_cache(dir / "a.ucache") == expect);
}

TEST_CASE("truncated file names expected and actual size") {
  const auto c = make_cache(epochs_of(1, 4, 3, 1), {0, 1, 0, 1}, 2, nullptr);
  auto bytes = encode_cache(c);
  const auto full = bytes.size();
  bytes.pop_back();
  try {
    CacheReader r(std::make_unique<MemoryByteSource>(bytes));
    FAIL("expected Corrupt");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::Corrupt);
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(full)) != std::string::npos);
    CHECK(msg.find(std::to_string(full - 1)) != std::string::npos);
  }
}

TEST_CASE("wrong magic is rejected before any record read") {
  const auto c = make_cache(epochs_of(1, 4, 3, 1), {0, 1, 0, 1}, 2, nullptr);
  auto bytes = encode_cache(c);
  bytes[1] = std::byte{'X'};
  std::uint64_t read = 0;
  CHECK_THROWS_AS(CacheReader(std::make_unique<CountingSource>(bytes, read)), Error);
  CHECK(read <= kCacheHeaderBytes);
}

TEST_CASE("bad version and flags are rejected") {
  const auto c = make_cache(epochs_of(1, 4, 3, 1), {0, 1, 0, 1}, 2, nullptr);
  auto v = encode_cache(c);
  v[4] = std::byte{9};
  CHECK_THROWS_AS(CacheReader(std::make_unique<MemoryByteSource>(v)), Error);
  auto f = encode_cache(c);
  f[24] = std::byte{0x80};
  CHECK_THROWS_AS(CacheReader(std::make_unique<MemoryByteSource>(f)), Error);
  // Flag claims losses that are not there: size no longer matches.
  auto g = encode_cache(c);
  g[24] = std::byte{1};
  CHECK_THROWS_AS(CacheReader(std::make_unique<MemoryByteSource>(g)), Error);
}

TEST_CASE("random access touches only the record") {
  const auto clf = random_classifier(3, 16, 2);
  std::vector<std::uint32_t> labels(500);
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = static_cast<std::uint32_t>(i % 3);
  const auto c = make_cache(epochs_of(3, 500, 16, 5), labels, 3, &clf);
  std::uint64_t read = 0;
  CacheReader reader(std::make_unique<CountingSource>(encode_cache(c), read));
  const auto after_open = read;
  CHECK(after_open == kCacheHeaderBytes);
  reader.embedding(2, 437);
  CHECK(read - after_open == 16 * 4);
  reader.label(1, 3);
  reader.loss(1, 3);
  reader.logits(0, 499);
  CHECK(read - after_open == 16 * 4 + 4 + 4 + 3 * 4);
  CHECK(read < c.header.file_bytes() / 100);
}

TEST_CASE("build errors") {
  CHECK_THROWS_AS(make_cache(epochs_of(1, 4, 3, 1), {0, 1, 2, 1}, 2, nullptr), Error);
  auto bad = epochs_of(2, 4, 3, 1);
  bad[1] = testing::random_matrix(4, 2, 1);
  CHECK_THROWS_AS(make_cache(bad, {0, 1, 0, 1}, 2, nullptr), Error);
  CHECK_THROWS_AS(make_cache(epochs_of(1, 4, 3, 1), {0, 1, 0}, 2, nullptr), Error);
  testing::TempDir dir("cache-err");
  try {
    cache_build(epochs_of(1, 4, 3, 1), {0, 1, 0, 1}, 2, nullptr, dir / "missing" / "x.ucache");
    FAIL("expected Io");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::Io);
  }
}

TEST_CASE("precompute_losses") {
  const auto base = make_cache(epochs_of(2, 5, 4, 6), {0, 1, 2, 0, 1}, 3, nullptr);
  // Uniform logits: every loss is ln(3).
  const ClassifierHead uniform(Matrix<float>(3, 4, 0.0f), {0.0f, 0.0f, 0.0f});
  const auto u = precompute_losses(base, uniform);
  CHECK(u.header.has_losses);
  for (const auto &ep : u.losses)
    for (float l : ep)
      CHECK(l == static_cast<float>(std::log(3.0)));

  const auto clf = random_classifier(3, 4, 7);
  const auto a = precompute_losses(base, clf);
  const auto b = precompute_losses(base, clf);
  CHECK(a.losses == b.losses);
  for (std::size_t e = 0; e < 2; ++e)
    for (std::size_t i = 0; i < 5; ++i) {
      const auto z = clf.logits(base.embeddings[e].row(i));
      CHECK(a.losses[e][i] == static_cast<float>(task_cross_entropy(std::span<const float>(z), base.labels[i])));
    }
  CHECK_THROWS_AS(precompute_losses(a, clf), Error);
  CHECK_NOTHROW(precompute_losses(a, clf, true));
  const auto wrong = random_classifier(3, 5, 7);
  CHECK_THROWS_AS(precompute_losses(base, wrong), Error);
}

TEST_CASE("classifier text round trip") {
  testing::TempDir dir("clf");
  const auto clf = random_classifier(4, 6, 11);
  save_classifier(clf, dir / "c.txt");
  CHECK(load_classifier(dir / "c.txt") == clf);
}

TEST_CASE("csv import") {
  const auto e = parse_csv_epoch("# label then values\n1, 0.5, -1\n0 2 3\n\n2,1e-3,4\n");
  CHECK(e.labels == std::vector<std::uint32_t>{1, 0, 2});
  CHECK(e.embeddings.rows() == 3);
  CHECK(e.embeddings.cols() == 2);
  CHECK(e.embeddings(0, 1) == -1.0f);
  CHECK(e.embeddings(2, 0) == 1e-3f);
  CHECK_THROWS_AS(parse_csv_epoch("1,0.5\n0,1,2\n"), Error);
  CHECK_THROWS_AS(parse_csv_epoch("x,0.5\n"), Error);
  CHECK_THROWS_AS(parse_csv_epoch("1,nan\n"), Error);
  CHECK_THROWS_AS(parse_csv_epoch(""), Error);
}
