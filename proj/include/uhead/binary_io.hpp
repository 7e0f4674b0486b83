// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace uhead {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts need byte swapping");

/// Append-only little-endian byte buffer.
class ByteWriter {
public:
  template <class T> void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto *p = reinterpret_cast<const std::byte *>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void put_bytes(std::span<const std::byte> data) {
    bytes_.insert(bytes_.end(), data.begin(), data.end());
  }

  template <class T> void put_array(std::span<const T> values) {
    put_bytes(std::as_bytes(values));
  }

  const std::vector<std::byte> &bytes() const noexcept { return bytes_; }
  std::vector<std::byte> take() noexcept { return std::move(bytes_); }

private:
  std::vector<std::byte> bytes_;
};

/// Cursor over an in-memory byte span; throws Corrupt on overrun.
class ByteReader {
public:
  explicit ByteReader(std::span<const std::byte> data) : data_(data) {}

  template <class T> T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }

  template <class T> void get_array(std::span<T> out) {
    auto src = take(out.size_bytes());
    std::memcpy(out.data(), src.data(), src.size());
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
  std::span<const std::byte> take(std::size_t n);

  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
};

/// Writes to `<path>.tmp.<pid>` then renames over `path`, so readers never
/// observe a partial file at the target.
void write_file_atomic(const std::filesystem::path &path, std::span<const std::byte> data);
void write_text_atomic(const std::filesystem::path &path, const std::string &text);

std::vector<std::byte> read_file(const std::filesystem::path &path);
std::string read_text(const std::filesystem::path &path);

} // namespace uhead
