// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <numeric>
#include <sstream>

#include <unistd.h>

#include "uhead/binary_io.hpp"
#include "uhead/error.hpp"
#include "uhead/rng.hpp"

namespace uhead {

const char *to_string(ErrorCode code) noexcept {
  switch (code) {
  case ErrorCode::InvalidArgument: return "invalid_argument";
  case ErrorCode::DimensionMismatch: return "dimension_mismatch";
  case ErrorCode::NonFinite: return "non_finite";
  case ErrorCode::Corrupt: return "corrupt";
  case ErrorCode::Io: return "io";
  case ErrorCode::UndefinedMetric: return "undefined_metric";
  case ErrorCode::Config: return "config";
  }
  return "unknown";
}

std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(perm);
  return perm;
}

std::span<const std::byte> ByteReader::take(std::size_t n) {
  require(n <= remaining(), ErrorCode::Corrupt,
          "unexpected end of data: need " + std::to_string(n) + " bytes, have " +
              std::to_string(remaining()));
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

void write_file_atomic(const std::filesystem::path &path, std::span<const std::byte> data) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char *>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      fail(ErrorCode::Io, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::Io, "cannot rename into " + path.string());
  }
}

void write_text_atomic(const std::filesystem::path &path, const std::string &text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

std::vector<std::byte> read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> data(size);
  in.read(reinterpret_cast<char *>(data.data()), static_cast<std::streamsize>(size));
  require(static_cast<bool>(in), ErrorCode::Io, "read failed: " + path.string());
  return data;
}

std::string read_text(const std::filesystem::path &path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace uhead
