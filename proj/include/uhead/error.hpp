// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace uhead {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NonFinite,
  Corrupt,
  Io,
  UndefinedMetric,
  Config,
};

const char *to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-checkable category next to the message.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string &what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string &what) {
  if (!cond)
    fail(code, what);
}

} // namespace uhead
