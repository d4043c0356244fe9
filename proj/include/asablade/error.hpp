// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace asablade {

enum class ErrorKind {
  kValidation = 1,  // bad shapes, out-of-range arguments, malformed files
  kNumerical = 2,   // non-finite values, divergence
  kIo = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& what) {
  throw Error(ErrorKind::kValidation, what);
}

[[noreturn]] inline void fail_numerical(const std::string& what) {
  throw Error(ErrorKind::kNumerical, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail_validation(what);
}

}  // namespace asablade
