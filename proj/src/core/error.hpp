// Copyright (c) 2026 The rnalab authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rna {

enum class ErrorKind {
  kInvalidArgument,  // bad call arguments: shapes, ranges, labels
  kConfig,           // unresolvable or inconsistent configuration
  kIo,               // file format or filesystem failures
  kNumeric,          // non-finite values, degenerate denominators
  kState,            // API misuse, e.g. stepping without gradients
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rna
