// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REINIT_LAB_ERROR_HPP
#define REINIT_LAB_ERROR_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace reinit_lab {

/// Base of every error raised by the library. `kind()` is a stable,
/// machine-readable category used by the CLI's error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("configuration", m) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& m) : Error("data", m) {}
};

class LogicError : public Error {
 public:
  explicit LogicError(const std::string& m) : Error("logic", m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io", m) {}
};

class HarnessError : public Error {
 public:
  explicit HarnessError(const std::string& m) : Error("harness", m) {}
};

/// Non-finite values during optimization. Carries the global step index
/// when the failure happened inside an optimizer step.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& m, std::optional<std::int64_t> step = std::nullopt)
      : Error("numerical", step ? m + " (step " + std::to_string(*step) + ")" : m), step_(step) {}

  std::optional<std::int64_t> step() const noexcept { return step_; }

 private:
  std::optional<std::int64_t> step_;
};

/// Malformed input file. `offset()` is the byte offset of the problem
/// for binary formats; text formats put row/column in the message.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& m, std::optional<std::uint64_t> offset = std::nullopt)
      : Error("format", offset ? m + " at byte offset " + std::to_string(*offset) : m),
        offset_(offset) {}

  std::optional<std::uint64_t> offset() const noexcept { return offset_; }

 private:
  std::optional<std::uint64_t> offset_;
};

}  // namespace reinit_lab

#endif  // REINIT_LAB_ERROR_HPP
