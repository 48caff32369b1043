#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kge {

enum class Errc {
  SchemaMismatch,
  ParseError,
  EmptyDataset,
  UnknownAttribute,
  DegenerateRange,
  NoActiveSamples,
  TooManyClusters,
  InvalidNode,
  EmptyGroup,
  CannotDeleteRoot,
  NoValidClasses,
  InvalidHyperparams,
  LengthMismatch,
  EmptyGroupAfterExclusion,
  AlphaOutOfRange,
  NonFiniteLoss,
  Cancelled,
  TooFewSamples,
  DegenerateCovariance,
  DegeneratePolygon,
  NoBins,
  ClassTooSmall,
  TooFewCoalitions,
  EmptySelection,
  InvalidRange,
  ConfigError,
  InvalidArgument,
};

std::string_view errc_name(Errc code) noexcept;

// Every domain failure in the library is reported as an Error carrying a
// machine-readable code; the HTTP layer maps codes onto status 422.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string column, const std::string& message)
      : Error(Errc::ParseError, "row " + std::to_string(row) + ", column '" + column + "': " + message),
        row_(row),
        column_(std::move(column)) {}

  // Zero-based data row index (header excluded).
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class NonFiniteLossError : public Error {
 public:
  explicit NonFiniteLossError(std::size_t epoch)
      : Error(Errc::NonFiniteLoss, "training diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace kge
