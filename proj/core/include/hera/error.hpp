#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hera {

enum class ErrorKind {
  Io,
  BadMagic,
  BadHeader,
  Truncated,
  InvalidDump,
  NonFinite,
  BadManifest,
  GeometryMismatch,
  MissingMask,
  EmptyMask,
  ZeroProto,
  InvalidArgument,
  InsufficientSupports,
  BadConfig,
};

std::string_view error_kind_name(ErrorKind kind) noexcept;

/// Every failure surfaced by the library carries one of the kinds above, so
/// callers (and the CLI's machine-readable stderr) can branch on it.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view kind_name() const noexcept { return error_kind_name(kind_); }

private:
  ErrorKind kind_;
};

} // namespace hera
