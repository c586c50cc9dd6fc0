#include "hera/error.hpp"

namespace hera {

std::string_view error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
  case ErrorKind::Io: return "Io";
  case ErrorKind::BadMagic: return "BadMagic";
  case ErrorKind::BadHeader: return "BadHeader";
  case ErrorKind::Truncated: return "Truncated";
  case ErrorKind::InvalidDump: return "InvalidDump";
  case ErrorKind::NonFinite: return "NonFinite";
  case ErrorKind::BadManifest: return "BadManifest";
  case ErrorKind::GeometryMismatch: return "GeometryMismatch";
  case ErrorKind::MissingMask: return "MissingMask";
  case ErrorKind::EmptyMask: return "EmptyMask";
  case ErrorKind::ZeroProto: return "ZeroProto";
  case ErrorKind::InvalidArgument: return "InvalidArgument";
  case ErrorKind::InsufficientSupports: return "InsufficientSupports";
  case ErrorKind::BadConfig: return "BadConfig";
  }
  return "Unknown";
}

} // namespace hera
