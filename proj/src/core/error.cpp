#include "core/error.hpp"

namespace kqr {

const char* kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Input: return "input";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Version: return "version";
    case ErrorKind::Numerical: return "numerical";
  }
  return "unknown";
}

}  // namespace kqr
