#include "ctxsent/error.hpp"

namespace ctxsent {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::Backend: return "backend";
    case ErrorKind::Capability: return "capability";
    case ErrorKind::MissingArtifact: return "missing_artifact";
  }
  return "unknown";
}

}  // namespace ctxsent
