#include "aipat/error.hpp"

namespace aipat {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::structural: return "structural";
    case ErrorKind::range: return "range";
    case ErrorKind::validation: return "validation";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::state: return "state";
    case ErrorKind::authorization: return "authorization";
    case ErrorKind::authentication: return "authentication";
    case ErrorKind::integrity: return "integrity";
    case ErrorKind::undefined: return "undefined";
    case ErrorKind::io: return "io";
    case ErrorKind::provider_auth: return "provider_auth";
    case ErrorKind::retries_exhausted: return "retries_exhausted";
    case ErrorKind::unavailable: return "unavailable";
  }
  return "unknown";
}

}  // namespace aipat
