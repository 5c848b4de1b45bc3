#include "encattack/error.hpp"

namespace encattack {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::shape: return "shape";
    case ErrorKind::validation: return "validation";
    case ErrorKind::training: return "training";
    case ErrorKind::size: return "size";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::io: return "io";
    case ErrorKind::schema: return "schema";
    case ErrorKind::extraction: return "extraction";
  }
  return "unknown";
}

}  // namespace encattack
