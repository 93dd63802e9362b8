#include <mcf/core/error.h>

namespace mcf {

std::string_view error_tag(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::InvalidValue:
    return "invalid-value";
  case ErrorKind::InvalidRotation:
    return "invalid-rotation";
  case ErrorKind::InvalidLattice:
    return "invalid-lattice";
  case ErrorKind::InvalidParameter:
    return "invalid-parameter";
  case ErrorKind::InvalidInput:
    return "invalid-input";
  case ErrorKind::CanonicalizationFailure:
    return "canonicalization-failure";
  case ErrorKind::UnknownElement:
    return "unknown-element";
  case ErrorKind::PriorSampling:
    return "prior-sampling";
  case ErrorKind::IntegrationFailure:
    return "integration-failure";
  case ErrorKind::NonFiniteLoss:
    return "non-finite-loss";
  case ErrorKind::FormatVersion:
    return "format-version";
  case ErrorKind::Config:
    return "config";
  case ErrorKind::Schema:
    return "schema";
  case ErrorKind::Io:
    return "io";
  }
  return "unknown";
}

} // namespace mcf
