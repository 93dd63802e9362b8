#pragma once
#include <stdexcept>
#include <string>
#include <string_view>

namespace mcf {

enum class ErrorKind {
  InvalidValue,
  InvalidRotation,
  InvalidLattice,
  InvalidParameter,
  InvalidInput,
  CanonicalizationFailure,
  UnknownElement,
  PriorSampling,
  IntegrationFailure,
  NonFiniteLoss,
  FormatVersion,
  Config,
  Schema,
  Io,
};

/// Short machine-readable tag, e.g. "invalid-lattice". Used for quarantine
/// reasons and evaluation records.
std::string_view error_tag(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &message)
      : std::runtime_error(message), m_kind(kind) {}

  ErrorKind kind() const noexcept { return m_kind; }
  std::string_view tag() const noexcept { return error_tag(m_kind); }

private:
  ErrorKind m_kind;
};

} // namespace mcf
