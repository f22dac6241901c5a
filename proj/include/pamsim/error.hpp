#pragma once

#include <stdexcept>
#include <string>

namespace pamsim {

enum class ErrorKind {
  InvalidState,
  Domain,
  Config,
  IntegrationDiverged,
  Framing,
  Protocol,
  Version,
  ModeMismatch,
  Design,
  DegenerateExcitation,
  InsufficientRealizations,
  Session,
  NoContact,
  Format,
  InsufficientData,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidState: return "invalid-state";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Config: return "config";
    case ErrorKind::IntegrationDiverged: return "integration-diverged";
    case ErrorKind::Framing: return "framing";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Version: return "version";
    case ErrorKind::ModeMismatch: return "mode-mismatch";
    case ErrorKind::Design: return "design";
    case ErrorKind::DegenerateExcitation: return "degenerate-excitation";
    case ErrorKind::InsufficientRealizations: return "insufficient-realizations";
    case ErrorKind::Session: return "session";
    case ErrorKind::NoContact: return "no-contact";
    case ErrorKind::Format: return "format";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

// Every failure raised by the library carries a kind so callers can branch
// without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pamsim
