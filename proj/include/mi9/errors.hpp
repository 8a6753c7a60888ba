#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mi9 {

enum class Errc {
  MalformedLine,
  SchemaViolation,
  UnknownVerb,
  InvalidScore,
  OutOfRange,
  TooManySteps,
  EmptyPredicate,
  MissingDeadline,
  InsufficientSamples,
  EmptyDistribution,
  UnknownAgent,
  UnsupportedAttackType,
  TraceMismatch,
  PolicyError,
  IoError,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::MalformedLine: return "malformed_line";
    case Errc::SchemaViolation: return "schema_violation";
    case Errc::UnknownVerb: return "unknown_verb";
    case Errc::InvalidScore: return "invalid_score";
    case Errc::OutOfRange: return "out_of_range";
    case Errc::TooManySteps: return "too_many_steps";
    case Errc::EmptyPredicate: return "empty_predicate";
    case Errc::MissingDeadline: return "missing_deadline";
    case Errc::InsufficientSamples: return "insufficient_samples";
    case Errc::EmptyDistribution: return "empty_distribution";
    case Errc::UnknownAgent: return "unknown_agent";
    case Errc::UnsupportedAttackType: return "unsupported_attack_type";
    case Errc::TraceMismatch: return "trace_mismatch";
    case Errc::PolicyError: return "policy_error";
    case Errc::IoError: return "io_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace mi9
