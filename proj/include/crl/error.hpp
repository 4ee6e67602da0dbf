#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crl {

enum class ErrorKind {
  InvalidInput,
  NotPSD,
  NotPD,
  DesignInfeasible,
  GenerationFailed,
  TargetInconsistency,
  DecoderDegenerate,
  GraphDegenerate,
  AssignmentAmbiguous,
  CorruptDataset,
  UnsupportedVersion,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::NotPSD: return "NotPSD";
    case ErrorKind::NotPD: return "NotPD";
    case ErrorKind::DesignInfeasible: return "DesignInfeasible";
    case ErrorKind::GenerationFailed: return "GenerationFailed";
    case ErrorKind::TargetInconsistency: return "TargetInconsistency";
    case ErrorKind::DecoderDegenerate: return "DecoderDegenerate";
    case ErrorKind::GraphDegenerate: return "GraphDegenerate";
    case ErrorKind::AssignmentAmbiguous: return "AssignmentAmbiguous";
    case ErrorKind::CorruptDataset: return "CorruptDataset";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library. `stage()` is filled in by the
/// pipeline driver so callers can tell which step gave up.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::string stage = {})
      : std::runtime_error((stage.empty() ? std::string() : "[" + stage + "] ") +
                           std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        detail_(what),
        stage_(std::move(stage)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }
  const std::string& stage() const noexcept { return stage_; }

  /// Same error attributed to a pipeline stage.
  Error with_stage(std::string stage) const { return Error(kind_, detail_, std::move(stage)); }

 private:
  ErrorKind kind_;
  std::string detail_;
  std::string stage_;
};

}  // namespace crl
