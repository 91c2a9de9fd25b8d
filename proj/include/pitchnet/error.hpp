#ifndef PITCHNET_ERROR_HPP
#define PITCHNET_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace pitchnet {

enum class ErrorCode {
  // midi_io
  UnterminatedVlq,
  TruncatedInput,
  ValueTooLarge,
  BadHeader,
  UnsupportedFormat,
  TruncatedChunk,
  DanglingRunningStatus,
  MalformedEvent,
  NegativeDelta,
  // score
  NoNotes,
  EmptySequence,
  // dataset
  EmptyCorpus,
  CorpusTooShort,
  IdOutOfRange,
  UnknownToken,
  // neural / optim
  ShapeMismatch,
  NonFiniteInput,
  NonFiniteGradient,
  StaleCache,
  EmptyDataset,
  BadMagic,
  VersionMismatch,
  TruncatedFile,
  ChecksumMismatch,
  IndexOutOfRange,
  InvalidArgument,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnterminatedVlq: return "UnterminatedVlq";
    case ErrorCode::TruncatedInput: return "TruncatedInput";
    case ErrorCode::ValueTooLarge: return "ValueTooLarge";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::TruncatedChunk: return "TruncatedChunk";
    case ErrorCode::DanglingRunningStatus: return "DanglingRunningStatus";
    case ErrorCode::MalformedEvent: return "MalformedEvent";
    case ErrorCode::NegativeDelta: return "NegativeDelta";
    case ErrorCode::NoNotes: return "NoNotes";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::CorpusTooShort: return "CorpusTooShort";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace pitchnet

#endif  // PITCHNET_ERROR_HPP
