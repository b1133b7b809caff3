#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace agentguard {

enum class ErrorCode {
  UnknownState,
  UnknownAction,
  NeverObserved,
  InvalidDecay,
  SyntaxError,
  BoundError,
  ThresholdError,
  UnknownLabel,
  UnknownRewardStructure,
  ModeMismatch,
  EmptyModel,
  NegativeReward,
  ConfigError,
  OrphanResult,
  EngineNotRunning,
  RejectedEvent,
  UnsupportedConstruct,
  UnknownCommand,
  UnknownAlert,
  InvalidScenario,
  TerminalState,
  TraceFormat,
  InvalidModel,
  MalformedRequest,
};

std::string_view to_string(ErrorCode code);

/// Base of every error raised by the library. The code is stable and is what
/// the HTTP layer and the CLI map onto status/exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Property-language syntax error. `offset` is a byte offset into the input
/// and always lies inside it (end-of-input errors point at the last byte).
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, std::vector<std::string> expected, const std::string& message)
      : Error(ErrorCode::SyntaxError, message), offset_(offset), expected_(std::move(expected)) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
};

/// Configuration error carrying the YAML path of the offending node,
/// e.g. `properties[2].formula`.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(ErrorCode::ConfigError, path.empty() ? message : path + ": " + message),
        path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Error located at a line of a text input (PRISM import, JSONL traces).
class LocatedError : public Error {
 public:
  LocatedError(ErrorCode code, std::size_t line, std::size_t byte_offset, const std::string& message)
      : Error(code, "line " + std::to_string(line) + ": " + message),
        line_(line),
        byte_offset_(byte_offset) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t line_;
  std::size_t byte_offset_;
};

}  // namespace agentguard
