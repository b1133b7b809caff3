#pragma once

#include "agentguard/mdp.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace agentguard {

/// Persisted form of one accepted transition.
struct TraceRecord {
  std::uint64_t seq = 0;
  std::string session = "default";
  std::int64_t ts = 0;
  TransitionEvent event;
};

nlohmann::json trace_record_to_json(const TraceRecord& rec);
/// One JSONL line, newline included.
std::string format_trace_line(const TraceRecord& rec);
/// Throws TraceFormat for anything that is not a well-formed record.
TraceRecord trace_record_from_json(const nlohmann::json& doc);

struct TraceReadOptions {
  bool lenient = false;  // skip malformed lines instead of throwing
};

struct TraceReadResult {
  std::vector<TraceRecord> records;
  std::uint64_t skipped = 0;
};

/// Reads a JSONL trace. Blank lines are ignored. In strict mode a malformed
/// line throws LocatedError(TraceFormat) with its line number and the byte
/// offset of the problem within the whole input.
TraceReadResult read_trace(std::string_view text, const TraceReadOptions& options = {});
TraceReadResult read_trace_file(const std::string& path, const TraceReadOptions& options = {});

}  // namespace agentguard
