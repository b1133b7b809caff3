#include "agentguard/trace.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

namespace agentguard {

using nlohmann::json;

json trace_record_to_json(const TraceRecord& rec) {
  json doc = {{"seq", rec.seq},
              {"session", rec.session},
              {"ts", rec.ts},
              {"state", rec.event.state},
              {"action", rec.event.action},
              {"next_state", rec.event.next_state}};
  if (rec.event.reward) doc["reward"] = *rec.event.reward;
  return doc;
}

std::string format_trace_line(const TraceRecord& rec) { return trace_record_to_json(rec).dump() + '\n'; }

TraceRecord trace_record_from_json(const json& doc) {
  auto bad = [](const std::string& what) { return Error(ErrorCode::TraceFormat, what); };
  if (!doc.is_object()) throw bad("trace record must be an object");
  auto text = [&](const char* key) {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_string()) throw bad(std::string("missing string field '") + key + "'");
    return it->get<std::string>();
  };
  TraceRecord rec;
  if (auto it = doc.find("seq"); it != doc.end()) {
    if (!it->is_number_unsigned()) throw bad("seq must be a nonnegative integer");
    rec.seq = it->get<std::uint64_t>();
  }
  if (auto it = doc.find("session"); it != doc.end()) {
    if (!it->is_string()) throw bad("session must be a string");
    rec.session = it->get<std::string>();
  }
  if (auto it = doc.find("ts"); it != doc.end()) {
    if (!it->is_number_integer()) throw bad("ts must be an integer");
    rec.ts = it->get<std::int64_t>();
    rec.event.timestamp_ms = rec.ts;
  }
  rec.event.state = text("state");
  rec.event.action = text("action");
  rec.event.next_state = text("next_state");
  if (auto it = doc.find("reward"); it != doc.end() && !it->is_null()) {
    if (!it->is_number()) throw bad("reward must be a number");
    rec.event.reward = it->get<double>();
  }
  return rec;
}

TraceReadResult read_trace(std::string_view text, const TraceReadOptions& options) {
  TraceReadResult out;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    ++line_no;
    auto end = text.find('\n', start);
    const bool terminated = end != std::string_view::npos;
    if (!terminated) end = text.size();
    auto line = text.substr(start, end - start);
    const std::size_t line_start = start;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      json doc;
      try {
        doc = json::parse(line);
      } catch (const json::parse_error& e) {
        std::size_t at = e.byte == 0 ? 0 : e.byte - 1;
        throw LocatedError(ErrorCode::TraceFormat, line_no, line_start + std::min(at, line.size()),
                           std::string(terminated ? "malformed record" : "truncated record") + " at byte " +
                               std::to_string(line_start + std::min(at, line.size())));
      }
      out.records.push_back(trace_record_from_json(doc));
    } catch (const LocatedError& e) {
      if (!options.lenient) throw;
      spdlog::warn("skipping trace line {}: {}", line_no, e.what());
      ++out.skipped;
    } catch (const Error& e) {
      if (!options.lenient) throw LocatedError(ErrorCode::TraceFormat, line_no, line_start, e.what());
      spdlog::warn("skipping trace line {}: {}", line_no, e.what());
      ++out.skipped;
    }
  }
  return out;
}

TraceReadResult read_trace_file(const std::string& path, const TraceReadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::TraceFormat, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return read_trace(buf.str(), options);
}

}  // namespace agentguard
