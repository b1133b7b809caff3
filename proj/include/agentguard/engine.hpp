#pragma once

#include "agentguard/checker.hpp"
#include "agentguard/config.hpp"
#include "agentguard/mdp.hpp"
#include "agentguard/trace.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace agentguard {

struct Alert {
  std::uint64_t id = 0;
  std::string property;
  Severity severity = Severity::Warn;
  Value observed;
  pctl::Threshold threshold;
  std::uint64_t revision = 0;
  std::uint64_t cycle = 0;
  std::int64_t timestamp_ms = 0;
  bool acknowledged = false;
  std::optional<std::string> callback;        // on_violation target
  std::optional<std::string> callback_error;  // what the callback threw
};

enum class CommandKind { Pause, Resume, Terminate, Acknowledge, Custom };
enum class CommandSource { Auto, Human };

struct ActuatorCommand {
  CommandKind kind = CommandKind::Pause;
  std::string name;  // custom commands only
  CommandSource source = CommandSource::Human;
  std::optional<std::uint64_t> alert_id;

  /// `pause`, `resume`, `terminate`, `acknowledge` or a custom name.
  static ActuatorCommand named(std::string_view name, CommandSource source,
                               std::optional<std::uint64_t> alert_id = std::nullopt);
  std::string label() const;
};

std::string_view to_string(CommandSource s) noexcept;

struct AuditEntry {
  std::uint64_t seq = 0;
  ActuatorCommand command;
  std::int64_t timestamp_ms = 0;
  std::optional<std::string> error;
};

/// What an actuator callback gets to see.
struct ActuatorInvocation {
  const ActuatorCommand& command;
  const Alert* alert;  // set for on_violation dispatches
  std::uint64_t revision;
};

using Actuator = std::function<void(const ActuatorInvocation&)>;

enum class AgentState { Running, Paused, Terminated };
std::string_view to_string(AgentState s) noexcept;

/// Queue accounting. accepted == applied + failed + dropped + queued.
struct EngineCounters {
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;  // refused at the door, never accepted
  std::uint64_t dropped = 0;   // evicted by drop-oldest
  std::uint64_t applied = 0;
  std::uint64_t failed = 0;  // name errors at apply time
  std::uint64_t queued = 0;
  std::uint64_t cycles = 0;
  std::uint64_t raw_dropped = 0;  // raw events the abstractors discarded
};

struct ResultEntry {
  VerificationResult result;
  std::uint64_t cycle = 0;
};

/// Everything one analysis cycle produced.
struct CycleReport {
  std::uint64_t cycle = 0;
  std::uint64_t revision = 0;
  std::vector<VerificationResult> results;
  std::vector<Alert> alerts;  // newly raised this cycle
};

using CycleListener = std::function<void(const CycleReport&)>;

enum class RunMode {
  Background,  // analyzer thread drains the queue
  Inline,      // producers drain the queue themselves when it fills up
  Manual,      // nothing drains until pump()
};

/// The live loop: bounded queue, single consumer owning the learner,
/// periodic checking, edge-triggered alerts and actuators.
class Guard {
 public:
  explicit Guard(GuardConfig cfg);
  ~Guard();
  Guard(const Guard&) = delete;
  Guard& operator=(const Guard&) = delete;

  const GuardConfig& config() const noexcept { return cfg_; }

  void start(RunMode mode = RunMode::Background);
  /// Drains the queue, runs a last cycle when events arrived since the
  /// previous one, and joins the analyzer.
  void stop();
  bool running() const noexcept { return running_.load(); }

  /// Enqueues one transition and returns its sequence number. Throws
  /// EngineNotRunning before start and RejectedEvent when the queue is full
  /// under the reject policy.
  std::uint64_t log_transition(TransitionEvent ev, std::string_view session = "default");
  std::uint64_t log_transition(std::string state, std::string action, std::string next_state,
                               std::optional<double> reward = std::nullopt);
  /// Enqueues a batch in order. Under the reject policy the batch is taken
  /// whole or not at all. Returns the number enqueued.
  std::size_t log_batch(std::span<const TransitionEvent> events, std::string_view session = "default");
  /// Feeds a raw instrumentation event through the session's abstractor.
  std::optional<std::uint64_t> log_raw(const RawEvent& raw, std::string_view session = "default");

  /// Strict-mode name check against the configuration; throws
  /// UnknownState / UnknownAction.
  void check_names(const TransitionEvent& ev) const;

  /// Manual and inline modes: applies everything queued on this thread.
  /// Background mode: waits until the analyzer has caught up.
  void pump();
  /// Drains, then runs a cycle now regardless of the event count.
  CycleReport run_analysis_cycle();

  void register_actuator(std::string name, Actuator callback);
  /// Routes a command; every call lands in the audit log. Throws
  /// UnknownCommand / UnknownAlert. Callback failures are logged and
  /// returned in the audit entry, never thrown.
  AuditEntry dispatch(const ActuatorCommand& cmd);

  void add_listener(CycleListener listener);
  /// JSONL trace of every applied event.
  void set_trace_log(std::ostream* out);

  std::shared_ptr<const ModelSnapshot> latest_snapshot() const;
  std::vector<ResultEntry> results() const;
  std::vector<Alert> alerts() const;  // newest first
  std::vector<AuditEntry> audit_log() const;
  EngineCounters counters() const;
  std::uint64_t cycle() const;
  AgentState agent_state() const;
  /// Whether any property's latest result violates its threshold.
  bool violation_present() const;

 private:
  struct Queued {
    std::uint64_t seq;
    std::string session;
    TransitionEvent event;
  };

  std::uint64_t enqueue_locked(std::unique_lock<std::mutex>& lock, TransitionEvent ev, std::string_view session);
  void require_running() const;
  void consumer_loop();
  void drain_on_this_thread();
  void apply(Queued& q);
  CycleReport cycle_locked();
  std::vector<Alert> evaluate_thresholds(const std::vector<VerificationResult>& results, std::uint64_t revision,
                                         std::uint64_t cycle);
  void invoke(const std::string& name, const ActuatorCommand& cmd, const Alert* alert, std::uint64_t revision);

  GuardConfig cfg_;
  RunMode mode_ = RunMode::Background;
  std::atomic<bool> running_{false};

  // Queue.
  mutable std::mutex queue_mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::condition_variable idle_;
  std::deque<Queued> queue_;
  bool stopping_ = false;
  bool busy_ = false;
  std::uint64_t next_seq_ = 1;
  EngineCounters counters_;

  // Consumer-owned.
  std::mutex consumer_mutex_;
  LearnedMdp model_;
  std::uint64_t since_cycle_ = 0;
  std::uint64_t since_decay_ = 0;
  std::ostream* trace_out_ = nullptr;
  std::thread analyzer_;

  // Raw abstraction per session.
  std::mutex raw_mutex_;
  std::map<std::string, EventAbstractor, std::less<>> sessions_;

  // Published state.
  mutable std::mutex state_mutex_;
  std::shared_ptr<const ModelSnapshot> snapshot_;
  std::vector<ResultEntry> results_;
  std::vector<bool> armed_;
  std::deque<Alert> alerts_;
  std::deque<AuditEntry> audit_;
  std::uint64_t cycle_ = 0;
  std::uint64_t next_alert_ = 1;
  std::uint64_t next_audit_ = 1;
  AgentState agent_state_ = AgentState::Running;
  std::vector<CycleListener> listeners_;

  std::mutex command_mutex_;
  std::map<std::string, Actuator, std::less<>> actuators_;
};

struct ReplayOptions {
  /// Playback speed relative to the recorded timestamps; unset replays as
  /// fast as possible.
  std::optional<double> speed;
};

/// Feeds a recorded trace through `guard` (started inline when idle) and
/// stops it, so the final cycle matches the live run that produced the
/// trace. Returns the number of events fed.
std::uint64_t replay_trace(Guard& guard, std::span<const TraceRecord> trace, const ReplayOptions& options = {});

}  // namespace agentguard
