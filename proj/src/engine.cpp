#include "agentguard/engine.hpp"

#include <spdlog/spdlog.h>

#include <chrono>

namespace agentguard {

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string describe(const Value& v) {
  switch (v.kind) {
    case Value::Kind::Finite: return pctl::format_number(v.number);
    case Value::Kind::Infinite: return "inf";
    case Value::Kind::Undefined: return "undefined";
  }
  return "undefined";
}

constexpr auto kSlowCallback = std::chrono::milliseconds(100);
constexpr std::size_t kDrainBatch = 1024;

}  // namespace

ActuatorCommand ActuatorCommand::named(std::string_view name, CommandSource source,
                                       std::optional<std::uint64_t> alert_id) {
  ActuatorCommand cmd;
  cmd.source = source;
  cmd.alert_id = alert_id;
  if (name == "pause") {
    cmd.kind = CommandKind::Pause;
  } else if (name == "resume") {
    cmd.kind = CommandKind::Resume;
  } else if (name == "terminate") {
    cmd.kind = CommandKind::Terminate;
  } else if (name == "acknowledge") {
    cmd.kind = CommandKind::Acknowledge;
  } else {
    cmd.kind = CommandKind::Custom;
    cmd.name = std::string(name);
  }
  return cmd;
}

std::string ActuatorCommand::label() const {
  switch (kind) {
    case CommandKind::Pause: return "pause";
    case CommandKind::Resume: return "resume";
    case CommandKind::Terminate: return "terminate";
    case CommandKind::Acknowledge: return "acknowledge";
    case CommandKind::Custom: return name;
  }
  return name;
}

std::string_view to_string(CommandSource s) noexcept { return s == CommandSource::Auto ? "auto" : "human"; }

std::string_view to_string(AgentState s) noexcept {
  switch (s) {
    case AgentState::Running: return "running";
    case AgentState::Paused: return "paused";
    case AgentState::Terminated: return "terminated";
  }
  return "running";
}

Guard::Guard(GuardConfig cfg) : cfg_(std::move(cfg)), model_(cfg_.make_model()) {
  armed_.assign(cfg_.properties.size(), true);
}

Guard::~Guard() {
  try {
    stop();
  } catch (const std::exception& e) {
    spdlog::error("stopping the engine failed: {}", e.what());
  }
}

void Guard::start(RunMode mode) {
  if (running_.load()) return;
  mode_ = mode;
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = false;
  }
  running_ = true;
  if (mode_ == RunMode::Background) analyzer_ = std::thread([this] { consumer_loop(); });
}

void Guard::stop() {
  if (!running_.exchange(false)) return;
  if (mode_ == RunMode::Background) {
    {
      std::lock_guard lock(queue_mutex_);
      stopping_ = true;
    }
    not_empty_.notify_all();
    analyzer_.join();
  } else {
    drain_on_this_thread();
  }
  std::lock_guard consumer(consumer_mutex_);
  if (since_cycle_ > 0) cycle_locked();
}

void Guard::require_running() const {
  if (!running_.load()) throw Error(ErrorCode::EngineNotRunning, "the engine has not been started");
}

void Guard::check_names(const TransitionEvent& ev) const {
  if (cfg_.learner.mode != RegistrationMode::Strict) {
    for (const auto* name : {&ev.state, &ev.next_state}) {
      if (!is_identifier(*name)) throw Error(ErrorCode::UnknownState, "invalid state name '" + *name + "'");
    }
    if (!is_identifier(ev.action)) throw Error(ErrorCode::UnknownAction, "invalid action name '" + ev.action + "'");
    return;
  }
  for (const auto* name : {&ev.state, &ev.next_state}) {
    if (!cfg_.has_state(*name)) throw Error(ErrorCode::UnknownState, "unknown state '" + *name + "'");
  }
  if (!cfg_.has_action(ev.action) && !is_reserved_action(ev.action)) {
    throw Error(ErrorCode::UnknownAction, "unknown action '" + ev.action + "'");
  }
}

std::uint64_t Guard::enqueue_locked(std::unique_lock<std::mutex>& lock, TransitionEvent ev, std::string_view session) {
  const auto policy = cfg_.learner.queue_policy;
  const auto capacity = cfg_.learner.queue_capacity;
  const bool drain_here = mode_ == RunMode::Inline || (mode_ == RunMode::Manual && policy == QueuePolicy::Block);
  while (queue_.size() >= capacity) {
    if (drain_here) {
      lock.unlock();
      drain_on_this_thread();
      lock.lock();
      continue;
    }
    if (policy == QueuePolicy::Reject) {
      ++counters_.rejected;
      throw Error(ErrorCode::RejectedEvent, "event queue is full");
    }
    if (policy == QueuePolicy::DropOldest) {
      queue_.pop_front();
      ++counters_.dropped;
      continue;
    }
    not_full_.wait(lock);
  }
  if (!ev.timestamp_ms) ev.timestamp_ms = now_ms();
  const std::uint64_t seq = next_seq_++;
  queue_.push_back({seq, std::string(session), std::move(ev)});
  ++counters_.accepted;
  return seq;
}

std::uint64_t Guard::log_transition(TransitionEvent ev, std::string_view session) {
  require_running();
  std::unique_lock lock(queue_mutex_);
  auto seq = enqueue_locked(lock, std::move(ev), session);
  lock.unlock();
  not_empty_.notify_one();
  return seq;
}

std::uint64_t Guard::log_transition(std::string state, std::string action, std::string next_state,
                                    std::optional<double> reward) {
  return log_transition(TransitionEvent{std::move(state), std::move(action), std::move(next_state), reward, {}});
}

std::size_t Guard::log_batch(std::span<const TransitionEvent> events, std::string_view session) {
  require_running();
  std::unique_lock lock(queue_mutex_);
  if (cfg_.learner.queue_policy == QueuePolicy::Reject && mode_ != RunMode::Inline &&
      queue_.size() + events.size() > cfg_.learner.queue_capacity) {
    counters_.rejected += events.size();
    throw Error(ErrorCode::RejectedEvent, "event queue cannot take the whole batch");
  }
  for (const auto& ev : events) enqueue_locked(lock, ev, session);
  lock.unlock();
  not_empty_.notify_one();
  return events.size();
}

std::optional<std::uint64_t> Guard::log_raw(const RawEvent& raw, std::string_view session) {
  require_running();
  std::optional<TransitionEvent> ev;
  {
    std::lock_guard lock(raw_mutex_);
    auto it = sessions_.find(session);
    if (it == sessions_.end()) {
      if (!cfg_.initial) throw ConfigError("initial", "raw events need a configured initial state");
      it = sessions_.try_emplace(std::string(session), cfg_, *cfg_.initial).first;
    }
    const auto before = it->second.dropped();
    ev = it->second.abstract_event(raw);
    const auto lost = it->second.dropped() - before;
    if (lost > 0) {
      std::lock_guard q(queue_mutex_);
      counters_.raw_dropped += lost;
    }
  }
  if (!ev) return std::nullopt;
  return log_transition(std::move(*ev), session);
}

void Guard::pump() {
  if (mode_ == RunMode::Background && running_.load()) {
    std::unique_lock lock(queue_mutex_);
    idle_.wait(lock, [&] { return queue_.empty() && !busy_; });
    return;
  }
  drain_on_this_thread();
}

void Guard::drain_on_this_thread() {
  std::lock_guard consumer(consumer_mutex_);
  std::vector<Queued> batch;
  while (true) {
    {
      std::lock_guard lock(queue_mutex_);
      if (queue_.empty()) break;
      const std::size_t take = std::min(queue_.size(), kDrainBatch);
      for (std::size_t i = 0; i < take; ++i) {
        batch.push_back(std::move(queue_.front()));
        queue_.pop_front();
      }
    }
    not_full_.notify_all();
    for (auto& q : batch) apply(q);
    batch.clear();
  }
}

void Guard::consumer_loop() {
  using clock = std::chrono::steady_clock;
  const bool timed = cfg_.analysis.also_every_ms.has_value();
  const std::chrono::milliseconds period(cfg_.analysis.also_every_ms.value_or(0));
  auto deadline = clock::now() + period;
  std::vector<Queued> batch;
  while (true) {
    bool tick = false;
    {
      std::unique_lock lock(queue_mutex_);
      auto ready = [&] { return stopping_ || !queue_.empty(); };
      if (timed) {
        tick = !not_empty_.wait_until(lock, deadline, ready);
      } else {
        not_empty_.wait(lock, ready);
      }
      if (queue_.empty() && stopping_) break;
      const std::size_t take = std::min(queue_.size(), kDrainBatch);
      for (std::size_t i = 0; i < take; ++i) {
        batch.push_back(std::move(queue_.front()));
        queue_.pop_front();
      }
      busy_ = true;
    }
    not_full_.notify_all();
    {
      std::lock_guard consumer(consumer_mutex_);
      for (auto& q : batch) apply(q);
      if (timed && clock::now() >= deadline) tick = true;
      if (tick) {
        deadline = clock::now() + period;
        if (since_cycle_ > 0) cycle_locked();
      }
    }
    batch.clear();
    {
      std::lock_guard lock(queue_mutex_);
      busy_ = false;
    }
    idle_.notify_all();
  }
  std::lock_guard lock(queue_mutex_);
  busy_ = false;
  idle_.notify_all();
}

void Guard::apply(Queued& q) {
  if (trace_out_) {
    *trace_out_ << format_trace_line({q.seq, q.session, q.event.timestamp_ms.value_or(0), q.event});
  }
  bool ok = true;
  try {
    model_.record_transition(q.event);
  } catch (const Error& e) {
    ok = false;
    spdlog::warn("event {} rejected by the learner: {}: {}", q.seq, to_string(e.code()), e.what());
  }
  {
    std::lock_guard lock(queue_mutex_);
    ++(ok ? counters_.applied : counters_.failed);
  }
  ++since_cycle_;
  if (cfg_.learner.decay.every > 0 && ++since_decay_ >= cfg_.learner.decay.every) {
    since_decay_ = 0;
    model_.apply_forgetting(cfg_.learner.decay.lambda);
  }
  if (since_cycle_ >= cfg_.analysis.every_events) cycle_locked();
}

CycleReport Guard::run_analysis_cycle() {
  pump();
  std::lock_guard consumer(consumer_mutex_);
  return cycle_locked();
}

CycleReport Guard::cycle_locked() {
  auto snap = std::make_shared<const ModelSnapshot>(model_.snapshot());
  since_cycle_ = 0;
  CycleReport report;
  report.revision = snap->revision();
  report.results.reserve(cfg_.properties.size());
  for (const auto& decl : cfg_.properties) {
    VerificationResult r;
    try {
      r = check(*snap, decl.property, cfg_.checker.settings);
    } catch (const Error& e) {
      r = VerificationResult{};
      r.error = std::string(to_string(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      r = VerificationResult{};
      r.error = e.what();
    }
    r.property = decl.name;
    r.revision = snap->revision();
    report.results.push_back(std::move(r));
  }
  {
    std::lock_guard lock(state_mutex_);
    report.cycle = ++cycle_;
    snapshot_ = snap;
    results_.clear();
    for (const auto& r : report.results) results_.push_back({r, report.cycle});
  }
  {
    std::lock_guard lock(queue_mutex_);
    ++counters_.cycles;
  }
  for (const auto& r : report.results) {
    if (r.error) {
      spdlog::info("[cycle {} rev {}] {} : error {}", report.cycle, report.revision, r.property, *r.error);
    } else {
      spdlog::info("[cycle {} rev {}] {} = {}{}{}", report.cycle, report.revision, r.property, describe(r.value),
                   r.satisfied ? (*r.satisfied ? " (satisfied)" : " (VIOLATED)") : "",
                   r.converged ? "" : " (not converged)");
    }
  }
  report.alerts = evaluate_thresholds(report.results, report.revision, report.cycle);

  std::vector<CycleListener> listeners;
  {
    std::lock_guard lock(state_mutex_);
    listeners = listeners_;
  }
  for (const auto& l : listeners) {
    try {
      l(report);
    } catch (const std::exception& e) {
      spdlog::error("cycle listener failed: {}", e.what());
    }
  }
  return report;
}

std::vector<Alert> Guard::evaluate_thresholds(const std::vector<VerificationResult>& results, std::uint64_t revision,
                                              std::uint64_t cycle) {
  std::vector<Alert> raised;
  for (std::size_t i = 0; i < results.size() && i < cfg_.properties.size(); ++i) {
    const auto& decl = cfg_.properties[i];
    const auto& r = results[i];
    if (!decl.property.threshold || !r.satisfied) continue;
    Alert alert;
    {
      std::lock_guard lock(state_mutex_);
      if (*r.satisfied) {
        armed_[i] = true;
        continue;
      }
      if (!armed_[i]) continue;
      armed_[i] = false;
      alert.id = next_alert_++;
      alert.property = decl.name;
      alert.severity = decl.severity;
      alert.observed = r.value;
      alert.threshold = *decl.property.threshold;
      alert.revision = revision;
      alert.cycle = cycle;
      alert.timestamp_ms = now_ms();
      alert.callback = decl.on_violation;
      alerts_.push_front(alert);
      while (alerts_.size() > cfg_.api.history) alerts_.pop_back();
    }
    spdlog::warn("ALERT {} [{}] {} = {} violates {} {}", alert.id, to_string(alert.severity), alert.property,
                 describe(alert.observed), pctl::to_string(alert.threshold.op),
                 pctl::format_number(alert.threshold.value));
    if (decl.on_violation) {
      std::optional<std::string> failure;
      try {
        auto entry = dispatch(ActuatorCommand::named(*decl.on_violation, CommandSource::Auto, alert.id));
        failure = entry.error;
      } catch (const std::exception& e) {
        failure = e.what();
      }
      if (failure) {
        alert.callback_error = failure;
        std::lock_guard lock(state_mutex_);
        for (auto& a : alerts_) {
          if (a.id == alert.id) a.callback_error = failure;
        }
      }
    }
    raised.push_back(std::move(alert));
  }
  return raised;
}

void Guard::register_actuator(std::string name, Actuator callback) {
  if (name == "acknowledge") throw Error(ErrorCode::UnknownCommand, "acknowledge is handled by the engine");
  if (!is_identifier(name)) throw Error(ErrorCode::UnknownCommand, "invalid actuator name '" + name + "'");
  std::lock_guard lock(command_mutex_);
  actuators_[std::move(name)] = std::move(callback);
}

void Guard::invoke(const std::string& name, const ActuatorCommand& cmd, const Alert* alert, std::uint64_t revision) {
  auto it = actuators_.find(name);
  if (it == actuators_.end()) return;
  const auto start = std::chrono::steady_clock::now();
  it->second(ActuatorInvocation{cmd, alert, revision});
  const auto took = std::chrono::steady_clock::now() - start;
  if (took > kSlowCallback) {
    spdlog::warn("actuator '{}' took {} ms; callbacks must not block", name,
                 std::chrono::duration_cast<std::chrono::milliseconds>(took).count());
  }
}

AuditEntry Guard::dispatch(const ActuatorCommand& cmd) {
  std::lock_guard lock(command_mutex_);
  AuditEntry entry;
  entry.command = cmd;
  entry.timestamp_ms = now_ms();

  std::optional<Alert> alert;
  std::uint64_t revision = 0;
  {
    std::lock_guard state(state_mutex_);
    entry.seq = next_audit_++;
    if (snapshot_) revision = snapshot_->revision();
    if (cmd.alert_id) {
      for (const auto& a : alerts_) {
        if (a.id == *cmd.alert_id) alert = a;
      }
    }
  }
  auto record = [&] {
    std::lock_guard state(state_mutex_);
    audit_.push_front(entry);
    while (audit_.size() > cfg_.api.history) audit_.pop_back();
  };
  auto refuse = [&](ErrorCode code, const std::string& message) {
    entry.error = message;
    record();
    throw Error(code, message);
  };

  const std::string name = cmd.label();
  if (cmd.kind == CommandKind::Acknowledge) {
    if (!cmd.alert_id) refuse(ErrorCode::UnknownAlert, "acknowledge needs an alert id");
    if (!alert) refuse(ErrorCode::UnknownAlert, "no alert with id " + std::to_string(*cmd.alert_id));
    std::lock_guard state(state_mutex_);
    for (auto& a : alerts_) {
      if (a.id != *cmd.alert_id) continue;
      a.acknowledged = true;
      for (std::size_t i = 0; i < cfg_.properties.size(); ++i) {
        if (cfg_.properties[i].name == a.property) armed_[i] = true;
      }
    }
  } else {
    if (cmd.kind == CommandKind::Custom && !actuators_.contains(name)) {
      refuse(ErrorCode::UnknownCommand, "no actuator registered as '" + name + "'");
    }
    if (cmd.kind != CommandKind::Custom) {
      std::lock_guard state(state_mutex_);
      agent_state_ = cmd.kind == CommandKind::Pause       ? AgentState::Paused
                     : cmd.kind == CommandKind::Terminate ? AgentState::Terminated
                                                          : AgentState::Running;
    }
    try {
      invoke(name, cmd, alert ? &*alert : nullptr, revision);
    } catch (const std::exception& e) {
      entry.error = e.what();
    } catch (...) {
      entry.error = "unknown exception";
    }
    if (entry.error) spdlog::error("actuator '{}' failed: {}", name, *entry.error);
  }
  spdlog::info("dispatch {} source={}{}", name, to_string(cmd.source), entry.error ? " (failed)" : "");
  record();
  return entry;
}

void Guard::add_listener(CycleListener listener) {
  std::lock_guard lock(state_mutex_);
  listeners_.push_back(std::move(listener));
}

void Guard::set_trace_log(std::ostream* out) {
  std::lock_guard consumer(consumer_mutex_);
  trace_out_ = out;
}

std::shared_ptr<const ModelSnapshot> Guard::latest_snapshot() const {
  std::lock_guard lock(state_mutex_);
  return snapshot_;
}

std::vector<ResultEntry> Guard::results() const {
  std::lock_guard lock(state_mutex_);
  return results_;
}

std::vector<Alert> Guard::alerts() const {
  std::lock_guard lock(state_mutex_);
  return {alerts_.begin(), alerts_.end()};
}

std::vector<AuditEntry> Guard::audit_log() const {
  std::lock_guard lock(state_mutex_);
  return {audit_.begin(), audit_.end()};
}

EngineCounters Guard::counters() const {
  std::lock_guard lock(queue_mutex_);
  auto c = counters_;
  c.queued = queue_.size();
  return c;
}

std::uint64_t Guard::cycle() const {
  std::lock_guard lock(state_mutex_);
  return cycle_;
}

AgentState Guard::agent_state() const {
  std::lock_guard lock(state_mutex_);
  return agent_state_;
}

bool Guard::violation_present() const {
  std::lock_guard lock(state_mutex_);
  for (const auto& e : results_) {
    if (e.result.satisfied == false) return true;
  }
  return false;
}

std::uint64_t replay_trace(Guard& guard, std::span<const TraceRecord> trace, const ReplayOptions& options) {
  if (options.speed && !(*options.speed > 0.0)) throw Error(ErrorCode::ConfigError, "replay speed must be > 0");
  if (!guard.running()) guard.start(RunMode::Inline);
  std::optional<std::int64_t> previous;
  std::uint64_t fed = 0;
  for (const auto& rec : trace) {
    if (options.speed && previous && rec.ts > *previous) {
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>((rec.ts - *previous) / *options.speed));
    }
    previous = rec.ts;
    TransitionEvent ev = rec.event;
    ev.timestamp_ms = rec.ts;
    guard.log_transition(std::move(ev), rec.session);
    ++fed;
  }
  guard.stop();
  return fed;
}

}  // namespace agentguard
