#include "agentguard/prism.hpp"

#include "agentguard/pctl.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <algorithm>
#include <sstream>

namespace agentguard {

namespace {

std::string weight_text(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.0f", w);
  return buf;
}

std::string decimal_text(double p) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

bool absorbing(const ModelSnapshot& snap, StateId s) { return snap.is_terminal(s) || snap.choices(s).empty(); }

}  // namespace

std::string export_prism(const ModelSnapshot& snap) {
  if (snap.empty()) throw Error(ErrorCode::EmptyModel, "cannot export a model without states");
  const std::size_t n = snap.state_count();
  std::ostringstream out;
  out << "mdp\n\n";
  for (std::size_t s = 0; s < n; ++s) {
    out << "// s=" << s << " : " << snap.state_names()[s];
    if (snap.is_terminal(state_at(s))) out << " terminal";
    out << '\n';
  }
  for (std::size_t a = 0; a < snap.action_count(); ++a) out << "// a=" << a << " : " << snap.action_names()[a] << '\n';
  out << "\nmodule agent\n";
  out << "  s : [0.." << n - 1 << "]";
  if (auto init = snap.initial()) out << " init " << index_of(*init);
  out << ";\n";
  for (std::size_t s = 0; s < n; ++s) {
    const auto id = state_at(s);
    if (absorbing(snap, id)) {
      out << "  [" << kSelfLoopAction << "] s=" << s << " -> 1/1:(s'=" << s << ");\n";
      continue;
    }
    for (const auto& choice : snap.choices(id)) {
      out << "  [" << snap.action_name(choice.action) << "] s=" << s << " -> ";
      bool first = true;
      for (const auto& succ : choice.successors) {
        if (!first) out << " + ";
        first = false;
        if (snap.exact()) {
          out << weight_text(succ.weight) << '/' << weight_text(choice.weight);
        } else {
          out << decimal_text(succ.probability);
        }
        out << ":(s'=" << index_of(succ.state) << ')';
      }
      out << ";\n";
    }
  }
  out << "endmodule\n";

  if (!snap.labels().empty()) out << '\n';
  for (const auto& [name, states] : snap.labels()) {
    out << "label \"" << name << "\" = ";
    if (states.empty()) out << "false";
    for (std::size_t i = 0; i < states.size(); ++i) out << (i ? " | " : "") << "s=" << index_of(states[i]);
    out << ";\n";
  }

  for (std::size_t r = 0; r < snap.reward_names().size(); ++r) {
    out << "\nrewards \"" << snap.reward_names()[r] << "\"\n";
    for (std::size_t s = 0; s < n; ++s) {
      const auto id = state_at(s);
      if (absorbing(snap, id)) continue;
      for (const auto& choice : snap.choices(id)) {
        const auto& succs = choice.successors;
        const bool uniform = std::all_of(succs.begin(), succs.end(),
                                         [&](const auto& x) { return x.rewards[r] == succs.front().rewards[r]; });
        double value = 0.0;
        if (uniform && !succs.empty()) {
          value = succs.front().rewards[r];
        } else {
          for (const auto& succ : succs) value += succ.probability * succ.rewards[r];
        }
        if (value == 0.0) continue;
        out << "  [" << snap.action_name(choice.action) << "] s=" << s << " : " << pctl::format_number(value) << ";\n";
      }
    }
    out << "endrewards\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Import

namespace {

class PrismReader {
 public:
  explicit PrismReader(std::string_view text) : text_(text) {}

  ModelSnapshot read() {
    split_lines();
    for (line_no_ = 1; line_no_ <= lines_.size(); ++line_no_) {
      std::string_view line = trim(lines_[line_no_ - 1]);
      if (line.starts_with("//")) {
        comment(line.substr(2));
        continue;
      }
      if (line.empty()) continue;
      switch (section_) {
        case Section::Header: header(line); break;
        case Section::Top: top(line); break;
        case Section::Module: module_line(line); break;
        case Section::Rewards: reward_line(line); break;
      }
    }
    if (section_ == Section::Header) fail("missing model type");
    if (section_ != Section::Top) fail("unterminated block");
    if (!declared_) fail("missing state variable");
    return build();
  }

 private:
  enum class Section { Header, Top, Module, Rewards };

  struct Command {
    std::string action;
    std::vector<std::pair<std::size_t, double>> weights;  // target, numerator
    double denominator = 1.0;
    bool fractions = true;
  };

  [[noreturn]] void fail(const std::string& what) const {
    throw LocatedError(ErrorCode::UnsupportedConstruct, line_no_, 0, what);
  }

  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

  void split_lines() {
    std::size_t start = 0;
    while (start <= text_.size()) {
      auto end = text_.find('\n', start);
      if (end == std::string_view::npos) end = text_.size();
      lines_.push_back(text_.substr(start, end - start));
      start = end + 1;
    }
  }

  // Cursor helpers over one line.
  struct Cursor {
    std::string_view rest;
    bool eat(std::string_view token) {
      rest = trim(rest);
      if (!rest.starts_with(token)) return false;
      rest.remove_prefix(token.size());
      return true;
    }
    std::optional<std::size_t> index() {
      rest = trim(rest);
      std::size_t v = 0;
      auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
      if (ec != std::errc() || ptr == rest.data()) return std::nullopt;
      rest.remove_prefix(static_cast<std::size_t>(ptr - rest.data()));
      return v;
    }
    std::optional<double> number() {
      rest = trim(rest);
      double v = 0;
      auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
      if (ec != std::errc() || ptr == rest.data()) return std::nullopt;
      rest.remove_prefix(static_cast<std::size_t>(ptr - rest.data()));
      return v;
    }
    std::string_view until(char c) {
      auto pos = rest.find(c);
      if (pos == std::string_view::npos) return {};
      auto out = rest.substr(0, pos);
      rest.remove_prefix(pos + 1);
      return out;
    }
    bool done() { return trim(rest).empty(); }
  };

  void comment(std::string_view body) {
    Cursor c{body};
    bool state = c.eat("s=");
    if (!state && !c.eat("a=")) return;
    auto idx = c.index();
    if (!idx || !c.eat(":")) return;
    std::string_view rest = trim(c.rest);
    auto space = rest.find(' ');
    std::string name(rest.substr(0, space));
    if (state) {
      state_names_[*idx] = name;
      if (space != std::string_view::npos && trim(rest.substr(space)) == "terminal") terminal_.push_back(*idx);
    } else {
      action_names_[*idx] = name;
    }
  }

  void header(std::string_view line) {
    if (line != "mdp") fail("unsupported model type '" + std::string(line) + "'");
    section_ = Section::Top;
  }

  void top(std::string_view line) {
    Cursor c{line};
    if (c.eat("module")) {
      if (seen_module_) fail("more than one module");
      if (trim(c.rest) != "agent") fail("expected module agent");
      seen_module_ = true;
      section_ = Section::Module;
    } else if (c.eat("label")) {
      label(c);
    } else if (c.eat("rewards")) {
      auto name = quoted(c);
      if (rewards_.contains(name)) fail("duplicate rewards block \"" + name + "\"");
      reward_order_.push_back(name);
      current_reward_ = &rewards_[name];
      if (!c.done()) fail("unexpected text after rewards name");
      section_ = Section::Rewards;
    } else {
      fail("unsupported construct '" + std::string(line) + "'");
    }
  }

  std::string quoted(Cursor& c) {
    if (!c.eat("\"")) fail("expected a quoted name");
    auto name = c.until('"');
    if (name.empty()) fail("expected a quoted name");
    return std::string(name);
  }

  void label(Cursor& c) {
    auto name = quoted(c);
    if (labels_.contains(name)) fail("duplicate label \"" + name + "\"");
    if (!c.eat("=")) fail("expected '='");
    auto& members = labels_[name];
    if (c.eat("false")) {
      if (!c.eat(";") || !c.done()) fail("expected ';'");
      return;
    }
    while (true) {
      if (!c.eat("s=")) fail("expected s=<index>");
      auto idx = c.index();
      if (!idx) fail("expected a state index");
      members.push_back(*idx);
      if (c.eat("|")) continue;
      if (!c.eat(";") || !c.done()) fail("expected ';'");
      return;
    }
  }

  void module_line(std::string_view line) {
    Cursor c{line};
    if (c.eat("endmodule")) {
      if (!c.done()) fail("unexpected text after endmodule");
      section_ = Section::Top;
      return;
    }
    if (c.eat("[")) {
      command(c);
      return;
    }
    if (c.eat("s") && c.eat(":")) {
      if (declared_) fail("second variable declaration");
      if (!c.eat("[")) fail("expected range");
      auto lo = c.index();
      if (!lo || *lo != 0 || !c.eat("..")) fail("range must start at 0");
      auto hi = c.index();
      if (!hi || !c.eat("]")) fail("expected range upper bound");
      state_count_ = *hi + 1;
      if (c.eat("init")) {
        auto init = c.index();
        if (!init || *init >= state_count_) fail("initial state out of range");
        initial_ = *init;
      }
      if (!c.eat(";") || !c.done()) fail("expected ';'");
      declared_ = true;
      return;
    }
    fail("unsupported construct '" + std::string(line) + "'");
  }

  void command(Cursor& c) {
    if (!declared_) fail("command before variable declaration");
    Command cmd;
    cmd.action = std::string(c.until(']'));
    if (!is_identifier(cmd.action)) fail("invalid action name");
    if (!c.eat("s=")) fail("expected guard s=<index>");
    auto source = c.index();
    if (!source || *source >= state_count_) fail("guard state out of range");
    if (!c.eat("->")) fail("expected '->'");
    std::optional<double> denominator;
    while (true) {
      auto num = c.number();
      if (!num) fail("expected a probability");
      double weight = *num;
      if (c.eat("/")) {
        auto den = c.number();
        if (!den || *den <= 0) fail("expected a denominator");
        if (denominator && *denominator != *den) fail("mixed denominators in one command");
        denominator = *den;
      } else {
        cmd.fractions = false;
      }
      if (!c.eat(":") || !c.eat("(") || !c.eat("s'=")) fail("expected :(s'=<index>)");
      auto target = c.index();
      if (!target || *target >= state_count_) fail("target state out of range");
      if (!c.eat(")")) fail("expected ')'");
      cmd.weights.emplace_back(*target, weight);
      if (c.eat("+")) continue;
      if (!c.eat(";") || !c.done()) fail("expected ';'");
      break;
    }
    if (cmd.fractions != denominator.has_value()) fail("mixed fractions and decimals in one command");
    cmd.denominator = denominator.value_or(1.0);
    auto key = std::make_pair(*source, cmd.action);
    if (commands_.contains(key)) fail("duplicate command");
    command_lines_[key] = line_no_;
    commands_.emplace(key, std::move(cmd));
  }

  void reward_line(std::string_view line) {
    Cursor c{line};
    if (c.eat("endrewards")) {
      if (!c.done()) fail("unexpected text after endrewards");
      section_ = Section::Top;
      return;
    }
    if (!c.eat("[")) fail("only action-based reward items are supported");
    std::string action(c.until(']'));
    if (!c.eat("s=")) fail("expected guard s=<index>");
    auto source = c.index();
    if (!source || !c.eat(":")) fail("expected ':'");
    auto value = c.number();
    if (!value || !c.eat(";") || !c.done()) fail("expected a reward value and ';'");
    auto key = std::make_pair(*source, action);
    if (current_reward_->contains(key)) fail("duplicate reward item");
    (*current_reward_)[key] = *value;
  }

  ModelSnapshot build() {
    SnapshotData data;
    data.states.resize(state_count_);
    for (std::size_t s = 0; s < state_count_; ++s) {
      auto it = state_names_.find(s);
      data.states[s] = it != state_names_.end() ? it->second : "s" + std::to_string(s);
    }
    std::map<std::string, std::size_t> action_index;
    for (const auto& [idx, name] : action_names_) {
      if (idx != data.actions.size()) {
        line_no_ = 0;
        fail("action comments are not contiguous");
      }
      action_index[name] = data.actions.size();
      data.actions.push_back(name);
    }
    std::vector<bool> is_terminal(state_count_, false);
    for (std::size_t t : terminal_) {
      if (t < state_count_) is_terminal[t] = true;
    }
    data.reward_names = reward_order_;
    data.choices.resize(state_count_);
    bool exact = true;
    for (const auto& [key, cmd] : commands_) {
      const auto& [source, action] = key;
      line_no_ = command_lines_[key];
      if (action == kSelfLoopAction) {
        if (cmd.weights.size() != 1 || cmd.weights[0].first != source) fail("__self__ must be a self-loop");
        continue;
      }
      if (!action_index.contains(action)) {
        action_index[action] = data.actions.size();
        data.actions.push_back(action);
      }
      SnapshotChoice choice;
      choice.action = action_at(action_index[action]);
      std::map<std::size_t, double> merged;
      for (const auto& [target, w] : cmd.weights) merged[target] += w;
      double total = 0.0;
      for (const auto& [_, w] : merged) total += w;
      if (!cmd.fractions) exact = false;
      if (cmd.fractions && total != cmd.denominator) fail("fraction numerators do not sum to the denominator");
      if (!cmd.fractions && std::abs(total - 1.0) > 1e-9) {
        fail("probabilities of [" + action + "] s=" + std::to_string(source) + " sum to " + pctl::format_number(total));
      }
      choice.weight = total;
      for (const auto& [target, w] : merged) {
        SnapshotSuccessor succ;
        succ.state = state_at(target);
        succ.weight = w;
        succ.probability = cmd.fractions ? w / cmd.denominator : w;
        succ.rewards.resize(reward_order_.size(), 0.0);
        for (std::size_t r = 0; r < reward_order_.size(); ++r) {
          auto it = rewards_[reward_order_[r]].find(key);
          if (it != rewards_[reward_order_[r]].end()) succ.rewards[r] = it->second;
        }
        choice.successors.push_back(std::move(succ));
      }
      data.choices[source].push_back(std::move(choice));
    }
    for (auto& row : data.choices) {
      std::sort(row.begin(), row.end(),
                [](const SnapshotChoice& a, const SnapshotChoice& b) { return index_of(a.action) < index_of(b.action); });
    }
    for (std::size_t s = 0; s < state_count_; ++s) {
      if (is_terminal[s]) data.terminal.push_back(state_at(s));
    }
    for (const auto& [name, members] : labels_) {
      auto& out = data.labels[name];
      for (std::size_t m : members) {
        if (m >= state_count_) {
          line_no_ = 0;
          fail("label \"" + name + "\" names a state out of range");
        }
        out.push_back(state_at(m));
      }
      std::sort(out.begin(), out.end());
    }
    if (initial_) data.initial = state_at(*initial_);
    data.exact = exact;
    try {
      return ModelSnapshot(std::move(data));
    } catch (const Error& e) {
      line_no_ = 0;
      fail(e.what());
    }
  }

  std::string_view text_;
  std::vector<std::string_view> lines_;
  std::size_t line_no_ = 0;
  Section section_ = Section::Header;
  bool seen_module_ = false;
  bool declared_ = false;
  std::size_t state_count_ = 0;
  std::optional<std::size_t> initial_;
  std::map<std::size_t, std::string> state_names_;
  std::map<std::size_t, std::string> action_names_;
  std::vector<std::size_t> terminal_;
  std::map<std::pair<std::size_t, std::string>, Command> commands_;
  std::map<std::pair<std::size_t, std::string>, std::size_t> command_lines_;
  std::map<std::string, std::vector<std::size_t>> labels_;
  std::vector<std::string> reward_order_;
  std::map<std::string, std::map<std::pair<std::size_t, std::string>, double>> rewards_;
  std::map<std::pair<std::size_t, std::string>, double>* current_reward_ = nullptr;
};

}  // namespace

ModelSnapshot import_prism(std::string_view text) { return PrismReader(text).read(); }

}  // namespace agentguard
