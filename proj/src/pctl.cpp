#include "agentguard/pctl.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

namespace agentguard::pctl {

bool Threshold::holds(double x) const noexcept {
  switch (op) {
    case Comparison::GreaterEqual: return x >= value;
    case Comparison::Greater: return x > value;
    case Comparison::LessEqual: return x <= value;
    case Comparison::Less: return x < value;
  }
  return false;
}

std::string_view to_string(Comparison op) noexcept {
  switch (op) {
    case Comparison::GreaterEqual: return ">=";
    case Comparison::Greater: return ">";
    case Comparison::LessEqual: return "<=";
    case Comparison::Less: return "<";
  }
  return "?";
}

std::string_view to_string(Optimization opt) noexcept {
  switch (opt) {
    case Optimization::Max: return "max";
    case Optimization::Min: return "min";
    case Optimization::Policy: return "policy";
  }
  return "?";
}

namespace {

enum class Tok {
  Word, String, Number, LBracket, RBracket, LBrace, RBrace, LParen, RParen,
  Bang, Amp, Pipe, Query, Ge, Gt, Le, Lt, End,
};

std::string_view describe(Tok t) {
  switch (t) {
    case Tok::Word: return "identifier";
    case Tok::String: return "quoted label";
    case Tok::Number: return "number";
    case Tok::LBracket: return "'['";
    case Tok::RBracket: return "']'";
    case Tok::LBrace: return "'{'";
    case Tok::RBrace: return "'}'";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::Bang: return "'!'";
    case Tok::Amp: return "'&'";
    case Tok::Pipe: return "'|'";
    case Tok::Query: return "'=?'";
    case Tok::Ge: return "'>='";
    case Tok::Gt: return "'>'";
    case Tok::Le: return "'<='";
    case Tok::Lt: return "'<'";
    case Tok::End: return "end of input";
  }
  return "?";
}

struct Token {
  Tok kind = Tok::End;
  std::string_view text;
  std::size_t offset = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view input) : input_(input) { advance(); }

  Property property() {
    Property p;
    Token head = cur_;
    if (head.kind != Tok::Word) fail({"'P'", "'R'"});
    std::string_view word = head.text;
    std::optional<Optimization> opt;
    if (word == "P" || word == "Pmax" || word == "Pmin") {
      p.measure = Measure::Probability;
      if (word == "Pmax") opt = Optimization::Max;
      if (word == "Pmin") opt = Optimization::Min;
      advance();
    } else if (word == "R" || word == "Rmax" || word == "Rmin") {
      p.measure = Measure::Reward;
      if (word == "Rmax") opt = Optimization::Max;
      if (word == "Rmin") opt = Optimization::Min;
      advance();
      if (word == "R" && cur_.kind == Tok::LBrace) {
        advance();
        p.reward_structure = std::string(expect(Tok::String).text);
        expect(Tok::RBrace);
        if (cur_.kind == Tok::Word && (cur_.text == "max" || cur_.text == "min")) {
          opt = cur_.text == "max" ? Optimization::Max : Optimization::Min;
          advance();
        }
      }
    } else {
      fail({"'P'", "'R'"});
    }

    if (cur_.kind == Tok::Query) {
      advance();
      p.opt = opt.value_or(Optimization::Policy);
    } else if (auto cmp = comparison(cur_.kind)) {
      std::size_t at = cur_.offset;
      advance();
      double t = number();
      if (p.measure == Measure::Probability && !(t >= 0.0 && t <= 1.0)) {
        throw Error(ErrorCode::ThresholdError,
                    "probability threshold " + format_number(t) + " outside [0,1] at offset " + std::to_string(at));
      }
      if (p.measure == Measure::Reward && !(t >= 0.0) ) {
        throw Error(ErrorCode::ThresholdError,
                    "reward threshold " + format_number(t) + " must be nonnegative at offset " + std::to_string(at));
      }
      p.threshold = Threshold{*cmp, t};
      p.opt = opt.value_or(p.measure == Measure::Probability ? Optimization::Max : Optimization::Min);
    } else {
      fail({"'=?'", "'>='", "'>'", "'<='", "'<'"});
    }

    expect(Tok::LBracket);
    if (p.measure == Measure::Probability) {
      p.path = path();
    } else {
      if (!(cur_.kind == Tok::Word && cur_.text == "F")) fail({"'F'"});
      advance();
      p.target = formula();
    }
    expect(Tok::RBracket);
    expect(Tok::End);
    return p;
  }

  StateFormula standalone_formula() {
    auto f = formula();
    expect(Tok::End);
    return f;
  }

 private:
  static std::optional<Comparison> comparison(Tok t) {
    switch (t) {
      case Tok::Ge: return Comparison::GreaterEqual;
      case Tok::Gt: return Comparison::Greater;
      case Tok::Le: return Comparison::LessEqual;
      case Tok::Lt: return Comparison::Less;
      default: return std::nullopt;
    }
  }

  PathFormula path() {
    if (cur_.kind == Tok::Word && (cur_.text == "F" || cur_.text == "G")) {
      bool eventually = cur_.text == "F";
      advance();
      auto k = step_bound();
      auto f = formula();
      return eventually ? PathFormula::eventually(std::move(f), k) : PathFormula::globally(std::move(f), k);
    }
    auto left = formula_or_fail({"'F'", "'G'", "state formula"});
    if (!(cur_.kind == Tok::Word && cur_.text == "U")) fail({"'U'", "'&'", "'|'"});
    advance();
    auto k = step_bound();
    auto right = formula();
    return PathFormula::until(std::move(left), std::move(right), k);
  }

  std::optional<std::uint64_t> step_bound() {
    if (cur_.kind != Tok::Le) return std::nullopt;
    advance();
    Token t = cur_;
    if (t.kind != Tok::Number) fail({"step bound"});
    std::int64_t k = 0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), k);
    if (ec != std::errc() || ptr != t.text.data() + t.text.size()) {
      throw SyntaxError(t.offset, {"integer step bound"},
                        "expected an integer step bound at offset " + std::to_string(t.offset));
    }
    if (k <= 0) {
      throw Error(ErrorCode::BoundError,
                  "step bound must be at least 1, got " + std::string(t.text) + " at offset " + std::to_string(t.offset));
    }
    advance();
    return static_cast<std::uint64_t>(k);
  }

  double number() {
    Token t = cur_;
    if (t.kind != Tok::Number) fail({"number"});
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || ptr != t.text.data() + t.text.size() || !std::isfinite(v)) {
      throw SyntaxError(t.offset, {"number"}, "malformed number at offset " + std::to_string(t.offset));
    }
    advance();
    return v;
  }

  // sf := conj ('|' conj)* ; conj := unary ('&' unary)* ; unary := '!' unary | atom
  StateFormula formula() { return formula_or_fail({"state formula"}); }

  StateFormula formula_or_fail(std::vector<std::string> expected) {
    auto left = conjunction(expected);
    while (cur_.kind == Tok::Pipe) {
      advance();
      left = StateFormula::disjunction(std::move(left), conjunction({"state formula"}));
    }
    return left;
  }

  StateFormula conjunction(const std::vector<std::string>& expected) {
    auto left = unary(expected);
    while (cur_.kind == Tok::Amp) {
      advance();
      left = StateFormula::conjunction(std::move(left), unary({"state formula"}));
    }
    return left;
  }

  StateFormula unary(const std::vector<std::string>& expected) {
    switch (cur_.kind) {
      case Tok::Bang:
        advance();
        return StateFormula::negation(unary({"state formula"}));
      case Tok::LParen: {
        advance();
        auto inner = formula();
        expect(Tok::RParen);
        return inner;
      }
      case Tok::String: {
        auto f = StateFormula::atom(std::string(cur_.text));
        advance();
        return f;
      }
      case Tok::Word:
        if (cur_.text == "true") {
          advance();
          return StateFormula::truth();
        }
        if (cur_.text == "false") {
          advance();
          return StateFormula::falsity();
        }
        throw SyntaxError(cur_.offset, expected,
                          "unquoted name '" + std::string(cur_.text) + "' at offset " + std::to_string(cur_.offset) +
                              "; labels must be quoted");
      default:
        fail(expected);
    }
  }

  Token expect(Tok kind) {
    if (cur_.kind != kind) fail({std::string(describe(kind))});
    Token t = cur_;
    advance();
    return t;
  }

  [[noreturn]] void fail(std::vector<std::string> expected) {
    std::string msg = "expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i > 0) msg += i + 1 == expected.size() ? " or " : ", ";
      msg += expected[i];
    }
    msg += " but found " + std::string(describe(cur_.kind));
    if (cur_.kind != Tok::End) msg += " '" + std::string(cur_.text) + "'";
    msg += " at offset " + std::to_string(cur_.offset);
    throw SyntaxError(cur_.offset, std::move(expected), msg);
  }

  std::size_t clamp(std::size_t offset) const {
    if (input_.empty()) return 0;
    return std::min(offset, input_.size() - 1);
  }

  void advance() {
    while (pos_ < input_.size() && (input_[pos_] == ' ' || input_[pos_] == '\t' || input_[pos_] == '\n' ||
                                    input_[pos_] == '\r')) {
      ++pos_;
    }
    const std::size_t start = pos_;
    if (pos_ >= input_.size()) {
      cur_ = {Tok::End, {}, clamp(start)};
      return;
    }
    auto single = [&](Tok kind) {
      ++pos_;
      cur_ = {kind, input_.substr(start, 1), start};
    };
    auto word_char = [](char c) {
      return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    };
    auto digit = [](char c) { return c >= '0' && c <= '9'; };
    const char c = input_[pos_];
    switch (c) {
      case '[': return single(Tok::LBracket);
      case ']': return single(Tok::RBracket);
      case '{': return single(Tok::LBrace);
      case '}': return single(Tok::RBrace);
      case '(': return single(Tok::LParen);
      case ')': return single(Tok::RParen);
      case '!': return single(Tok::Bang);
      case '&': return single(Tok::Amp);
      case '|': return single(Tok::Pipe);
      case '=':
        if (pos_ + 1 < input_.size() && input_[pos_ + 1] == '?') {
          pos_ += 2;
          cur_ = {Tok::Query, input_.substr(start, 2), start};
          return;
        }
        break;
      case '>':
      case '<': {
        bool eq = pos_ + 1 < input_.size() && input_[pos_ + 1] == '=';
        pos_ += eq ? 2 : 1;
        Tok kind = c == '>' ? (eq ? Tok::Ge : Tok::Gt) : (eq ? Tok::Le : Tok::Lt);
        cur_ = {kind, input_.substr(start, pos_ - start), start};
        return;
      }
      case '"': {
        std::size_t end = input_.find('"', pos_ + 1);
        std::size_t newline = input_.find('\n', pos_ + 1);
        if (end == std::string_view::npos || (newline != std::string_view::npos && newline < end)) {
          throw SyntaxError(start, {"closing '\"'"}, "unterminated label at offset " + std::to_string(start));
        }
        if (end == pos_ + 1) throw SyntaxError(start, {"label name"}, "empty label at offset " + std::to_string(start));
        pos_ = end + 1;
        cur_ = {Tok::String, input_.substr(start + 1, end - start - 1), start};
        return;
      }
      default:
        break;
    }
    if (digit(c) || c == '-' || c == '.') {
      ++pos_;
      while (pos_ < input_.size()) {
        char d = input_[pos_];
        if (digit(d) || d == '.') {
          ++pos_;
        } else if ((d == 'e' || d == 'E') && pos_ + 1 < input_.size() &&
                   (digit(input_[pos_ + 1]) || input_[pos_ + 1] == '-' || input_[pos_ + 1] == '+')) {
          pos_ += 2;
        } else {
          break;
        }
      }
      cur_ = {Tok::Number, input_.substr(start, pos_ - start), start};
      return;
    }
    if (word_char(c)) {
      while (pos_ < input_.size() && word_char(input_[pos_])) ++pos_;
      cur_ = {Tok::Word, input_.substr(start, pos_ - start), start};
      return;
    }
    throw SyntaxError(start, {}, std::string("unexpected character '") + c + "' at offset " + std::to_string(start));
  }

  std::string_view input_;
  std::size_t pos_ = 0;
  Token cur_;
};

int precedence(const StateFormula& f) {
  switch (f.kind) {
    case StateFormula::Kind::Or: return 1;
    case StateFormula::Kind::And: return 2;
    case StateFormula::Kind::Not: return 3;
    default: return 4;
  }
}

void write(const StateFormula& f, std::string& out) {
  auto operand = [&](const StateFormula& child, bool parens) {
    if (parens) out += '(';
    write(child, out);
    if (parens) out += ')';
  };
  switch (f.kind) {
    case StateFormula::Kind::True: out += "true"; break;
    case StateFormula::Kind::False: out += "false"; break;
    case StateFormula::Kind::Label:
      out += '"';
      out += f.label;
      out += '"';
      break;
    case StateFormula::Kind::Not:
      out += '!';
      operand(f.operands.at(0), precedence(f.operands[0]) < 3);
      break;
    case StateFormula::Kind::And:
    case StateFormula::Kind::Or: {
      // Left-associative: a right operand of equal precedence needs parentheses.
      int p = precedence(f);
      operand(f.operands.at(0), precedence(f.operands[0]) < p);
      out += p == 2 ? " & " : " | ";
      operand(f.operands.at(1), precedence(f.operands[1]) <= p);
      break;
    }
  }
}

void bound_suffix(const std::optional<std::uint64_t>& k, std::string& out) {
  if (k) out += "<=" + std::to_string(*k);
}

}  // namespace

Property parse_property(std::string_view text) { return Parser(text).property(); }

StateFormula parse_state_formula(std::string_view text) { return Parser(text).standalone_formula(); }

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string format_state_formula(const StateFormula& f) {
  std::string out;
  write(f, out);
  return out;
}

std::string format_path_formula(const PathFormula& f) {
  std::string out;
  switch (f.kind) {
    case PathFormula::Kind::Eventually:
    case PathFormula::Kind::Globally:
      out += f.kind == PathFormula::Kind::Eventually ? "F" : "G";
      bound_suffix(f.bound, out);
      out += ' ';
      write(f.right, out);
      break;
    case PathFormula::Kind::Until:
      write(f.left, out);
      out += " U";
      bound_suffix(f.bound, out);
      out += ' ';
      write(f.right, out);
      break;
  }
  return out;
}

std::string format_property(const Property& p) {
  std::string out = p.measure == Measure::Probability ? "P" : "R";
  if (p.measure == Measure::Reward && p.reward_structure) out += "{\"" + *p.reward_structure + "\"}";
  if (p.opt != Optimization::Policy) out += to_string(p.opt);
  if (p.threshold && p.opt != Optimization::Policy) {
    out += to_string(p.threshold->op);
    out += format_number(p.threshold->value);
  } else {
    // Policy thresholds have no textual form; they live next to the formula.
    out += "=?";
  }
  out += " [ ";
  if (p.measure == Measure::Probability) {
    out += format_path_formula(p.path);
  } else {
    out += "F ";
    write(p.target, out);
  }
  out += " ]";
  return out;
}

void collect_labels(const StateFormula& f, std::vector<std::string>& out) {
  if (f.kind == StateFormula::Kind::Label) out.push_back(f.label);
  for (const auto& child : f.operands) collect_labels(child, out);
}

void validate(const Property& p, const Vocabulary& vocabulary) {
  if (p.opt == Optimization::Policy && vocabulary.mode == ModelMode::Mdp) {
    throw Error(ErrorCode::ModeMismatch,
                "policy-mode quantity '" + format_property(p) + "' requires checker mode dtmc or both");
  }
  std::vector<std::string> names;
  if (p.measure == Measure::Probability) {
    collect_labels(p.path.left, names);
    collect_labels(p.path.right, names);
  } else {
    collect_labels(p.target, names);
    const std::string structure = p.reward_structure.value_or("steps");
    if (!vocabulary.reward_structures.contains(structure)) {
      throw Error(ErrorCode::UnknownRewardStructure, "unknown reward structure \"" + structure + "\"");
    }
  }
  if (vocabulary.open) return;
  for (const auto& name : names) {
    if (!vocabulary.labels.contains(name) && !vocabulary.states.contains(name)) {
      throw Error(ErrorCode::UnknownLabel, "unknown label \"" + name + "\"");
    }
  }
}

}  // namespace agentguard::pctl
