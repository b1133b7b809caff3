#include "agentguard/mdp_json.hpp"

#include <cmath>

namespace agentguard {

using nlohmann::json;

json snapshot_to_json(const ModelSnapshot& snap) {
  const auto& data = snap.data();
  json doc;
  doc["revision"] = data.revision;
  doc["exact"] = data.exact;
  doc["states"] = data.states;
  doc["actions"] = data.actions;
  doc["initial"] = data.initial ? json(index_of(*data.initial)) : json(nullptr);

  json terminal = json::array();
  for (StateId s : data.terminal) terminal.push_back(index_of(s));
  doc["terminal"] = std::move(terminal);

  json counts = json::array();
  std::vector<json> rewards(data.reward_names.size(), json::array());
  for (std::size_t s = 0; s < data.choices.size(); ++s) {
    for (const auto& choice : data.choices[s]) {
      for (const auto& succ : choice.successors) {
        counts.push_back({s, index_of(choice.action), index_of(succ.state), succ.weight});
        for (std::size_t r = 0; r < rewards.size(); ++r) {
          if (succ.rewards[r] != 0.0) {
            rewards[r].push_back({s, index_of(choice.action), index_of(succ.state), succ.rewards[r]});
          }
        }
      }
    }
  }
  doc["counts"] = std::move(counts);

  json labels = json::object();
  for (const auto& [name, states] : data.labels) {
    json members = json::array();
    for (StateId s : states) members.push_back(index_of(s));
    labels[name] = std::move(members);
  }
  doc["labels"] = std::move(labels);

  json structures = json::array();
  for (std::size_t r = 0; r < rewards.size(); ++r) {
    structures.push_back({{"name", data.reward_names[r]}, {"values", std::move(rewards[r])}});
  }
  doc["reward_structures"] = std::move(structures);
  return doc;
}

namespace {

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorCode::InvalidModel, "malformed model document: " + what);
}

std::size_t as_index(const json& v, std::size_t bound, const char* what) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    malformed(std::string(what) + " must be a nonnegative integer");
  }
  auto i = v.get<std::size_t>();
  if (i >= bound) malformed(std::string(what) + " out of range");
  return i;
}

SnapshotChoice& choice_for(SnapshotData& data, std::size_t s, std::size_t a) {
  auto& row = data.choices[s];
  if (row.empty() || index_of(row.back().action) != a) {
    if (!row.empty() && index_of(row.back().action) > a) malformed("counts not sorted");
    row.push_back(SnapshotChoice{action_at(a), 0.0, {}});
  }
  return row.back();
}

}  // namespace

ModelSnapshot snapshot_from_json(const json& doc) {
  try {
    if (!doc.is_object()) malformed("expected an object");
    SnapshotData data;
    data.states = doc.at("states").get<std::vector<std::string>>();
    data.actions = doc.at("actions").get<std::vector<std::string>>();
    data.revision = doc.value("revision", std::uint64_t{0});
    const std::size_t n = data.states.size();
    const std::size_t m = data.actions.size();
    if (doc.contains("initial") && !doc["initial"].is_null()) {
      data.initial = state_at(as_index(doc["initial"], n, "initial"));
    }
    for (const auto& t : doc.value("terminal", json::array())) data.terminal.push_back(state_at(as_index(t, n, "terminal")));

    data.choices.resize(n);
    bool integral = true;
    for (const auto& q : doc.at("counts")) {
      if (!q.is_array() || q.size() != 4) malformed("count entries must be [s, a, s', weight]");
      auto s = as_index(q[0], n, "state");
      auto a = as_index(q[1], m, "action");
      auto s2 = as_index(q[2], n, "successor");
      if (!q[3].is_number()) malformed("weight must be a number");
      double w = q[3].get<double>();
      if (!(w > 0.0) || !std::isfinite(w)) malformed("weights must be positive");
      integral = integral && w == std::floor(w);
      auto& choice = choice_for(data, s, a);
      if (!choice.successors.empty() && index_of(choice.successors.back().state) >= s2) malformed("counts not sorted");
      choice.successors.push_back(SnapshotSuccessor{state_at(s2), w, 0.0, {}});
      choice.weight += w;
    }
    data.exact = doc.value("exact", integral) && integral;

    for (const auto& [name, members] : doc.value("labels", json::object()).items()) {
      auto& target = data.labels[name];
      for (const auto& s : members) target.push_back(state_at(as_index(s, n, "label member")));
    }

    const auto structures = doc.value("reward_structures", json::array());
    for (const auto& rs : structures) data.reward_names.push_back(rs.at("name").get<std::string>());
    for (auto& row : data.choices) {
      for (auto& choice : row) {
        for (auto& succ : choice.successors) {
          succ.probability = succ.weight / choice.weight;
          succ.rewards.assign(data.reward_names.size(), 0.0);
        }
      }
    }
    for (std::size_t r = 0; r < structures.size(); ++r) {
      for (const auto& q : structures[r].at("values")) {
        if (!q.is_array() || q.size() != 4 || !q[3].is_number()) malformed("reward entries must be [s, a, s', value]");
        auto s = as_index(q[0], n, "state");
        auto a = as_index(q[1], m, "action");
        auto s2 = as_index(q[2], n, "successor");
        bool placed = false;
        for (auto& choice : data.choices[s]) {
          if (index_of(choice.action) != a) continue;
          for (auto& succ : choice.successors) {
            if (index_of(succ.state) == s2) {
              succ.rewards[r] = q[3].get<double>();
              placed = true;
            }
          }
        }
        if (!placed) malformed("reward on a transition without counts");
      }
    }
    return ModelSnapshot(std::move(data));
  } catch (const json::exception& e) {
    malformed(e.what());
  }
}

}  // namespace agentguard
