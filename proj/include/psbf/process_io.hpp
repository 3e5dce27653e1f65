#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "psbf/clustering.hpp"
#include "psbf/dbn.hpp"
#include "psbf/synthgen.hpp"
#include "psbf/types.hpp"

namespace psbf {

/// Contents of a process file: the model plus any named clusterings stored
/// alongside it.
struct ProcessFile {
  ProcessModel process;
  std::vector<Clustering> clusterings;
};

namespace detail {

inline NodeRef parse_node(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos || colon < 2)
    throw ModelError("malformed edge endpoint: " + text);
  const char kind = text[0];
  const std::string slice = text.substr(colon + 1);
  int index = 0;
  try {
    index = std::stoi(text.substr(1, colon - 1)) - 1;
  } catch (const std::exception&) {
    throw ModelError("malformed edge endpoint: " + text);
  }
  NodeRef n;
  n.index = index;
  if (kind == 'x')
    n.kind = VarKind::State;
  else if (kind == 'y')
    n.kind = VarKind::Obs;
  else
    throw ModelError("malformed edge endpoint: " + text);
  if (slice == "t")
    n.slice = Slice::T;
  else if (slice == "t1")
    n.slice = Slice::T1;
  else
    throw ModelError("malformed edge endpoint: " + text);
  return n;
}

}  // namespace detail

inline nlohmann::json process_to_json(const ProcessModel& p,
                                      const std::vector<Clustering>& clusterings = {}) {
  nlohmann::json doc;
  doc["variables"] = nlohmann::json::array();
  for (const auto& v : p.state_vars)
    doc["variables"].push_back(
        {{"id", v.id}, {"kind", "state"}, {"domain_size", v.domain_size}});
  for (const auto& v : p.obs_vars)
    doc["variables"].push_back({{"id", v.id}, {"kind", "obs"}, {"domain_size", v.domain_size}});
  doc["actions"] = nlohmann::json::array();
  for (const auto& dbn : p.actions) {
    nlohmann::json a;
    a["action_id"] = dbn.action_id;
    a["edges"] = nlohmann::json::array();
    for (const auto& [from, to] : dbn.edges)
      a["edges"].push_back({node_name(from), node_name(to)});
    nlohmann::json cpts = nlohmann::json::object();
    for (int i = 0; i < dbn.n; ++i) {
      nlohmann::json rows = nlohmann::json::array();
      const Cpt& c = dbn.x_cpt[i];
      for (std::size_t r = 0; r < c.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int col = 0; col < c.cols; ++col) row.push_back(c.at(r, col));
        rows.push_back(std::move(row));
      }
      cpts["x" + std::to_string(i + 1)] = std::move(rows);
    }
    for (int j = 0; j < dbn.m; ++j) {
      nlohmann::json rows = nlohmann::json::array();
      const Cpt& c = dbn.y_cpt[j];
      for (std::size_t r = 0; r < c.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int col = 0; col < c.cols; ++col) row.push_back(c.at(r, col));
        rows.push_back(std::move(row));
      }
      cpts["y" + std::to_string(j + 1)] = std::move(rows);
    }
    a["cpts"] = std::move(cpts);
    doc["actions"].push_back(std::move(a));
  }
  if (!clusterings.empty()) {
    nlohmann::json cl = nlohmann::json::object();
    for (const auto& c : clusterings) {
      nlohmann::json entry;
      entry["state"] = nlohmann::json::array();
      for (const auto& members : c.state_clusters) {
        nlohmann::json ids = nlohmann::json::array();
        for (int v : members) ids.push_back(v + 1);
        entry["state"].push_back(std::move(ids));
      }
      entry["obs"] = nlohmann::json::array();
      for (const auto& members : c.obs_clusters) {
        nlohmann::json ids = nlohmann::json::array();
        for (int v : members) ids.push_back(v + 1);
        entry["obs"].push_back(std::move(ids));
      }
      cl[c.name] = std::move(entry);
    }
    doc["clusterings"] = std::move(cl);
  }
  return doc;
}

/// Parse a process document. Rows within the load tolerance of one are
/// renormalized; anything worse is left for validation to report. With
/// `validated` (the default) a non-empty validation report is an error.
inline ProcessFile process_from_json(const nlohmann::json& doc, bool validated = true) {
  ProcessFile out;
  if (!doc.contains("variables") || !doc.contains("actions"))
    throw ModelError("process document needs 'variables' and 'actions'");
  for (const auto& v : doc["variables"]) {
    VariableDecl decl;
    decl.id = v.at("id").get<int>();
    decl.domain_size = v.at("domain_size").get<int>();
    const std::string kind = v.at("kind").get<std::string>();
    if (kind == "state") {
      decl.kind = VarKind::State;
      out.process.state_vars.push_back(decl);
    } else if (kind == "obs") {
      decl.kind = VarKind::Obs;
      out.process.obs_vars.push_back(decl);
    } else {
      throw ModelError("unknown variable kind: " + kind);
    }
  }
  const int n = out.process.n();
  const int m = out.process.m();
  for (const auto& a : doc["actions"]) {
    Dbn dbn;
    dbn.action_id = a.at("action_id").get<std::string>();
    dbn.n = n;
    dbn.m = m;
    dbn.state_dims = out.process.state_dims();
    dbn.obs_dims = out.process.obs_dims();
    for (const auto& e : a.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ModelError("malformed edge entry");
      dbn.add_edge(detail::parse_node(e[0].get<std::string>()),
                   detail::parse_node(e[1].get<std::string>()));
    }
    dbn.finalize();
    dbn.x_cpt.resize(n);
    dbn.y_cpt.resize(m);
    if (a.contains("cpts"))
      for (const auto& [key, rows] : a.at("cpts").items()) {
        if (key.size() < 2) throw ModelError("malformed table key: " + key);
        int index = std::stoi(key.substr(1)) - 1;
        bool is_state = key[0] == 'x';
        if (!is_state && key[0] != 'y') throw ModelError("malformed table key: " + key);
        Cpt c;
        c.rows = rows.size();
        c.cols = rows.empty() ? 0 : int(rows[0].size());
        c.table.reserve(c.rows * std::size_t(std::max(c.cols, 0)));
        for (const auto& row : rows) {
          if (int(row.size()) != c.cols) throw ModelError(key + ": ragged table rows");
          double sum = 0;
          for (const auto& cell : row) sum += cell.get<double>();
          const bool renorm = std::abs(sum - 1.0) <= kRowSumTolerance && sum > 0;
          for (const auto& cell : row)
            c.table.push_back(renorm ? cell.get<double>() / sum : cell.get<double>());
        }
        if (is_state) {
          if (index < 0 || index >= n) throw ModelError("table for unknown variable " + key);
          dbn.x_cpt[index] = std::move(c);
        } else {
          if (index < 0 || index >= m) throw ModelError("table for unknown variable " + key);
          dbn.y_cpt[index] = std::move(c);
        }
      }
    out.process.actions.push_back(std::move(dbn));
  }
  if (doc.contains("clusterings"))
    for (const auto& [name, entry] : doc["clusterings"].items()) {
      Clustering c;
      c.name = name;
      for (const auto& members : entry.at("state")) {
        std::vector<int> ids;
        for (const auto& id : members) ids.push_back(id.get<int>() - 1);
        std::sort(ids.begin(), ids.end());
        c.state_clusters.push_back(std::move(ids));
      }
      if (entry.contains("obs"))
        for (const auto& members : entry.at("obs")) {
          std::vector<int> ids;
          for (const auto& id : members) ids.push_back(id.get<int>() - 1);
          std::sort(ids.begin(), ids.end());
          c.obs_clusters.push_back(std::move(ids));
        }
      out.clusterings.push_back(std::move(c));
    }
  if (validated) {
    auto rep = validate_process(out.process);
    if (!rep.ok()) throw ModelError("invalid process:\n" + rep.to_string());
  }
  return out;
}

inline void save_process_file(const std::string& path, const ProcessModel& p,
                              const std::vector<Clustering>& clusterings = {}) {
  std::ofstream os(path);
  if (!os) throw ModelError("cannot write " + path);
  os << process_to_json(p, clusterings).dump(1) << "\n";
}

inline ProcessFile load_process_file(const std::string& path, bool validated = true) {
  std::ifstream is(path);
  if (!is) throw ModelError("cannot read " + path);
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(path + ": " + e.what());
  }
  return process_from_json(doc, validated);
}

// ---------------------------------------------------------------------------
// Trajectory files

inline std::string tuple_to_string(const std::vector<Value>& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(t[i]);
  }
  return s;
}

inline std::vector<Value> tuple_from_string(const std::string& s) {
  std::vector<Value> t;
  if (s.empty()) return t;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, '-')) t.push_back(std::stoi(cell));
  return t;
}

inline void save_trajectory_csv(const std::string& path, const ProcessModel& process,
                                const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw ModelError("cannot write " + path);
  os << "step,action,state,obs\n";
  os << "0,," << tuple_to_string(traj.initial) << ",\n";
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& s = traj.steps[t];
    os << (t + 1) << "," << process.actions[s.action].action_id << ","
       << tuple_to_string(s.state) << "," << tuple_to_string(s.obs) << "\n";
  }
}

inline Trajectory load_trajectory_csv(const std::string& path, const ProcessModel& process) {
  std::ifstream is(path);
  if (!is) throw ModelError("cannot read " + path);
  Trajectory out;
  std::string line;
  bool saw_initial = false;
  while (std::getline(is, line)) {
    if (line.empty() || line.rfind("step,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string step_s, action_s, state_s, obs_s;
    std::getline(ss, step_s, ',');
    std::getline(ss, action_s, ',');
    std::getline(ss, state_s, ',');
    std::getline(ss, obs_s, ',');
    if (step_s == "0") {
      out.initial = tuple_from_string(state_s);
      saw_initial = true;
      continue;
    }
    TrajectoryStep step;
    step.action = process.action_index(action_s);
    step.state = tuple_from_string(state_s);
    step.obs = tuple_from_string(obs_s);
    out.steps.push_back(std::move(step));
  }
  if (!saw_initial) throw ModelError(path + ": missing initial state row");
  return out;
}

}  // namespace psbf
