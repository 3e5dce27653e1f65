// Command-line front end: generate benchmark processes, replay filters over
// shared trajectories, aggregate traces, and inspect process structure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "psbf/baselines.hpp"
#include "psbf/clustering.hpp"
#include "psbf/dbn.hpp"
#include "psbf/dense_belief.hpp"
#include "psbf/fixtures.hpp"
#include "psbf/metrics.hpp"
#include "psbf/passivity.hpp"
#include "psbf/process_io.hpp"
#include "psbf/psbf.hpp"
#include "psbf/synthgen.hpp"

namespace fs = std::filesystem;
using namespace psbf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInfeasible = 2;

std::uint64_t now_nanos_since(std::chrono::steady_clock::time_point start) {
  return std::uint64_t(std::chrono::duration_cast<std::chrono::nanoseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count());
}

// "0..9" or "3" or "0,2,5"
std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    auto dots = part.find("..");
    if (dots == std::string::npos) {
      seeds.push_back(std::stoull(part));
    } else {
      std::uint64_t lo = std::stoull(part.substr(0, dots));
      std::uint64_t hi = std::stoull(part.substr(dots + 2));
      for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    }
  }
  return seeds;
}

struct FilterSpec {
  std::string name;  // verbatim, e.g. "psbf:moral"
  std::string kind;  // psbf | pf | bkref | exact
  std::string param;
};

std::vector<FilterSpec> parse_filters(const std::string& text) {
  std::vector<FilterSpec> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    FilterSpec spec;
    spec.name = part;
    auto colon = part.find(':');
    spec.kind = part.substr(0, colon);
    if (colon != std::string::npos) spec.param = part.substr(colon + 1);
    if (spec.kind != "psbf" && spec.kind != "pf" && spec.kind != "bkref" && spec.kind != "exact")
      throw ModelError("unknown filter: " + part);
    if ((spec.kind == "psbf" || spec.kind == "bkref") && spec.param.empty())
      throw ModelError(spec.kind + " needs a clustering name, e.g. " + spec.kind + ":moral");
    if (spec.kind == "pf" && spec.param.empty())
      throw ModelError("pf needs a sample count, e.g. pf:10000");
    out.push_back(std::move(spec));
  }
  return out;
}

std::string format_stem(const std::string& size, double passivity, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_p%.2f_s%04llu", size.c_str(), passivity,
                static_cast<unsigned long long>(seed));
  return buf;
}

struct ManifestEntry {
  std::string stem;
  std::string size;
  double passivity = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
};

void write_manifest(const fs::path& dir, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(dir / "manifest.csv");
  os << "stem,size,passivity,seed\n";
  for (const auto& e : entries)
    os << e.stem << "," << e.size << "," << e.passivity << "," << e.seed << "\n";
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
  std::vector<ManifestEntry> entries;
  std::ifstream is(dir / "manifest.csv");
  if (is) {
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line.rfind("stem,", 0) == 0) continue;
      std::stringstream ss(line);
      ManifestEntry e;
      std::string cell;
      std::getline(ss, e.stem, ',');
      std::getline(ss, e.size, ',');
      std::getline(ss, cell, ',');
      if (!cell.empty()) e.passivity = std::stod(cell);
      std::getline(ss, cell, ',');
      if (!cell.empty()) e.seed = std::stoull(cell);
      entries.push_back(std::move(e));
    }
    return entries;
  }
  // no manifest: every process_*.json in the directory
  for (const auto& entry : fs::directory_iterator(dir)) {
    auto name = entry.path().filename().string();
    if (name.rfind("process_", 0) == 0 && entry.path().extension() == ".json") {
      ManifestEntry e;
      e.stem = name.substr(8, name.size() - 8 - 5);
      entries.push_back(std::move(e));
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.stem < b.stem; });
  return entries;
}

// ---------------------------------------------------------------------------

int cmd_generate(const std::string& size_name, double passivity,
                 const std::string& seed_range, int steps, const std::string& out_dir) {
  SizeClass size = parse_size_class(size_name);
  fs::create_directories(out_dir);
  std::vector<ManifestEntry> manifest;
  for (std::uint64_t seed : parse_seed_range(seed_range)) {
    auto process = generate_process({size, passivity, seed});
    std::vector<Clustering> clusterings = {cluster_pc(process), cluster_moral(process),
                                           cluster_modis(process), cluster_single(process),
                                           cluster_singleton(process)};
    RngStream traj_rng = RngStream::derive(seed, 0x7261727421ull);
    auto traj = simulate_trajectory(process, steps, traj_rng);
    auto stem = format_stem(size_name, passivity, seed);
    save_process_file((fs::path(out_dir) / ("process_" + stem + ".json")).string(), process,
                      clusterings);
    save_trajectory_csv((fs::path(out_dir) / ("trajectory_" + stem + ".csv")).string(), process,
                        traj);
    manifest.push_back({stem, size_name, passivity, seed});
  }
  write_manifest(out_dir, manifest);
  std::cout << "wrote " << manifest.size() << " process/trajectory pairs to " << out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RunContext {
  ProcessModel process;
  std::map<std::string, Clustering> file_clusterings;
  Trajectory trajectory;
  // dense reference track, when the state space is enumerable
  std::optional<ExactFilterPlan> exact_plan;
  std::vector<DenseBelief> exact_track;  // per step, after the update
  double kl_floor = 1e-12;
};

Clustering resolve_clustering(const RunContext& ctx, const std::string& name) {
  auto it = ctx.file_clusterings.find(name);
  if (it != ctx.file_clusterings.end()) return it->second;
  return make_clustering(ctx.process, name);
}

void replay_psbf(RunContext& ctx, const FilterSpec& spec, double sparsity, RunTrace& trace) {
  PsbfOptions opts;
  opts.sparsity_threshold = sparsity;
  auto start = std::chrono::steady_clock::now();
  auto analysis = build_psbf_analysis(ctx.process, resolve_clustering(ctx, spec.param), opts);
  trace.precompute_nanos = now_nanos_since(start);
  auto fs = init_uniform(analysis);
  for (std::size_t t = 0; t < ctx.trajectory.steps.size(); ++t) {
    const auto& step = ctx.trajectory.steps[t];
    UpdateStats stats;
    fs = psbf_update(fs, step.action, step.obs, &stats);
    StepRecord rec;
    rec.step = int(t) + 1;
    rec.action = ctx.process.actions[step.action].action_id;
    rec.factors_total = stats.factors_total;
    rec.transition_updated = stats.transition_updated;
    rec.observation_updated = stats.observation_updated;
    rec.entries_evaluated = stats.entries_evaluated;
    rec.wall_nanos = stats.wall_nanos;
    if (!ctx.exact_track.empty()) {
      auto joint = reconstruct_joint(fs);
      rec.kl_exact = relative_entropy(ctx.exact_track[t].probs, joint.probs, ctx.kl_floor);
    }
    trace.records.push_back(std::move(rec));
  }
}

void replay_bkref(RunContext& ctx, const FilterSpec& spec, RunTrace& trace) {
  auto start = std::chrono::steady_clock::now();
  BkReferenceFilter bk(ctx.process, resolve_clustering(ctx, spec.param));
  trace.precompute_nanos = now_nanos_since(start);
  auto factors = bk.init_uniform();
  const auto dims = ctx.process.state_dims();
  for (std::size_t t = 0; t < ctx.trajectory.steps.size(); ++t) {
    const auto& step = ctx.trajectory.steps[t];
    auto tick = std::chrono::steady_clock::now();
    factors = bk.update(factors, step.action, step.obs);
    StepRecord rec;
    rec.step = int(t) + 1;
    rec.action = ctx.process.actions[step.action].action_id;
    rec.factors_total = int(factors.size());
    rec.transition_updated = int(factors.size());
    rec.observation_updated = int(factors.size());
    rec.wall_nanos = now_nanos_since(tick);
    if (!ctx.exact_track.empty()) {
      std::vector<std::vector<double>> probs;
      for (const auto& f : factors) probs.push_back(f.probs);
      auto joint = reconstruct_joint(bk.clustering().state_clusters, probs, dims);
      rec.kl_exact = relative_entropy(ctx.exact_track[t].probs, joint.probs, ctx.kl_floor);
    }
    trace.records.push_back(std::move(rec));
  }
}

void replay_pf(RunContext& ctx, const FilterSpec& spec, std::uint64_t seed, RunTrace& trace) {
  const std::size_t count = std::stoull(spec.param);
  RngStream rng = RngStream::derive(seed, 0x70660000ull + count);
  auto ps = pf_init_uniform(ctx.process.state_dims(), count, rng);
  for (std::size_t t = 0; t < ctx.trajectory.steps.size(); ++t) {
    const auto& step = ctx.trajectory.steps[t];
    auto tick = std::chrono::steady_clock::now();
    ps = pf_update(ps, ctx.process.actions[step.action], step.obs, rng);
    StepRecord rec;
    rec.step = int(t) + 1;
    rec.action = ctx.process.actions[step.action].action_id;
    rec.wall_nanos = now_nanos_since(tick);
    if (!ctx.exact_track.empty()) {
      auto hist = pf_histogram(ps, ctx.process.state_dims());
      rec.kl_exact = relative_entropy(ctx.exact_track[t].probs, hist.probs, ctx.kl_floor);
    }
    trace.records.push_back(std::move(rec));
  }
}

void replay_exact(RunContext& ctx, RunTrace& trace) {
  auto belief = uniform_belief(ctx.process.state_dims());
  for (std::size_t t = 0; t < ctx.trajectory.steps.size(); ++t) {
    const auto& step = ctx.trajectory.steps[t];
    auto tick = std::chrono::steady_clock::now();
    belief = ctx.exact_plan->update(belief, step.action, step.obs);
    StepRecord rec;
    rec.step = int(t) + 1;
    rec.action = ctx.process.actions[step.action].action_id;
    rec.wall_nanos = now_nanos_since(tick);
    rec.kl_exact = 0.0;
    trace.records.push_back(std::move(rec));
  }
}

// Empirical one-step excess divergence of the selective filter, measured
// against the dense reference at sampled steps.
double estimate_eps_hat(RunContext& ctx, const Clustering& clustering, double sparsity) {
  PsbfOptions opts;
  opts.sparsity_threshold = sparsity;
  auto analysis = build_psbf_analysis(ctx.process, clustering, opts);
  auto fs = init_uniform(analysis);
  double eps = 0.0;
  for (std::size_t t = 0; t < ctx.trajectory.steps.size(); ++t) {
    const auto& step = ctx.trajectory.steps[t];
    auto approx_prior = reconstruct_joint(fs);
    fs = psbf_update(fs, step.action, step.obs);
    auto approx_post = reconstruct_joint(fs);
    auto exact_of_approx =
        ctx.exact_plan->update(approx_prior, step.action, step.obs);
    const auto& exact_post = ctx.exact_track[t];
    double gap = relative_entropy(exact_post.probs, approx_post.probs, ctx.kl_floor) -
                 relative_entropy(exact_post.probs, exact_of_approx.probs, ctx.kl_floor);
    eps = std::max(eps, gap);
  }
  return eps;
}

int cmd_run(const std::string& in_dir, const std::string& filters_text, int steps,
            const std::string& out_dir, double sparsity, double kl_floor, bool bound) {
  auto filters = parse_filters(filters_text);
  auto manifest = read_manifest(in_dir);
  if (manifest.empty()) throw ModelError("no processes found in " + in_dir);
  fs::create_directories(out_dir);
  std::ofstream trace_os(fs::path(out_dir) / "trace.csv");
  trace_os << trace_csv_header() << "\n";
  nlohmann::json bound_report = nlohmann::json::array();

  for (const auto& entry : manifest) {
    RunContext ctx;
    ctx.kl_floor = kl_floor;
    auto loaded =
        load_process_file((fs::path(in_dir) / ("process_" + entry.stem + ".json")).string());
    ctx.process = std::move(loaded.process);
    for (auto& c : loaded.clusterings) ctx.file_clusterings[c.name] = std::move(c);
    ctx.trajectory = load_trajectory_csv(
        (fs::path(in_dir) / ("trajectory_" + entry.stem + ".csv")).string(), ctx.process);
    if (steps > 0 && int(ctx.trajectory.steps.size()) > steps)
      ctx.trajectory.steps.resize(steps);

    bool exact_feasible = Indexer::over(ctx.process.state_dims()).size() <= kEnumerationCap;
    if (exact_feasible) {
      try {
        ctx.exact_plan.emplace(ctx.process);
        auto belief = uniform_belief(ctx.process.state_dims());
        for (const auto& step : ctx.trajectory.steps) {
          belief = ctx.exact_plan->update(belief, step.action, step.obs);
          ctx.exact_track.push_back(belief);
        }
      } catch (const InfeasibleError&) {
        exact_feasible = false;
        ctx.exact_plan.reset();
        ctx.exact_track.clear();
      }
    }

    for (const auto& spec : filters) {
      RunTrace trace;
      trace.process = entry.stem;
      trace.size_class = entry.size;
      trace.passivity = entry.passivity;
      trace.seed = entry.seed;
      trace.filter = spec.name;
      try {
        if (spec.kind == "psbf")
          replay_psbf(ctx, spec, sparsity, trace);
        else if (spec.kind == "bkref")
          replay_bkref(ctx, spec, trace);
        else if (spec.kind == "pf")
          replay_pf(ctx, spec, entry.seed, trace);
        else if (spec.kind == "exact") {
          if (!ctx.exact_plan) throw InfeasibleError("state space exceeds the enumeration cap");
          replay_exact(ctx, trace);
        }
      } catch (const InfeasibleError& e) {
        trace.records.clear();
        StepRecord rec;
        rec.step = 0;
        rec.status = "skipped";
        trace.records.push_back(rec);
        std::cerr << entry.stem << " " << spec.name << ": " << e.what() << " (skipped)\n";
      }
      write_trace_csv(trace_os, trace);

      if (bound && spec.kind == "psbf" && ctx.exact_plan) {
        auto clustering = resolve_clustering(ctx, spec.param);
        double gamma = 1.0;
        for (const auto& dbn : ctx.process.actions)
          gamma = std::min(gamma,
                           mixing_rate_dbn(dbn, clustering, ctx.process.state_dims()));
        double eps_hat = estimate_eps_hat(ctx, clustering, sparsity);
        std::vector<double> kl_per_step;
        // recompute from the trace records just written
        for (const auto& rec : trace.records)
          if (!std::isnan(rec.kl_exact)) kl_per_step.push_back(rec.kl_exact);
        auto rep = bound_check(kl_per_step, eps_hat, gamma);
        nlohmann::json row;
        row["process"] = entry.stem;
        row["filter"] = spec.name;
        row["gamma"] = gamma;
        row["eps_hat"] = eps_hat;
        row["vacuous"] = rep.vacuous;
        if (!rep.vacuous) {
          row["bound"] = rep.bound;
          row["final_running_mean"] = rep.final_running_mean;
          row["violation_steps"] = rep.violation_steps.size();
        }
        bound_report.push_back(std::move(row));
      }
    }
  }
  if (bound) {
    std::ofstream os(fs::path(out_dir) / "bound_report.json");
    os << bound_report.dump(1) << "\n";
  }
  std::cout << "wrote " << (fs::path(out_dir) / "trace.csv").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_bench(const std::string& in_dir, const std::string& out_file) {
  std::vector<TraceRow> rows;
  if (fs::exists(in_dir))
    for (const auto& entry : fs::directory_iterator(in_dir)) {
      auto name = entry.path().filename().string();
      if (name.rfind("trace", 0) == 0 && entry.path().extension() == ".csv") {
        std::ifstream is(entry.path());
        auto batch = read_trace_csv(is);
        rows.insert(rows.end(), batch.begin(), batch.end());
      }
    }

  struct Key {
    std::string size;
    double passivity;
    std::string filter;
    bool operator<(const Key& o) const {
      if (size != o.size) return size < o.size;
      if (passivity != o.passivity) return passivity < o.passivity;
      return filter < o.filter;
    }
  };
  struct Agg {
    std::uint64_t steps = 0;
    std::set<std::string> processes;
    double wall_nanos = 0;
    double precompute_nanos = 0;
    std::uint64_t precompute_count = 0;
    double transition_fraction_sum = 0;
    double observation_fraction_sum = 0;
    std::uint64_t fraction_count = 0;
    double entries_sum = 0;
    double kl_sum = 0;
    double kl_max = 0;
    std::uint64_t kl_count = 0;
    std::uint64_t skipped = 0;
  };
  std::map<Key, Agg> groups;
  for (const auto& r : rows) {
    Key key{r.size_class, r.passivity, r.filter};
    if (std::isnan(key.passivity)) key.passivity = -1;
    Agg& agg = groups[key];
    agg.processes.insert(r.process);
    if (r.status == "precompute") {
      agg.precompute_nanos += double(r.wall_nanos);
      agg.precompute_count++;
      continue;
    }
    if (r.status == "skipped") {
      agg.skipped++;
      continue;
    }
    agg.steps++;
    agg.wall_nanos += double(r.wall_nanos);
    agg.entries_sum += double(r.entries_evaluated);
    if (r.factors_total > 0) {
      agg.transition_fraction_sum += double(r.transition_updated) / double(r.factors_total);
      agg.observation_fraction_sum += double(r.observation_updated) / double(r.factors_total);
      agg.fraction_count++;
    }
    if (!std::isnan(r.kl_exact)) {
      agg.kl_sum += r.kl_exact;
      agg.kl_max = std::max(agg.kl_max, r.kl_exact);
      agg.kl_count++;
    }
  }

  nlohmann::json doc;
  doc["groups"] = nlohmann::json::array();
  for (const auto& [key, agg] : groups) {
    nlohmann::json g;
    g["size"] = key.size;
    if (key.passivity >= 0) g["passivity"] = key.passivity;
    g["filter"] = key.filter;
    g["runs"] = agg.processes.size();
    g["steps"] = agg.steps;
    g["skipped_runs"] = agg.skipped;
    if (agg.steps > 0) {
      g["seconds_per_1000_transitions"] = agg.wall_nanos / double(agg.steps) * 1000.0 / 1e9;
      g["mean_entries_evaluated"] = agg.entries_sum / double(agg.steps);
    }
    if (agg.precompute_count > 0)
      g["precompute_seconds_mean"] = agg.precompute_nanos / double(agg.precompute_count) / 1e9;
    if (agg.fraction_count > 0) {
      g["mean_transition_updated_fraction"] =
          agg.transition_fraction_sum / double(agg.fraction_count);
      g["mean_observation_updated_fraction"] =
          agg.observation_fraction_sum / double(agg.fraction_count);
    }
    if (agg.kl_count > 0) {
      g["mean_kl"] = agg.kl_sum / double(agg.kl_count);
      g["max_kl"] = agg.kl_max;
    }
    doc["groups"].push_back(std::move(g));
  }
  // pass bound reports through when sitting next to the traces
  auto bound_path = fs::path(in_dir) / "bound_report.json";
  if (fs::exists(bound_path)) {
    std::ifstream is(bound_path);
    nlohmann::json bounds;
    is >> bounds;
    doc["bound_report"] = std::move(bounds);
  }

  if (out_file.empty() || out_file == "-") {
    std::cout << doc.dump(1) << "\n";
  } else {
    if (fs::path(out_file).has_parent_path())
      fs::create_directories(fs::path(out_file).parent_path());
    std::ofstream os(out_file);
    os << doc.dump(1) << "\n";
    std::cout << "wrote " << out_file << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_inspect(const std::string& process_file, const std::string& clustering_names,
                bool strict) {
  auto loaded = load_process_file(process_file, /*validated=*/false);
  nlohmann::json doc;
  auto rep = validate_process(loaded.process);
  doc["findings"] = nlohmann::json::array();
  for (const auto& f : rep.findings) doc["findings"].push_back(f.message);
  if (!rep.ok()) {
    std::cout << doc.dump(1) << "\n";
    return kExitValidation;
  }

  std::vector<Clustering> clusterings;
  std::stringstream ss(clustering_names);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    bool from_file = false;
    for (const auto& c : loaded.clusterings)
      if (c.name == name) {
        clusterings.push_back(c);
        from_file = true;
      }
    if (!from_file) clusterings.push_back(make_clustering(loaded.process, name));
  }

  PassivityOptions opts;
  opts.strict = strict;
  auto report = build_passivity_report(loaded.process, clusterings, opts);

  doc["actions"] = nlohmann::json::object();
  for (std::size_t a = 0; a < report.action_ids.size(); ++a) {
    nlohmann::json entry;
    entry["passive"] = nlohmann::json::array();
    entry["active"] = nlohmann::json::array();
    entry["undetermined"] = nlohmann::json::array();
    for (const auto& v : report.verdicts[a]) {
      std::string var = "x" + std::to_string(v.variable + 1);
      if (v.status == Passivity::Passive) {
        nlohmann::json pv;
        pv["variable"] = var;
        pv["phi"] = nlohmann::json::array();
        for (int p : v.phi) pv["phi"].push_back("x" + std::to_string(p + 1));
        entry["passive"].push_back(std::move(pv));
      } else if (v.status == Passivity::Active) {
        entry["active"].push_back(var);
      } else {
        entry["undetermined"].push_back(var);
      }
    }
    doc["actions"][report.action_ids[a]] = std::move(entry);
  }

  doc["clusterings"] = nlohmann::json::object();
  for (const auto& c : clusterings) {
    nlohmann::json entry;
    auto status = check_assumptions(c, loaded.process);
    entry["assumptions"] = nlohmann::json::object();
    for (const auto& st : status)
      entry["assumptions"][st.action_id] = {
          {"a1", st.a1}, {"a2", st.a2}, {"a3", st.a3}, {"a4", st.a4}};
    entry["transition"] = nlohmann::json::object();
    entry["observation"] = nlohmann::json::object();
    const auto& analyses = report.analyses.at(c.name);
    for (std::size_t a = 0; a < analyses.size(); ++a) {
      nlohmann::json skips = nlohmann::json::array();
      for (int k : analyses[a].transition_skippable) {
        nlohmann::json members = nlohmann::json::array();
        for (int v : c.state_clusters[k]) members.push_back("x" + std::to_string(v + 1));
        skips.push_back(std::move(members));
      }
      double fraction = c.state_clusters.empty()
                            ? 0.0
                            : double(analyses[a].transition_skippable.size()) /
                                  double(c.state_clusters.size());
      entry["transition"][report.action_ids[a]] = {{"skippable", std::move(skips)},
                                                   {"skip_fraction", fraction}};
      int obs_skippable = 0;
      for (const auto& yk : analyses[a].obs.y_k) obs_skippable += yk.empty();
      entry["observation"][report.action_ids[a]] = {
          {"clusters_without_observation_dependence", obs_skippable}};
    }
    doc["clusterings"][c.name] = std::move(entry);
  }

  std::cout << doc.dump(1) << "\n";
  return kExitOk;
}

int cmd_fixture(const std::string& name, const std::string& out_file) {
  ProcessModel p;
  if (name == "robot-arm")
    p = fixtures::robot_arm();
  else if (name == "swap")
    p = fixtures::swap_process(true);
  else
    throw ModelError("unknown fixture: " + name + " (have: robot-arm, swap)");
  std::vector<Clustering> clusterings = {cluster_pc(p), cluster_moral(p), cluster_modis(p)};
  save_process_file(out_file, p, clusterings);
  std::cout << "wrote " << out_file << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective belief filtering for discrete two-slice processes"};
  app.require_subcommand(1);

  std::string size = "S", seeds = "0..9", out_dir = "out", in_dir;
  std::string filters = "psbf:moral,exact";
  std::string process_file, clustering_names = "pc,moral,modis";
  std::string fixture_name = "robot-arm", out_file;
  double passivity = 0.5, sparsity = 0.0, kl_floor = 1e-12;
  int steps = 1000;
  bool strict = false, bound = false;

  auto* gen = app.add_subcommand("generate", "Generate benchmark processes and trajectories");
  gen->add_option("--size", size, "Process size class (S, M, L, XL)");
  gen->add_option("--passivity", passivity, "Degree of passivity in [0, 1]");
  gen->add_option("--seeds", seeds, "Seed list or range, e.g. 0..9 or 1,5,7");
  gen->add_option("--steps", steps, "Trajectory length");
  gen->add_option("--out", out_dir, "Output directory");

  auto* run = app.add_subcommand("run", "Replay filters over generated trajectories");
  run->add_option("--in", in_dir, "Directory with process/trajectory files")->required();
  run->add_option("--filters", filters,
                  "Comma list: psbf:<clustering>, pf:<N>, bkref:<clustering>, exact");
  run->add_option("--steps", steps, "Replay at most this many steps (0 = all)");
  run->add_option("--out", out_dir, "Output directory for trace.csv");
  run->add_option("--sparsity", sparsity, "Zero factor entries below this threshold");
  run->add_option("--kl-floor", kl_floor, "Floor for divergence evaluation");
  run->add_flag("--bound", bound, "Also write the contraction-bound report");

  auto* bench = app.add_subcommand("bench", "Aggregate trace files into a summary");
  bench->add_option("--in", in_dir, "Directory with trace*.csv files")->required();
  bench->add_option("--out", out_file, "Summary JSON path (default: stdout)");

  auto* inspect = app.add_subcommand("inspect", "Validate and analyse a process file");
  inspect->add_option("process", process_file, "Process JSON file")->required();
  inspect->add_option("--clusterings", clustering_names,
                      "Clusterings to analyse (file names or pc/moral/modis/single/singleton)");
  inspect->add_flag("--strict", strict, "Use the table-sweep witness test only");

  auto* fixture = app.add_subcommand("fixture", "Write a built-in example process file");
  fixture->add_option("name", fixture_name, "robot-arm or swap");
  fixture->add_option("--out", out_file, "Output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(size, passivity, seeds, steps, out_dir);
    if (run->parsed()) return cmd_run(in_dir, filters, steps, out_dir, sparsity, kl_floor, bound);
    if (bench->parsed()) return cmd_bench(in_dir, out_file);
    if (inspect->parsed()) return cmd_inspect(process_file, clustering_names, strict);
    if (fixture->parsed()) return cmd_fixture(fixture_name, out_file);
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const ZeroMassError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
