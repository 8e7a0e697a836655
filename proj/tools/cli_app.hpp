// Copyright 2026 The kvevict Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// The kvevict command-line tool. run() is callable in-process so the test
// suite can drive it without spawning a binary.
//
// Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 internal error.

#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kvevict/kvevict.hpp"

namespace kvevict::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitInternal = 4;

// Shortest representation that round-trips; identical across runs.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// "64" is an absolute budget; "20%" resolves to floor(0.2 n), at least 2.
inline std::size_t resolve_budget(const std::string& spec, std::size_t n) {
  auto bad = [&] { fail(ErrorCode::kInvalidConfig, "--budget: cannot parse '" + spec + "'"); };
  if (spec.empty()) bad();
  if (spec.back() == '%') {
    double pct = 0.0;
    const std::string num = spec.substr(0, spec.size() - 1);
    const auto res = std::from_chars(num.data(), num.data() + num.size(), pct);
    if (res.ec != std::errc() || res.ptr != num.data() + num.size() || !(pct > 0.0 && pct <= 100.0)) bad();
    const auto k = static_cast<std::size_t>(std::floor(pct / 100.0 * static_cast<double>(n) + 1e-9));
    return std::max<std::size_t>(k, 2);
  }
  std::size_t k = 0;
  const auto res = std::from_chars(spec.data(), spec.data() + spec.size(), k);
  if (res.ec != std::errc() || res.ptr != spec.data() + spec.size() || k == 0) bad();
  return k;
}

inline std::size_t worker_count(std::size_t jobs) {
  std::size_t workers = std::max(1U, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("KVE_WORKERS")) {
    std::size_t cap = 0;
    const std::string s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), cap);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || cap == 0) {
      fail(ErrorCode::kInvalidConfig, "KVE_WORKERS must be a positive integer");
    }
    workers = std::min(workers, cap);
  }
  return std::max<std::size_t>(1, std::min(workers, jobs));
}

// Runs job(0..count-1) on a bounded pool. Results are stored by index, so
// output order never depends on scheduling. The first failure by index is
// rethrown.
template <typename Result, typename Job>
std::vector<Result> parallel_map(std::size_t count, Job job) {
  std::vector<Result> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        results[i] = job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = worker_count(count);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

struct PolicyFlags {
  std::string budget = "20%";
  double recent_frac = 0.5;
  std::string score_fn = "identity";
  std::size_t sink = 4;
  std::size_t stride = 8;
  bool zero_init = false;

  void attach(CLI::App* app) {
    app->add_option("--budget", budget, "cache budget: token count or percentage of n (e.g. 20%)")
        ->capture_default_str();
    app->add_option("--recent-frac", recent_frac, "fraction of the budget reserved for recent tokens (h2o)")
        ->capture_default_str();
    app->add_option("--score-fn", score_fn, "score function: identity, sqrt1p, log1p")->capture_default_str();
    app->add_option("--sink", sink, "sink tokens kept by sink_local")->capture_default_str();
    app->add_option("--stride", stride, "stride of the sparse patterns")->capture_default_str();
    app->add_flag("--zero-init", zero_init, "start a new token's accumulated score at 0");
  }

  PolicyConfig resolve(PolicyKind kind, const std::string& budget_spec, std::size_t n) const {
    PolicyConfig cfg;
    cfg.kind = kind;
    cfg.budget = kind == PolicyKind::kFull ? std::max(n, resolve_budget(budget_spec, n)) : resolve_budget(budget_spec, n);
    cfg.recent_fraction = recent_frac;
    cfg.sink = sink;
    cfg.stride = stride;
    const auto h = parse_score_function(score_fn);
    if (!h) fail(ErrorCode::kInvalidConfig, "--score-fn: unknown score function '" + score_fn + "'");
    cfg.score = *h;
    cfg.zero_init_new_token = zero_init;
    if (!(recent_frac >= 0.0 && recent_frac <= 1.0)) fail(ErrorCode::kInvalidConfig, "--recent-frac must lie in [0, 1]");
    if (stride == 0) fail(ErrorCode::kInvalidConfig, "--stride must be positive");
    return cfg;
  }
};

inline Json policy_json(const PolicyConfig& cfg) {
  Json j;
  j["policy"] = std::string(to_string(cfg.kind));
  j["budget"] = cfg.budget;
  j["recent_frac"] = cfg.recent_fraction;
  j["recent_window"] = cfg.recent_window();
  j["sink"] = cfg.sink;
  j["stride"] = cfg.stride;
  j["score_fn"] = std::string(to_string(cfg.score));
  j["zero_init"] = cfg.zero_init_new_token;
  return j;
}

inline PolicyKind parse_policy_flag(const std::string& name) {
  const auto kind = parse_policy_kind(name);
  if (!kind) fail(ErrorCode::kInvalidConfig, "--policy: unknown policy '" + name + "'");
  return *kind;
}

inline void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out << content;
  if (!out) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Everything a command produced, plus what is needed to rerun it.
struct RunContext {
  std::string command;
  std::vector<std::string> argv;
  fs::path out_dir;
  Json config = Json::object();
  std::optional<std::uint64_t> seed;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out_dir / name;
  }

  void write_manifest(double wall_seconds) {
    Json m;
    m["command"] = command;
    m["argv"] = argv;
    m["config"] = config;
    m["seed"] = seed ? Json(*seed) : Json(nullptr);
    m["version"] = std::string(kVersion);
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["out_dir"] = out_dir.string();
    m["wall_time_s"] = wall_seconds;
    write_file(out_dir / "manifest.json", m.dump(2) + "\n");
  }
};

inline AttentionTrace load_input_trace(RunContext& ctx, const std::string& path) {
  ctx.inputs.push_back(path);
  return load_trace(path);
}

// ---------------------------------------------------------------------------
// Commands

struct SimulateArgs {
  std::string trace;
  std::string policy = "h2o";
  PolicyFlags flags;
};

inline void cmd_simulate(const SimulateArgs& a, RunContext& ctx, std::ostream& out) {
  const AttentionTrace trace = load_input_trace(ctx, a.trace);
  const PolicyConfig cfg = a.flags.resolve(parse_policy_flag(a.policy), a.flags.budget, trace.size());
  ctx.config = policy_json(cfg);
  ctx.config["budget_spec"] = a.flags.budget;
  ctx.config["n"] = trace.size();
  ctx.config["d"] = trace.dim();

  const SimulationRecord sim = run_policy(trace, cfg);
  const DeviationReport dev = retained_mass(trace, sim);

  std::string csv = "i,tracked,evicted,retained_mass,tv\n";
  std::string events;
  for (std::size_t s = 0; s < sim.steps.size(); ++s) {
    const StepRecord& step = sim.steps[s];
    csv += std::to_string(step.step) + "," + std::to_string(step.tracked.size()) + "," +
           (step.event.evicted ? std::to_string(*step.event.evicted) : std::string()) + "," +
           format_double(dev.retained_mass[s]) + "," + format_double(dev.tv_distance[s]) + "\n";
    events += to_json_line(step.event) + "\n";
  }
  write_file(ctx.output("steps.csv"), csv);
  write_file(ctx.output("events.jsonl"), events);

  const MemoryFootprint mem = memory_footprint(cfg, trace.size(), trace.dim(), 8.0);
  Json summary;
  summary["policy"] = std::string(to_string(cfg.kind));
  summary["budget"] = cfg.budget;
  summary["n"] = trace.size();
  summary["mean_retained_mass"] = dev.mean_retained_mass;
  summary["mean_tv"] = dev.mean_tv_distance;
  summary["memory_ratio"] = mem.ratio;
  write_file(ctx.output("summary.json"), summary.dump(2) + "\n");
  out << to_string(cfg.kind) << " k=" << cfg.budget << " mean_retained_mass=" << format_double(dev.mean_retained_mass)
      << " mean_tv=" << format_double(dev.mean_tv_distance) << "\n";
}

struct CompareArgs {
  std::string trace;
  std::vector<std::string> policies;
  std::vector<std::string> budgets{"4%", "10%", "20%", "60%", "100%"};
  PolicyFlags flags;
};

inline void cmd_compare(const CompareArgs& a, RunContext& ctx, std::ostream& out, std::ostream& err) {
  std::vector<PolicyKind> kinds;
  for (const auto& name : a.policies) {
    const PolicyKind kind = parse_policy_flag(name);
    if (std::find(kinds.begin(), kinds.end(), kind) != kinds.end()) {
      err << "warning: duplicate policy '" << name << "' ignored\n";
      continue;
    }
    kinds.push_back(kind);
  }
  if (kinds.size() < 2) fail(ErrorCode::kInvalidConfig, "--policies: need at least two distinct policies");
  const AttentionTrace trace = load_input_trace(ctx, a.trace);

  struct Cell {
    PolicyConfig cfg;
    std::string budget_spec;
  };
  std::vector<Cell> cells;
  for (PolicyKind kind : kinds)
    for (const auto& b : a.budgets) cells.push_back({a.flags.resolve(kind, b, trace.size()), b});

  ctx.config["policies"] = Json::array();
  for (PolicyKind kind : kinds) ctx.config["policies"].push_back(std::string(to_string(kind)));
  ctx.config["budgets"] = a.budgets;
  ctx.config["template"] = policy_json(cells.front().cfg);
  ctx.config["n"] = trace.size();
  ctx.config["d"] = trace.dim();

  struct Row {
    double retained = 0.0;
    double tv = 0.0;
    double memory = 0.0;
  };
  const auto rows = parallel_map<Row>(cells.size(), [&](std::size_t c) {
    const PolicyConfig& cfg = cells[c].cfg;
    const DeviationReport dev = retained_mass(trace, run_policy(trace, cfg));
    return Row{dev.mean_retained_mass, dev.mean_tv_distance, memory_footprint(cfg, trace.size(), trace.dim(), 8.0).ratio};
  });

  std::string csv = "policy,budget,k,mean_retained_mass,mean_tv,memory_ratio\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    csv += std::string(to_string(cells[c].cfg.kind)) + "," + cells[c].budget_spec + "," +
           std::to_string(cells[c].cfg.budget) + "," + format_double(rows[c].retained) + "," +
           format_double(rows[c].tv) + "," + format_double(rows[c].memory) + "\n";
  }
  write_file(ctx.output("compare.csv"), csv);
  out << csv;
}

struct SparsityArgs {
  std::vector<std::string> traces;
  double threshold = 0.01;
  std::string extent = "full";
};

inline void cmd_sparsity(const SparsityArgs& a, RunContext& ctx, std::ostream& out) {
  RowExtent extent;
  if (a.extent == "full") {
    extent = RowExtent::kFullRow;
  } else if (a.extent == "causal") {
    extent = RowExtent::kCausalOnly;
  } else {
    fail(ErrorCode::kInvalidConfig, "--extent must be 'full' or 'causal'");
  }
  if (!(a.threshold > 0.0 && a.threshold < 1.0)) fail(ErrorCode::kInvalidConfig, "--threshold must lie in (0, 1)");
  ctx.config["threshold"] = a.threshold;
  ctx.config["extent"] = a.extent;

  std::vector<SparsityReport> reports;
  std::string csv = "trace,i,sparsity\n";
  for (std::size_t t = 0; t < a.traces.size(); ++t) {
    const AttentionTrace trace = load_input_trace(ctx, a.traces[t]);
    reports.push_back(sparsity_report(trace, a.threshold, extent));
    const auto& rows = reports.back().row_fractions;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      csv += std::to_string(t) + "," + std::to_string(i + 1) + "," + format_double(rows[i]) + "\n";
    }
  }
  const SparsityAggregate agg = aggregate_sparsity(reports);
  write_file(ctx.output("sparsity.csv"), csv);
  Json summary;
  summary["rule"] = reports.front().rule();
  summary["overall"] = agg.overall;
  summary["per_trace"] = Json::array();
  for (const auto& r : reports) summary["per_trace"].push_back(r.mean);
  summary["per_head"] = Json::object();
  for (const auto& [id, v] : agg.per_head) summary["per_head"][std::to_string(id)] = v;
  summary["per_layer"] = Json::object();
  for (const auto& [id, v] : agg.per_layer) summary["per_layer"][std::to_string(id)] = v;
  write_file(ctx.output("sparsity.json"), summary.dump(2) + "\n");
  out << "sparsity " << format_double(agg.overall) << " (" << reports.front().rule() << ")\n";
}

struct ProfileArgs {
  std::string trace;
  std::string policy;  // empty: exact full-attention scores
  PolicyFlags flags;
};

inline void cmd_profile(const ProfileArgs& a, RunContext& ctx, std::ostream& out) {
  const AttentionTrace trace = load_input_trace(ctx, a.trace);
  HeavyHitterProfile prof;
  if (a.policy.empty()) {
    ctx.config["source"] = "exact";
    prof = heavy_hitter_profile(exact_accumulated_scores(trace));
  } else {
    const PolicyConfig cfg = a.flags.resolve(parse_policy_flag(a.policy), a.flags.budget, trace.size());
    ctx.config["source"] = "policy";
    ctx.config["policy"] = policy_json(cfg);
    prof = heavy_hitter_profile(run_policy(trace, cfg).final_scores);
  }
  std::string csv = "rank,score,cumulative_share\n";
  double cum = 0.0;
  for (std::size_t r = 0; r < prof.curve.size(); ++r) {
    cum += prof.curve[r];
    csv += std::to_string(r + 1) + "," + format_double(prof.curve[r]) + "," +
           format_double(prof.total > 0.0 ? cum / prof.total : 0.0) + "\n";
  }
  write_file(ctx.output("profile.csv"), csv);
  Json summary;
  summary["total"] = prof.total;
  summary["top5_share"] = prof.top5_share;
  summary["top10_share"] = prof.top10_share;
  summary["top20_share"] = prof.top20_share;
  write_file(ctx.output("profile.json"), summary.dump(2) + "\n");
  out << "top10% share " << format_double(prof.top10_share) << "\n";
}

struct SubmodularArgs {
  std::size_t instances = 500;
  std::uint64_t seed = 1;
  std::size_t max_n = 12;
  std::size_t max_k = 4;
  double eps = 0.05;
};

inline void cmd_submodular_verify(const SubmodularArgs& a, RunContext& ctx, std::ostream& out) {
  if (a.max_n < 2 || a.max_n > kBruteForceLimit) fail(ErrorCode::kInvalidConfig, "--max-n must lie in [2, 22]");
  if (a.max_k < 1) fail(ErrorCode::kInvalidConfig, "--max-k must be positive");
  if (!(a.eps >= 0.0)) fail(ErrorCode::kInvalidConfig, "--eps must be non-negative");
  ctx.seed = a.seed;
  ctx.config["instances"] = a.instances;
  ctx.config["max_n"] = a.max_n;
  ctx.config["max_k"] = a.max_k;
  ctx.config["eps"] = a.eps;

  constexpr InstanceKind kinds[] = {InstanceKind::kCoverage, InstanceKind::kBudgetAdditive, InstanceKind::kModular,
                                    InstanceKind::kConcaveOverModular};
  struct Outcome {
    bool greedy_ok = true;
    bool robust_ok = true;
    double ratio = 1.0;
  };
  const auto outcomes = parallel_map<Outcome>(a.instances, [&](std::size_t t) {
    Rng rng(mix64(a.seed ^ mix64(t + 1)));
    const std::size_t n = 2 + rng.below(a.max_n - 1);
    const std::size_t k = 1 + rng.below(std::min(a.max_k, n));
    const SubmodularInstance f = random_instance(rng, kinds[t % std::size(kinds)], n);
    const double opt = brute_force_opt(f, k).value;
    const double g = greedy(f, k).value;
    const double r = robust_greedy(NoisyOracle(f, a.eps, rng.next_u64()), k).value;
    const double slack = 1e-12 * (1.0 + std::abs(opt));
    return Outcome{g >= greedy_bound(opt) - slack, r >= robust_greedy_bound(opt, k, a.eps) - slack,
                   opt > 0.0 ? g / opt : 1.0};
  });
  std::size_t greedy_bad = 0, robust_bad = 0;
  double worst = 1.0;
  for (const auto& o : outcomes) {
    greedy_bad += o.greedy_ok ? 0 : 1;
    robust_bad += o.robust_ok ? 0 : 1;
    worst = std::min(worst, o.ratio);
  }
  Json report;
  report["instances"] = a.instances;
  report["violations"] = greedy_bad + robust_bad;
  report["worst_ratio"] = worst;
  report["greedy_violations"] = greedy_bad;
  report["robust_violations"] = robust_bad;
  write_file(ctx.output("submodular.json"), report.dump(2) + "\n");
  out << report.dump() << "\n";
}

struct RegressArgs {
  std::size_t n = 8;
  std::size_t d = 3;
  std::uint64_t seed = 1;
  double tol = 1e-10;
  std::size_t max_iter = 30;
  double sparse_weight = 1.0;
};

inline void cmd_regress(const RegressArgs& a, RunContext& ctx, std::ostream& out) {
  if (a.n == 0 || a.d == 0 || a.d > a.n) fail(ErrorCode::kInvalidConfig, "--n and --d need 0 < d <= n");
  if (!(a.tol > 0.0)) fail(ErrorCode::kInvalidConfig, "--tol must be positive");
  ctx.seed = a.seed;
  ctx.config["n"] = a.n;
  ctx.config["d"] = a.d;
  ctx.config["tol"] = a.tol;
  ctx.config["max_iter"] = a.max_iter;
  ctx.config["sparse_weight"] = a.sparse_weight;
  Rng rng(a.seed);
  RegressionProblem p = random_problem(rng, a.n, a.d);
  p.sparse_weight = a.sparse_weight;
  p.validate();
  const SolverResult res = newton_solve(p, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(a.d)), a.tol, a.max_iter);
  std::string csv = "iter,loss,grad_norm,min_eig\n";
  for (const auto& it : res.trajectory) {
    csv += std::to_string(it.iter) + "," + format_double(it.loss) + "," + format_double(it.grad_norm) + "," +
           format_double(it.min_eig) + "\n";
  }
  write_file(ctx.output("regress.csv"), csv);
  out << to_string(res.status) << " after " << res.iterations << " steps, grad_norm "
      << format_double(res.final_grad_norm()) << "\n";
  if (!res.converged()) fail(ErrorCode::kMaxIterExceeded, "Newton solver did not reach --tol");
}

struct GenTraceArgs {
  std::string kind = "power-law-keys";
  std::size_t n = 256;
  std::size_t d = 16;
  std::uint64_t seed = 1;
  double exponent = 1.0;
  std::string format = "binary";
  std::string name;
};

inline void cmd_gen_trace(const GenTraceArgs& a, RunContext& ctx, std::ostream& out) {
  const auto kind = parse_trace_kind(a.kind);
  if (!kind) fail(ErrorCode::kInvalidConfig, "--kind: unknown trace kind '" + a.kind + "'");
  TraceFormat format;
  if (a.format == "binary") {
    format = TraceFormat::kBinary;
  } else if (a.format == "json") {
    format = TraceFormat::kJson;
  } else {
    fail(ErrorCode::kInvalidConfig, "--format must be 'binary' or 'json'");
  }
  ctx.seed = a.seed;
  ctx.config["kind"] = a.kind;
  ctx.config["n"] = a.n;
  ctx.config["d"] = a.d;
  ctx.config["exponent"] = a.exponent;
  ctx.config["format"] = a.format;
  const AttentionTrace trace = generate_trace({a.n, a.d, *kind, a.exponent, a.seed});
  const std::string name = a.name.empty() ? (format == TraceFormat::kBinary ? "trace.kvt" : "trace.json") : a.name;
  const fs::path path = ctx.output(name);
  save_trace(trace, path, format);
  out << path.string() << "\n";
}

// ---------------------------------------------------------------------------
// Dispatch

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIoError:
    case ErrorCode::kMalformedTrace:
      return kExitIo;
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kInvalidSpec:
    case ErrorCode::kInvalidTrace:
    case ErrorCode::kBadBudget:
    case ErrorCode::kTooLarge:
    case ErrorCode::kBudgetExceeded:
    case ErrorCode::kInvalidProblem:
      return kExitConfig;
    default:
      return kExitInternal;
  }
}

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

// Reruns the command recorded in a manifest, writing into `out_dir`.
inline int replay(const fs::path& manifest_path, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  Json m;
  try {
    m = Json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIoError, "--manifest: " + std::string(e.what()));
  }
  if (!m.contains("argv") || !m["argv"].is_array()) fail(ErrorCode::kInvalidConfig, "--manifest: no argv recorded");
  std::vector<std::string> args;
  const auto recorded = m["argv"].get<std::vector<std::string>>();
  for (std::size_t i = 0; i < recorded.size(); ++i) {
    if (recorded[i] == "--out-dir") {
      ++i;
      continue;
    }
    if (recorded[i].rfind("--out-dir=", 0) == 0) continue;
    args.push_back(recorded[i]);
  }
  args.push_back("--out-dir");
  args.push_back(out_dir);
  return run(std::move(args), out, err);
}

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"KV-cache eviction simulator and verification lab", "kvevict"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  std::string out_dir = "out";
  auto add_out = [&](CLI::App* sub) {
    sub->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
  };

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "run one eviction policy over a trace");
  simulate->add_option("--trace", sim.trace, "trace file (binary or JSON)")->required();
  simulate->add_option("--policy", sim.policy, "eviction policy")->capture_default_str();
  sim.flags.attach(simulate);
  add_out(simulate);

  CompareArgs cmp;
  auto* compare = app.add_subcommand("compare", "sweep several policies over a budget grid");
  compare->add_option("--trace", cmp.trace, "trace file")->required();
  compare->add_option("--policies", cmp.policies, "policies to compare")->required()->delimiter(',');
  compare->add_option("--budgets", cmp.budgets, "budget grid")->delimiter(',')->capture_default_str();
  cmp.flags.attach(compare);
  add_out(compare);

  SparsityArgs sp;
  auto* sparsity = app.add_subcommand("sparsity", "attention sparsity per row");
  sparsity->add_option("--trace", sp.traces, "trace file(s)")->required();
  sparsity->add_option("--threshold", sp.threshold, "fraction of the row max below which a weight counts as zero")
      ->capture_default_str();
  sparsity->add_option("--extent", sp.extent, "full or causal")->capture_default_str();
  add_out(sparsity);

  ProfileArgs prof;
  auto* profile = app.add_subcommand("profile", "heavy-hitter profile of accumulated scores");
  profile->add_option("--trace", prof.trace, "trace file")->required();
  profile->add_option("--policy", prof.policy, "profile the scores kept by this policy instead of exact scores");
  prof.flags.attach(profile);
  add_out(profile);

  SubmodularArgs sm;
  auto* submod = app.add_subcommand("submodular-verify", "check greedy bounds against exhaustive optima");
  submod->add_option("--instances", sm.instances, "number of random instances")->capture_default_str();
  submod->add_option("--seed", sm.seed, "seed")->capture_default_str();
  submod->add_option("--max-n", sm.max_n, "largest ground set")->capture_default_str();
  submod->add_option("--max-k", sm.max_k, "largest budget")->capture_default_str();
  submod->add_option("--eps", sm.eps, "oracle noise bound")->capture_default_str();
  add_out(submod);

  RegressArgs rg;
  auto* regress = app.add_subcommand("regress", "solve a random softmax regression instance with Newton's method");
  regress->add_option("--n", rg.n, "rows of A")->capture_default_str();
  regress->add_option("--d", rg.d, "columns of A")->capture_default_str();
  regress->add_option("--seed", rg.seed, "seed")->capture_default_str();
  regress->add_option("--tol", rg.tol, "gradient-norm tolerance")->capture_default_str();
  regress->add_option("--max-iter", rg.max_iter, "Newton step limit")->capture_default_str();
  regress->add_option("--sparse-weight", rg.sparse_weight, "multiplier on the exponential-mass penalty")
      ->capture_default_str();
  add_out(regress);

  GenTraceArgs gt;
  auto* gen = app.add_subcommand("gen-trace", "write a synthetic trace");
  gen->add_option("--kind", gt.kind, "uniform-gaussian, power-law-keys, sink-dominant, mid-heavy")
      ->capture_default_str();
  gen->add_option("--n", gt.n, "tokens")->capture_default_str();
  gen->add_option("--d", gt.d, "head dimension")->capture_default_str();
  gen->add_option("--seed", gt.seed, "seed")->capture_default_str();
  gen->add_option("--exponent", gt.exponent, "power-law exponent")->capture_default_str();
  gen->add_option("--format", gt.format, "binary or json")->capture_default_str();
  gen->add_option("--name", gt.name, "output file name inside --out-dir");
  add_out(gen);

  std::string manifest;
  auto* rep = app.add_subcommand("replay", "rerun the command recorded in a manifest");
  rep->add_option("--manifest", manifest, "manifest.json of an earlier run")->required();
  add_out(rep);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (dynamic_cast<const CLI::CallForVersion*>(&e) != nullptr) {
      out << kVersion << "\n";
      return kExitOk;
    }
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (rep->parsed()) return replay(manifest, out_dir, out, err);

    RunContext ctx;
    ctx.argv = args;
    ctx.out_dir = out_dir;
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec) fail(ErrorCode::kIoError, "--out-dir: cannot create " + out_dir + ": " + ec.message());
    const auto start = std::chrono::steady_clock::now();

    if (simulate->parsed()) {
      ctx.command = "simulate";
      cmd_simulate(sim, ctx, out);
    } else if (compare->parsed()) {
      ctx.command = "compare";
      cmd_compare(cmp, ctx, out, err);
    } else if (sparsity->parsed()) {
      ctx.command = "sparsity";
      cmd_sparsity(sp, ctx, out);
    } else if (profile->parsed()) {
      ctx.command = "profile";
      cmd_profile(prof, ctx, out);
    } else if (submod->parsed()) {
      ctx.command = "submodular-verify";
      cmd_submodular_verify(sm, ctx, out);
    } else if (regress->parsed()) {
      ctx.command = "regress";
      cmd_regress(rg, ctx, out);
    } else if (gen->parsed()) {
      ctx.command = "gen-trace";
      cmd_gen_trace(gt, ctx, out);
    }
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
    ctx.write_manifest(wall.count());
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace kvevict::cli
