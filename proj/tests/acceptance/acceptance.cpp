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

// Release gate. Each criterion prints one PASS/FAIL line with its measured
// values and wall time; the exit status is nonzero if any line fails.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "cli_app.hpp"
#include "contract.hpp"
#include "dynamic_families.hpp"
#include "oracles.hpp"

namespace kvevict {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Verdict {
  bool pass = true;
  std::string detail;
};

// Accumulates failures with the first few reasons kept for the report.
class Tally {
 public:
  void check(bool ok, const std::string& what) {
    if (ok) return;
    if (failures_++ < 3) reasons_ += (reasons_.empty() ? "" : "; ") + what;
  }
  Verdict verdict(const std::string& summary) const {
    if (failures_ == 0) return {true, summary};
    return {false, summary + "; " + std::to_string(failures_) + " failure(s): " + reasons_};
  }

 private:
  std::size_t failures_ = 0;
  std::string reasons_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------

Verdict policy_contract() {
  Rng rng(2026);
  std::size_t runs = 0, steps = 0;
  Tally tally;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 16 + rng.below(497);
    const auto kind = static_cast<TraceKind>(t % 4);
    const AttentionTrace trace = generate_trace({n, 16, kind, rng.uniform(0.5, 2.0), rng.next_u64()});
    for (PolicyKind p : kAllPolicies) {
      PolicyConfig cfg;
      cfg.kind = p;
      cfg.budget = p == PolicyKind::kFull ? n : 2 + rng.below(n / 2);
      cfg.recent_fraction = rng.uniform();
      cfg.sink = rng.below(8);
      cfg.stride = 1 + rng.below(12);
      const auto r = testing::check_contract(trace, cfg);
      tally.check(r.violations == 0, std::string(to_string(p)) + " n=" + std::to_string(n) + ": " + r.first);
      ++runs;
      steps += n;
    }
  }
  return tally.verdict(std::to_string(runs) + " runs, " + std::to_string(steps) + " steps");
}

Verdict attention_oracle() {
  Rng rng(7);
  Tally tally;
  double worst_masked = 0.0, worst_norm = 0.0, worst_shift = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 8 + rng.below(120), d = 2 + rng.below(15);
    const AttentionTrace trace = generate_trace({n, d, static_cast<TraceKind>(t % 4), 1.0, rng.next_u64()});
    const double c = rng.uniform(-500.0, 500.0);
    MatrixXd q(n, d + 1), k(n, d + 1);
    q << trace.queries(), MatrixXd::Constant(static_cast<Eigen::Index>(n), 1, c);
    k << trace.keys(), MatrixXd::Ones(static_cast<Eigen::Index>(n), 1);
    const AttentionTrace shifted(q, k);
    for (TokenIndex i = 1; i <= n; ++i) {
      std::vector<TokenIndex> all(i);
      for (TokenIndex j = 1; j <= i; ++j) all[j - 1] = j;
      const StepAttention e = exact_step(trace, i);
      const StepAttention m = masked_step(trace, i, all);
      const StepAttention s = exact_step(shifted, i);
      worst_norm = std::max(worst_norm, std::abs(e.total() - 1.0));
      // A random proper subset must normalise too.
      std::vector<TokenIndex> sub{i};
      for (TokenIndex j = 1; j < i; ++j)
        if (rng.coin()) sub.push_back(j);
      worst_norm = std::max(worst_norm, std::abs(masked_step(trace, i, sub).total() - 1.0));
      for (std::size_t j = 0; j < i; ++j) {
        worst_masked = std::max(worst_masked, std::abs(m.weights[j] - e.weights[j]));
        worst_shift = std::max(worst_shift, std::abs(s.weights[j] - e.weights[j]));
      }
    }
  }
  tally.check(worst_masked <= 1e-12, "masked vs exact " + fmt(worst_masked));
  tally.check(worst_norm <= 1e-9, "normalisation " + fmt(worst_norm));
  tally.check(worst_shift <= 1e-12, "shift " + fmt(worst_shift));
  return tally.verdict("max |masked-exact|=" + fmt(worst_masked) + " max |sum-1|=" + fmt(worst_norm) +
                       " max shift=" + fmt(worst_shift));
}

double mean_retained(const AttentionTrace& trace, PolicyKind kind, std::size_t k) {
  PolicyConfig cfg;
  cfg.kind = kind;
  cfg.budget = k;
  return retained_mass(trace, run_policy(trace, cfg)).mean_retained_mass;
}

Verdict h2o_vs_local() {
  Tally tally;
  const std::size_t n = 256, k = cli::resolve_budget("20%", n);
  double h_sum = 0.0, l_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const AttentionTrace trace = generate_trace({n, 16, TraceKind::kPowerLawKeys, 1.0, seed});
    const double h = mean_retained(trace, PolicyKind::kH2O, k);
    const double l = mean_retained(trace, PolicyKind::kLocal, k);
    tally.check(h > l, "seed " + std::to_string(seed) + ": h2o " + fmt(h) + " <= local " + fmt(l));
    h_sum += h;
    l_sum += l;
  }
  const double h = h_sum / 20, l = l_sum / 20;
  tally.check(h >= 0.9, "h2o mean " + fmt(h) + " < 0.9");
  tally.check(l <= 0.7, "local mean " + fmt(l) + " > 0.7");
  return tally.verdict("k=" + std::to_string(k) + " h2o mean=" + fmt(h) + " local mean=" + fmt(l));
}

Verdict sink_vs_h2o() {
  Tally tally;
  const std::size_t n = 256, k = cli::resolve_budget("20%", n);
  double worst_gap = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const AttentionTrace trace = generate_trace({n, 16, TraceKind::kMidHeavy, 1.0, seed});
    const TokenIndex dominant = dominant_key_position(trace);
    tally.check(dominant > 8 && dominant < n - k, "seed " + std::to_string(seed) + ": dominant key at " +
                                                      std::to_string(dominant));
    const double h = mean_retained(trace, PolicyKind::kH2O, k);
    const double s = mean_retained(trace, PolicyKind::kSinkLocal, k);
    tally.check(h > s, "seed " + std::to_string(seed) + ": h2o " + fmt(h) + " <= sink_local " + fmt(s));
    worst_gap = std::min(worst_gap, h - s);
  }
  return tally.verdict("20 traces, smallest h2o - sink_local gap=" + fmt(worst_gap));
}

Verdict greedy_bounds() {
  Tally tally;
  constexpr InstanceKind kinds[] = {InstanceKind::kCoverage, InstanceKind::kBudgetAdditive, InstanceKind::kModular,
                                    InstanceKind::kConcaveOverModular};
  Rng rng(11);
  double worst = 1.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < 600; ++t) {
    const std::size_t n = 2 + rng.below(11);
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(4, n));
    const SubmodularInstance f = random_instance(rng, kinds[t % 4], n);
    const double eps = t % 3 == 0 ? 0.0 : rng.uniform(0.0, 0.5);
    const double opt = brute_force_opt(f, k).value;
    const double g = greedy(f, k).value;
    const double r = robust_greedy(NoisyOracle(f, eps, rng.next_u64()), k).value;
    const double slack = 1e-12 * (1.0 + opt);
    tally.check(g >= greedy_bound(opt) - slack, "greedy instance " + std::to_string(t));
    tally.check(r >= robust_greedy_bound(opt, k, eps) - slack, "robust instance " + std::to_string(t));
    if (opt > 0) worst = std::min(worst, g / opt);
    ++count;
  }
  return tally.verdict(std::to_string(count) + " instances, worst greedy/opt=" + fmt(worst));
}

Verdict dynamic_replay() {
  using testing::DriftSpec;
  using testing::Plant;
  Tally tally;
  std::size_t families = 0;
  Rng rng(5);
  for (int t = 0; t < 12; ++t) {
    DriftSpec spec;
    spec.steps = 8 + rng.below(6);
    spec.budget = 2 + rng.below(3);
    spec.theta = rng.uniform(0.005, 0.05);
    spec.gamma = spec.theta;
    spec.eps0 = t % 2 == 0 ? 0.0 : rng.uniform(0.001, 0.02);
    const auto fam = testing::drifting_family(spec);
    const auto report =
        check_dynamic_conditions(fam, build_sequence(fam), {spec.theta, spec.gamma, spec.eps0, 1e-12});
    tally.check(report.all_conditions, "clean family " + std::to_string(t) + " broke " + report.first_violation_kind);
    tally.check(report.trajectory_holds, "clean family " + std::to_string(t) + " missed the trajectory bound");
    ++families;
  }
  struct Planted {
    Plant plant;
    std::size_t expected_offset;  // violation step relative to the planted step
    const char* kind;
  };
  const Planted plants[] = {{Plant::kNonMonotone, 0, "monotone"},
                            {Plant::kDrop, 0, "dynamic1"},
                            {Plant::kJump, 1, "dynamic2"},
                            {Plant::kApproxGap, 0, "approximate"}};
  for (const Planted& p : plants) {
    for (std::size_t step = 3; step <= 10; ++step) {
      DriftSpec spec;
      spec.plant = p.plant;
      spec.plant_step = step;
      const auto fam = testing::drifting_family(spec);
      const auto report = check_dynamic_conditions(fam, build_sequence(fam), {0.01, 0.01, 0.0, 1e-12});
      const std::size_t expected = step - p.expected_offset;
      const bool ok = report.first_condition_violation == std::optional<std::size_t>(expected) &&
                      report.first_violation_kind == p.kind;
      tally.check(ok, std::string(p.kind) + " planted at " + std::to_string(step) + " reported at " +
                          (report.first_condition_violation ? std::to_string(*report.first_condition_violation)
                                                            : std::string("none")) +
                          " as " + report.first_violation_kind);
      ++families;
    }
  }
  return tally.verdict(std::to_string(families) + " families replayed");
}

VectorXd fd_gradient(const RegressionProblem& p, const VectorXd& x, double h) {
  VectorXd g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    VectorXd a = x, b = x;
    a(j) += h;
    b(j) -= h;
    g(j) = (loss(p, a).total - loss(p, b).total) / (2 * h);
  }
  return g;
}

MatrixXd fd_hessian(const RegressionProblem& p, const VectorXd& x, double h) {
  MatrixXd H(x.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    VectorXd a = x, b = x;
    a(j) += h;
    b(j) -= h;
    H.col(j) = (gradient(p, a) - gradient(p, b)) / (2 * h);
  }
  return H;
}

Verdict regression_numerics() {
  Tally tally;
  Rng rng(3);
  double worst_g = 0.0, worst_h = 0.0, worst_eig = std::numeric_limits<double>::infinity();
  std::size_t max_iter = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.below(12);
    const std::size_t d = 1 + rng.below(std::min<std::size_t>(6, n));
    const double l = rng.uniform(0.1, 4.0);
    // Every instance is checked at both weight scales: the PD regime for the
    // eigenvalue and solver claims, small weights so the exponential terms
    // are not swamped in the derivative checks.
    for (bool pd : {true, false}) {
      RegressionProblem p = random_problem(rng, n, d, pd, l);
      p.sparse_weight = rng.uniform(0.0, 2.0);
      p.validate();
      VectorXd x(static_cast<Eigen::Index>(d));
      for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = rng.normal();
      x *= p.R * rng.uniform() / std::max(x.norm(), 1e-300);
      const VectorXd g = gradient(p, x);
      const double eg = (g - fd_gradient(p, x, 1e-6)).norm() / std::max(1.0, g.norm());
      const MatrixXd H = hessian(p, x);
      const double eh = (H - fd_hessian(p, x, 1e-6)).norm() / std::max(1.0, H.norm());
      worst_g = std::max(worst_g, eg);
      worst_h = std::max(worst_h, eh);
      tally.check(eg <= 1e-5, "gradient error " + fmt(eg));
      tally.check(eh <= 1e-4, "Hessian error " + fmt(eh));
      if (!pd) continue;
      tally.check(pd_condition_holds(p), "generator left the PD regime");
      const double eig = min_eigenvalue(H) / l;
      worst_eig = std::min(worst_eig, eig);
      tally.check(eig >= 1 - 1e-6, "min eigenvalue / l = " + fmt(eig));
      const SolverResult r = newton_solve(p, VectorXd::Zero(static_cast<Eigen::Index>(d)), 1e-10, 30);
      tally.check(r.converged() && r.final_grad_norm() <= 1e-10, "Newton did not converge");
      max_iter = std::max(max_iter, r.iterations);
    }
  }
  return tally.verdict("grad err=" + fmt(worst_g) + " Hessian err=" + fmt(worst_h) + " min eig/l=" + fmt(worst_eig) +
                       " Newton steps<=" + std::to_string(max_iter));
}

Verdict memory_accounting() {
  Tally tally;
  std::string summary;
  for (std::size_t n : {256, 1000, 2048, 4096}) {
    PolicyConfig cfg;
    cfg.kind = PolicyKind::kH2O;
    cfg.budget = cli::resolve_budget("20%", n);
    const MemoryFootprint m = memory_footprint(cfg, n, 128, 2.0);
    const double rounding = 1.0 / static_cast<double>(n);
    tally.check(std::abs(m.ratio - 0.2) <= rounding, "n=" + std::to_string(n) + " ratio " + fmt(m.ratio));
    tally.check(1.0 / m.ratio >= 5.0, "n=" + std::to_string(n) + " reduction below 5x");
    summary += (summary.empty() ? "" : " ") + std::string("n=") + std::to_string(n) + ":" + fmt(m.ratio);
  }
  return tally.verdict("ratios " + summary);
}

Verdict reproducibility() {
  namespace fs = std::filesystem;
  Tally tally;
  const fs::path dir = oracle::scratch_dir("acceptance_replay");
  const std::string trace = (dir / "trace.kvt").string();
  save_trace(generate_trace({192, 16, TraceKind::kPowerLawKeys, 1.0, 17}), trace);
  const std::vector<std::pair<std::vector<std::string>, std::string>> runs = {
      {{"simulate", "--trace", trace, "--policy", "h2o", "--budget", "20%"}, "steps.csv"},
      {{"compare", "--trace", trace, "--policies", "h2o,local,sink_local,topk"}, "compare.csv"},
      {{"sparsity", "--trace", trace}, "sparsity.csv"},
      {{"profile", "--trace", trace, "--policy", "h2o"}, "profile.csv"},
      {{"regress", "--n", "12", "--d", "4", "--seed", "9"}, "regress.csv"},
  };
  std::ostringstream sink;
  std::size_t index = 0;
  for (const auto& [args, csv] : runs) {
    const std::string a = (dir / ("run" + std::to_string(index))).string();
    const std::string b = (dir / ("replay" + std::to_string(index))).string();
    ++index;
    auto first = args;
    first.push_back("--out-dir");
    first.push_back(a);
    const int c1 = cli::run(first, sink, sink);
    const int c2 = cli::run({"replay", "--manifest", a + "/manifest.json", "--out-dir", b}, sink, sink);
    tally.check(c1 == 0 && c2 == 0, args.front() + " exited " + std::to_string(c1) + "/" + std::to_string(c2));
    if (c1 != 0 || c2 != 0) continue;
    tally.check(cli::read_file(fs::path(a) / csv) == cli::read_file(fs::path(b) / csv), args.front() + " differs");
  }
  return tally.verdict(std::to_string(runs.size()) + " commands replayed");
}

struct Criterion {
  const char* name;
  double limit_seconds;
  Verdict (*run)();
};

}  // namespace
}  // namespace kvevict

int main() {
  using namespace kvevict;
  const Criterion criteria[] = {
      {"policy contract", 60.0, policy_contract},
      {"attention oracle", 10.0, attention_oracle},
      {"h2o vs local retained mass", 120.0, h2o_vs_local},
      {"h2o vs sink_local on mid-sequence heavy keys", 60.0, sink_vs_h2o},
      {"greedy and robust greedy bounds", 120.0, greedy_bounds},
      {"dynamic condition replay", 30.0, dynamic_replay},
      {"regression numerics", 120.0, regression_numerics},
      {"memory accounting", 1.0, memory_accounting},
      {"manifest replay reproducibility", 60.0, reproducibility},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
    if (wall.count() > c.limit_seconds) {
      v.pass = false;
      v.detail += "; over time limit " + fmt(c.limit_seconds) + "s";
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << c.name << " (" << fmt(wall.count()) << "s): " << v.detail
              << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criterion/criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
