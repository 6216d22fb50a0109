#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "osaq/experiments.hpp"

using namespace osaq;

namespace {

enum Exit { kOk = 0, kUsage = 1, kUnstableExit = 2, kMismatch = 3 };

struct Common {
  std::string scenario;
  std::string out;
  std::string disciplines;
  int reps = -1;
  long long horizon = -1;
  long long seed = -1;
};

Scenario load(const Common& c) {
  std::ifstream in(c.scenario);
  if (!in) throw ScenarioError("cannot open scenario file '" + c.scenario + "'");
  Scenario s = parse_scenario(in);
  if (!c.disciplines.empty()) s.methods = parse_methods(c.disciplines);
  if (c.reps >= 0) s.sim.replications = c.reps;
  if (c.horizon >= 0) {
    s.sim.horizonPackets = static_cast<std::uint64_t>(c.horizon);
    s.sim.warmupPackets = s.sim.horizonPackets / 11;
  }
  if (c.seed >= 0) s.sim.seed = static_cast<std::uint64_t>(c.seed);
  return s;
}

// Writes to --out when given, stdout otherwise.
struct Output {
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file = std::make_unique<std::ofstream>(path);
      if (!*file) throw ScenarioError("cannot write '" + path + "'");
    }
  }
  std::ostream& os() { return file ? *file : std::cout; }
  std::unique_ptr<std::ofstream> file;
};

int run_analyze(const Common& c) {
  Scenario s = load(c);
  Output out(c.out);
  write_analyze_header(out.os());
  bool unstable = false;
  auto points = sweep_points(s);
  if (std::find(s.methods.begin(), s.methods.end(), Method::Fifo) != s.methods.end())
    std::cerr << "analyze: FIFO is simulation only, skipped\n";
  for (const auto& pt : points)
    for (Method m : s.methods) {
      if (m == Method::Fifo) continue;
      for (const auto& r : analyze_point(pt, m)) {
        if (r.unstable) {
          unstable = true;
          if (r.cls == 1) std::cerr << "analyze: " << sweep_cells(pt) << " " << to_string(m) << ": " << r.note << "\n";
        }
        write_analyze_row(out.os(), s, pt, r);
      }
    }
  return unstable ? kUnstableExit : kOk;
}

std::vector<SimRow> simulate_all(const Scenario& s, const std::vector<SweepPoint>& points) {
  std::size_t nm = s.methods.size();
  return parallel_map<SimRow>(points.size() * nm, [&](std::size_t k) {
    return simulate_point(points[k / nm], s.methods[k % nm]);
  });
}

int run_simulate(const Common& c) {
  Scenario s = load(c);
  if (s.sim.replications < 1) throw ScenarioError("--reps must be >= 1");
  Output out(c.out);
  auto points = sweep_points(s);
  auto rows = simulate_all(s, points);
  write_simulate_header(out.os());
  bool unstable = false;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const SweepPoint& pt = points[k / s.methods.size()];
    if (rows[k].unstable) {
      unstable = true;
      std::cerr << "simulate: " << sweep_cells(pt) << " " << to_string(rows[k].method) << ": "
                << rows[k].note << "\n";
    }
    write_simulate_rows(out.os(), s, pt, rows[k]);
  }
  return unstable ? kUnstableExit : kOk;
}

int run_compare(const Common& c) {
  Scenario s = load(c);
  if (s.sim.replications < 2) throw ScenarioError("compare needs --reps >= 2 for intervals");
  Output out(c.out);
  auto points = sweep_points(s);
  auto sims = simulate_all(s, points);
  write_compare_header(out.os());
  int failures = 0, expected = 0;
  bool unstable = false;
  for (std::size_t k = 0; k < sims.size(); ++k) {
    const SweepPoint& pt = points[k / s.methods.size()];
    Method m = sims[k].method;
    std::vector<AnalyticRow> an;
    if (m != Method::Fifo) an = analyze_point(pt, m);
    for (std::size_t i = 0; i < s.classes.size(); ++i) {
      const AnalyticRow* a = an.empty() ? nullptr : &an[i];
      CompareRow r = judge(a, sims[k], static_cast<int>(i) + 1);
      if (counts_as_failure(r.verdict)) ++failures;
      if (r.verdict == Verdict::ExpectedDeviation) ++expected;
      if (r.verdict == Verdict::Unstable) unstable = true;
      write_compare_row(out.os(), s, pt, r);
    }
  }
  std::cerr << "compare: " << failures << " mismatch(es), " << expected
            << " expected deviation(s) of approximate backends\n";
  if (failures > 0) return kMismatch;
  return unstable ? kUnstableExit : kOk;
}

struct CaseArgs {
  CaseStudyConfig cfg;
  std::string service = "Det 5";
  double uMin = 1.0, uMax = 20.0;
  int steps = 20;
  int reps = 0;
  long long horizon = 110000;
  long long seed = 1;
  std::string out;
};

int run_casestudy(CaseArgs a) {
  a.cfg.T = parse_distribution(a.service, "--service");
  if (!(a.cfg.iMean > 0.0) || !(a.cfg.tau > 0.0) || !(a.cfg.lambda > 0.0))
    throw ScenarioError("--imean, --tau and --lambda must be > 0");
  if (a.steps < 2 || !(a.uMin > 0.0) || !(a.uMax > a.uMin))
    throw ScenarioError("need 0 < --umin < --umax and --steps >= 2");
  Output out(a.out);
  std::ostream& os = out.os();
  os << "schema,kind,tau,EU,D_buffer,D_switch,policy,sim_D_buffer,sim_buffer_ci95,sim_D_switch,"
        "sim_switch_ci95\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(kUnstable); };
  bool unstable = false;
  for (int k = 0; k < a.steps; ++k) {
    double u = a.uMin + (a.uMax - a.uMin) * k / (a.steps - 1);
    try {
      SwitchDecision d = case_study_decision(a.cfg, u);
      if (!d.dBuffer || !d.dSwitch) unstable = true;
      os << kCsvSchema << ",point," << fmt(a.cfg.tau) << "," << fmt(u) << "," << opt(d.dBuffer)
         << "," << opt(d.dSwitch) << "," << to_string(d.policy) << ",-,-,-,-\n";
    } catch (const SaturatedQueue&) {
      unstable = true;
      os << kCsvSchema << ",point," << fmt(a.cfg.tau) << "," << fmt(u) << "," << kUnstable << ","
         << kUnstable << "," << kUnstable << ",-,-,-,-\n";
    }
  }
  auto x = case_study_crossover(a.cfg, a.uMin, a.uMax);
  if (!x) {
    std::cerr << "casestudy: no buffer/switch crossover in [" << a.uMin << ", " << a.uMax << "]\n";
    return unstable ? kUnstableExit : kOk;
  }
  SwitchDecision d = case_study_decision(a.cfg, *x);
  os << kCsvSchema << ",crossover," << fmt(a.cfg.tau) << "," << fmt(*x) << "," << opt(d.dBuffer)
     << "," << opt(d.dSwitch) << ",tie,";
  if (a.reps >= 2) {
    auto h = static_cast<std::uint64_t>(a.horizon), sd = static_cast<std::uint64_t>(a.seed);
    Estimate b = case_study_simulated(a.cfg, *x, Policy::Buffer, a.reps, h, sd);
    Estimate sw = case_study_simulated(a.cfg, *x, Policy::Switch, a.reps, h, sd);
    os << fmt(b.mean) << "," << fmt(b.halfWidth) << "," << fmt(sw.mean) << "," << fmt(sw.halfWidth) << "\n";
    std::cerr << "casestudy: at E[U]=" << *x << " geometric-recovery simulation gives switch "
              << sw.mean << " vs analytic " << *d.dSwitch << " (" << 100.0 * (sw.mean / *d.dSwitch - 1.0)
              << "%)\n";
  } else {
    os << "-,-,-,-\n";
  }
  return kOk;
}

struct TableArgs {
  int reps = 30;
  long long horizon = 110000;
  long long seed = 1;
  std::string out;
};

int run_table(const TableArgs& a) {
  if (a.reps == 1) throw ScenarioError("--reps must be 0 (analytic only) or >= 2");
  Output out(a.out);
  write_lp_completion_table(out.os(), lp_completion_table(a.reps, static_cast<std::uint64_t>(a.horizon),
                                                          static_cast<std::uint64_t>(a.seed)));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Queueing analysis and simulation of links with server interruptions"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool sim) {
    sub->add_option("--scenario", common.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "Output CSV (default stdout)");
    sub->add_option("--disciplines", common.disciplines, "Comma list: Non,ENo,Pr,FP,FIFO,VPr,VNon");
    if (sim) {
      sub->add_option("--reps", common.reps, "Replications")->check(CLI::NonNegativeNumber);
      sub->add_option("--horizon", common.horizon, "Departures per replication (warmup = horizon/11)")
          ->check(CLI::PositiveNumber);
      sub->add_option("--seed", common.seed, "Base seed")->check(CLI::NonNegativeNumber);
    }
  };
  auto* analyze = app.add_subcommand("analyze", "Analytic per-class metrics");
  add_common(analyze, false);
  auto* simulate = app.add_subcommand("simulate", "Simulated per-class metrics with 95% CIs");
  add_common(simulate, true);
  auto* compare = app.add_subcommand("compare", "Analytic vs simulated, exit 3 on mismatch");
  add_common(compare, true);

  CaseArgs ca;
  auto* cs = app.add_subcommand("casestudy", "Buffer-or-switch decision sweep over E[U]");
  cs->add_option("--imean", ca.cfg.iMean, "Mean channel availability E[I]")->capture_default_str();
  cs->add_option("--tau", ca.cfg.tau, "Switch-and-sense slot")->capture_default_str();
  cs->add_option("--lambda", ca.cfg.lambda, "Arrival rate")->capture_default_str();
  cs->add_option("--service", ca.service, "Service law, e.g. 'Det 5'")->capture_default_str();
  cs->add_option("--umin", ca.uMin, "Sweep start for E[U]")->capture_default_str();
  cs->add_option("--umax", ca.uMax, "Sweep end for E[U]")->capture_default_str();
  cs->add_option("--steps", ca.steps, "Sweep points")->capture_default_str();
  cs->add_option("--reps", ca.reps, "Replications for the simulated check at the crossover (0 = off)");
  cs->add_option("--horizon", ca.horizon, "Departures per replication")->capture_default_str();
  cs->add_option("--seed", ca.seed, "Base seed")->capture_default_str();
  cs->add_option("--out", ca.out, "Output CSV (default stdout)");

  TableArgs ta;
  auto* table = app.add_subcommand("table", "LP completion moments under FP: analytic vs simulated");
  table->add_option("--reps", ta.reps, "Replications (0 = analytic only)")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  table->add_option("--horizon", ta.horizon, "Departures per replication")->capture_default_str()
      ->check(CLI::PositiveNumber);
  table->add_option("--seed", ta.seed, "Base seed")->capture_default_str()->check(CLI::NonNegativeNumber);
  table->add_option("--out", ta.out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  try {
    if (*analyze) return run_analyze(common);
    if (*simulate) return run_simulate(common);
    if (*compare) return run_compare(common);
    if (*cs) return run_casestudy(ca);
    if (*table) return run_table(ta);
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const UnsupportedAnalytic& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const SaturatedQueue& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnstableExit;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
