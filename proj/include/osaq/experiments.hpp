#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iterator>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "osaq/errors.hpp"
#include "osaq/interruption.hpp"
#include "osaq/priority.hpp"
#include "osaq/scenario.hpp"
#include "osaq/simulator.hpp"

namespace osaq {

inline constexpr const char* kCsvSchema = "osaq-csv-1";
inline constexpr const char* kUnstable = "UNSTABLE";
inline constexpr const char* kBound = "BOUND";

inline std::string fmt(double v) {
  if (!std::isfinite(v)) return kUnstable;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Runs fn(i) for i in [0, n) on a few workers; results keep index order.
template <class T>
std::vector<T> parallel_map(std::size_t n, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> out(n);
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(m);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < workers; ++k) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  std::vector<T> done;
  for (auto& o : out) done.push_back(std::move(*o));
  return done;
}

struct SweepPoint {
  std::string parameter;  // empty when the scenario has no sweep
  double value = std::numeric_limits<double>::quiet_NaN();
  Scenario scenario;
};

inline std::vector<SweepPoint> sweep_points(const Scenario& s) {
  if (!s.sweep) return {SweepPoint{"", std::numeric_limits<double>::quiet_NaN(), s}};
  std::vector<SweepPoint> out;
  for (double v : s.sweep->values)
    out.push_back({s.sweep->parameter, v, at_sweep_point(s, s.sweep->parameter, v)});
  return out;
}

inline DisciplineReport analytic_report(Method m, const ChannelModel& ch,
                                        const std::vector<TrafficClass>& classes) {
  switch (m) {
    case Method::Non: return nonpreemptive(ch, classes);
    case Method::ENo: return exceptional_nonpreemptive(ch, classes);
    case Method::Pr: return preemptive(ch, classes);
    case Method::FP: return failure_preemptive(ch, classes);
    case Method::VirtualPr: return virtual_packet_metrics(ch, classes, VirtualScheme::Preemptive);
    case Method::VirtualNon: return virtual_packet_metrics(ch, classes, VirtualScheme::Nonpreemptive);
    case Method::Fifo: break;
  }
  throw UnsupportedAnalytic("no analytic engine for FIFO-mixed traffic (simulation only)");
}

// Standard M/G/1 priority formulas with T stretched by (E[Y]+E[R])/E[Y].
inline DisciplineReport noint_report(Method m, const ChannelModel& ch,
                                     const std::vector<TrafficClass>& classes) {
  double f = (ch.Y.mean() + ch.R.mean()) / ch.Y.mean();
  std::vector<TrafficClass> stretched = classes;
  for (auto& c : stretched) c.T = scaled(c.T, f);
  return classical_priority(stretched, simulated_discipline(m));
}

struct AnalyticRow {
  double sweepValue = 0.0;
  Method method = Method::Non;
  int cls = 1;
  bool unstable = false;
  std::string note;
  double ex = 0, ew = 0, ed = 0, p0 = 0, dLow = 0, dHigh = 0;
  bool boundOnly = false;   // point value is not an analytic result
  bool approximate = false;
  bool looseUpper = false;
};

inline std::vector<AnalyticRow> analyze_point(const SweepPoint& pt, Method m) {
  const Scenario& s = pt.scenario;
  std::vector<AnalyticRow> rows;
  try {
    DisciplineReport rep = analytic_report(m, s.channel, s.classes);
    for (std::size_t i = 0; i < rep.perClass.size(); ++i) {
      AnalyticRow r;
      r.sweepValue = pt.value;
      r.method = m;
      r.cls = static_cast<int>(i) + 1;
      const ClassMetrics& c = rep.perClass[i];
      r.ex = c.x.m1;
      r.ew = c.w;
      r.ed = c.d;
      r.p0 = rep.p0;
      r.approximate = rep.approximate;
      r.dLow = r.dHigh = c.d;
      if (rep.bounds) {
        r.dLow = (*rep.bounds)[i].dLow;
        r.dHigh = (*rep.bounds)[i].dHigh;
        r.looseUpper = (*rep.bounds)[i].looseUpper;
        // Non-exponential LP service under FP: only the bracket is an analytic result.
        r.boundOnly = m == Method::FP && i == 1 && rep.approximate;
      }
      rows.push_back(r);
    }
  } catch (const SaturatedQueue& e) {
    for (std::size_t i = 0; i < s.classes.size(); ++i) {
      AnalyticRow r;
      r.sweepValue = pt.value;
      r.method = m;
      r.cls = static_cast<int>(i) + 1;
      r.unstable = true;
      r.note = e.what();
      rows.push_back(r);
    }
  }
  return rows;
}

inline SimConfig sim_config(const Scenario& s, Method m) {
  SimConfig c;
  c.channel = s.channel;
  c.classes = s.classes;
  c.discipline = simulated_discipline(m);
  c.horizonPackets = s.sim.horizonPackets;
  c.warmupPackets = s.sim.warmupPackets;
  c.replications = s.sim.replications;
  c.baseSeed = s.sim.seed;
  return c;
}

struct SimRow {
  double sweepValue = 0.0;
  Method method = Method::Non;
  bool unstable = false;
  std::string note;
  SimStats stats;
};

inline SimRow simulate_point(const SweepPoint& pt, Method m) {
  SimRow r;
  r.sweepValue = pt.value;
  r.method = m;
  try {
    r.stats = run_experiment(sim_config(pt.scenario, m), {}, 1);
  } catch (const SimulationAborted& e) {
    r.unstable = true;
    r.note = e.what();
  }
  return r;
}

inline std::string sweep_cells(const SweepPoint& pt) {
  return (pt.parameter.empty() ? std::string("none") : pt.parameter) + "," +
         (pt.parameter.empty() ? std::string("0") : fmt(pt.value));
}

inline std::string flags(const AnalyticRow& r) {
  std::string f;
  if (r.approximate) f += "APPROXIMATE";
  if (r.looseUpper) f += f.empty() ? "LOOSE_UPPER" : "|LOOSE_UPPER";
  return f.empty() ? "-" : f;
}

inline void write_analyze_header(std::ostream& os) {
  os << "schema,scenario,sweep_param,sweep_value,discipline,class,EX,EW,ED,P0,D_low,D_high,flags\n";
}

inline void write_analyze_row(std::ostream& os, const Scenario& s, const SweepPoint& pt,
                              const AnalyticRow& r) {
  os << kCsvSchema << "," << s.name << "," << sweep_cells(pt) << "," << to_string(r.method) << ","
     << r.cls << ",";
  if (r.unstable) {
    for (int k = 0; k < 6; ++k) os << kUnstable << ",";
    os << "-\n";
    return;
  }
  std::string w = r.boundOnly ? kBound : fmt(r.ew), d = r.boundOnly ? kBound : fmt(r.ed);
  os << fmt(r.ex) << "," << w << "," << d << "," << fmt(r.p0) << "," << fmt(r.dLow) << ","
     << fmt(r.dHigh) << "," << flags(r) << "\n";
}

inline void write_simulate_header(std::ostream& os) {
  os << "schema,scenario,sweep_param,sweep_value,discipline,class,reps,ED,ED_ci95,EW,EW_ci95,"
        "EX,EX_ci95,EXstar,EXstar_m2,P0,P0_ci95,Pae,Pae_ci95\n";
}

inline void write_simulate_rows(std::ostream& os, const Scenario& s, const SweepPoint& pt,
                                const SimRow& r) {
  for (std::size_t i = 0; i < s.classes.size(); ++i) {
    os << kCsvSchema << "," << s.name << "," << sweep_cells(pt) << "," << to_string(r.method)
       << "," << i + 1 << "," << s.sim.replications << ",";
    if (r.unstable) {
      for (int k = 0; k < 11; ++k) os << kUnstable << (k < 10 ? "," : "\n");
      continue;
    }
    const ClassEstimates& c = r.stats.perClass[i];
    os << fmt(c.d.mean) << "," << fmt(c.d.halfWidth) << "," << fmt(c.w.mean) << ","
       << fmt(c.w.halfWidth) << "," << fmt(c.x.mean) << "," << fmt(c.x.halfWidth) << ","
       << fmt(c.xStar.mean) << "," << fmt(c.xStar2.mean) << "," << fmt(r.stats.p0.mean) << ","
       << fmt(r.stats.p0.halfWidth) << "," << fmt(r.stats.pae.mean) << ","
       << fmt(r.stats.pae.halfWidth) << "\n";
  }
}

enum class Verdict { Ok, Mismatch, Inside, Outside, ExpectedDeviation, Unstable, NoAnalytic };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Ok: return "ok";
    case Verdict::Mismatch: return "MISMATCH";
    case Verdict::Inside: return "inside";
    case Verdict::Outside: return "OUTSIDE";
    case Verdict::ExpectedDeviation: return "approx";
    case Verdict::Unstable: return "unstable";
    case Verdict::NoAnalytic: return "sim-only";
  }
  return "?";
}

struct CompareRow {
  Method method = Method::Non;
  int cls = 1;
  std::optional<AnalyticRow> analytic;
  Estimate sim;
  Verdict verdict = Verdict::Ok;
};

inline bool counts_as_failure(Verdict v) { return v == Verdict::Mismatch || v == Verdict::Outside; }

// Exact disciplines must land in the CI; FP in its bracket widened by the CI;
// virtual-packet rows are approximate and only reported.
inline CompareRow judge(const AnalyticRow* a, const SimRow& s, int cls) {
  CompareRow r;
  r.method = s.method;
  r.cls = cls;
  if (a) r.analytic = *a;
  if (s.unstable || (a && a->unstable)) {
    r.verdict = Verdict::Unstable;
    return r;
  }
  r.sim = s.stats.perClass[static_cast<std::size_t>(cls - 1)].d;
  if (!a) {
    r.verdict = Verdict::NoAnalytic;
    return r;
  }
  switch (s.method) {
    case Method::FP:
      r.verdict = r.sim.mean + r.sim.halfWidth >= a->dLow && r.sim.mean - r.sim.halfWidth <= a->dHigh
                      ? Verdict::Inside
                      : Verdict::Outside;
      break;
    case Method::VirtualPr:
    case Method::VirtualNon:
      r.verdict = r.sim.contains(a->ed) ? Verdict::Ok : Verdict::ExpectedDeviation;
      break;
    default: r.verdict = r.sim.contains(a->ed) ? Verdict::Ok : Verdict::Mismatch;
  }
  return r;
}

inline void write_compare_header(std::ostream& os) {
  os << "schema,scenario,sweep_param,sweep_value,discipline,class,analytic_ED,D_low,D_high,sim_ED,"
        "sim_ci95,z,verdict\n";
}

inline void write_compare_row(std::ostream& os, const Scenario& s, const SweepPoint& pt,
                              const CompareRow& r) {
  os << kCsvSchema << "," << s.name << "," << sweep_cells(pt) << "," << to_string(r.method) << ","
     << r.cls << ",";
  bool haveA = r.analytic && !r.analytic->unstable;
  bool haveS = r.verdict != Verdict::Unstable || (r.sim.n > 0);
  std::string ad = !r.analytic ? std::string("-")
                   : !haveA    ? std::string(kUnstable)
                   : r.analytic->boundOnly ? std::string(kBound)
                                           : fmt(r.analytic->ed);
  std::string lo = haveA ? fmt(r.analytic->dLow) : (r.analytic ? kUnstable : "-");
  std::string hi = haveA ? fmt(r.analytic->dHigh) : (r.analytic ? kUnstable : "-");
  bool simOk = haveS && r.sim.n > 0;
  std::string z = haveA && simOk && !r.analytic->boundOnly ? fmt(r.sim.z(r.analytic->ed)) : "-";
  os << ad << "," << lo << "," << hi << "," << (simOk ? fmt(r.sim.mean) : kUnstable) << ","
     << (simOk ? fmt(r.sim.halfWidth) : kUnstable) << "," << z << "," << to_string(r.verdict)
     << "\n";
}

// LP completion moments under FP, analytic path against simulated X*.
// Rows: {Small, Large} channel x {R Exp, R Det} x lambda1 in {0.03, 0.05}.
struct LpCompletionRow {
  std::string channel;  // "Small" (E[Y]=1) or "Large" (E[Y]=75)
  std::string laws;     // "DE" (T Det, R Exp) or "DD"
  double lambda1 = 0.0;
  detail::FpLpCompletion analytic;
  std::optional<Estimate> simM1, simM2;
};

inline std::vector<LpCompletionRow> lp_completion_table(int reps, std::uint64_t horizon,
                                                        std::uint64_t seed) {
  struct Cell { const char* channel; const char* laws; double ey; bool rDet; double l1; };
  const Cell cells[] = {
      {"Small", "DE", 1, false, 0.03}, {"Small", "DE", 1, false, 0.05},
      {"Large", "DE", 75, false, 0.03}, {"Large", "DE", 75, false, 0.05},
      {"Small", "DD", 1, true, 0.03}, {"Small", "DD", 1, true, 0.05},
      {"Large", "DD", 75, true, 0.03}, {"Large", "DD", 75, true, 0.05},
  };
  return parallel_map<LpCompletionRow>(std::size(cells), [&](std::size_t k) {
    const Cell& c = cells[k];
    double er = c.ey / 5.0;
    ChannelModel ch{Distribution::exponential_mean(c.ey),
                    c.rDet ? Distribution::deterministic(er) : Distribution::exponential_mean(er)};
    TrafficClass hp{c.l1, Distribution::deterministic(3.0)};
    TrafficClass lp{0.05, Distribution::deterministic(5.0)};
    LpCompletionRow row{c.channel, c.laws, c.l1, fp_lp_completion(ch, hp, lp.T), {}, {}};
    if (reps >= 2) {
      SimConfig cfg;
      cfg.channel = ch;
      cfg.classes = {hp, lp};
      cfg.discipline = Discipline::FP;
      cfg.horizonPackets = horizon;
      cfg.warmupPackets = horizon / 11;
      cfg.replications = reps;
      cfg.baseSeed = seed;
      SimStats st = run_experiment(cfg, {}, 1);
      row.simM1 = st.perClass[1].xStar;
      row.simM2 = st.perClass[1].xStar2;
    }
    return row;
  });
}

inline void write_lp_completion_table(std::ostream& os, const std::vector<LpCompletionRow>& rows) {
  os << "schema,channel,laws,lambda1,A_m1,A_m2,path,S_m1,S_m1_ci95,S_m2,S_m2_ci95\n";
  for (const auto& r : rows) {
    os << kCsvSchema << "," << r.channel << "," << r.laws << "," << fmt(r.lambda1) << ","
       << fmt(r.analytic.xStar.m1) << "," << fmt(r.analytic.xStar.m2) << "," << to_string(r.analytic.path);
    if (r.simM1)
      os << "," << fmt(r.simM1->mean) << "," << fmt(r.simM1->halfWidth) << "," << fmt(r.simM2->mean)
         << "," << fmt(r.simM2->halfWidth) << "\n";
    else
      os << ",-,-,-,-\n";
  }
}

// Buffer-or-switch case study.
struct CaseStudyConfig {
  double iMean = 100.0;
  double tau = 5.0;
  double lambda = 0.05;
  Distribution T = Distribution::deterministic(5.0);
};

struct CaseStudyPoint {
  double uMean = 0.0;
  SwitchDecision decision;
};

inline SwitchDecision case_study_decision(const CaseStudyConfig& c, double uMean) {
  return switch_vs_buffer(Distribution::exponential_mean(c.iMean),
                          Distribution::exponential_mean(uMean), c.tau, c.lambda, c.T);
}

// E[U] where both policies give the same analytic system time.
inline std::optional<double> case_study_crossover(const CaseStudyConfig& c, double uLo,
                                                  double uHi) {
  auto gap = [&](double u) {
    SwitchDecision d = case_study_decision(c, u);
    if (!d.dBuffer) return -std::numeric_limits<double>::infinity();
    if (!d.dSwitch) return std::numeric_limits<double>::infinity();
    return *d.dSwitch - *d.dBuffer;
  };
  double gLo = gap(uLo), gHi = gap(uHi);
  if (!(gLo > 0.0 && gHi < 0.0)) return std::nullopt;
  auto tol = [](double a, double b) { return std::fabs(b - a) < 1e-10 * std::max(1.0, b); };
  auto [a, b] = boost::math::tools::bisect(gap, uLo, uHi, tol);
  return 0.5 * (a + b);
}

// Simulated system time of one policy; switching uses the true geometric recovery.
inline Estimate case_study_simulated(const CaseStudyConfig& c, double uMean, Policy p,
                                     int reps, std::uint64_t horizon, std::uint64_t seed) {
  Distribution I = Distribution::exponential_mean(c.iMean);
  Distribution U = Distribution::exponential_mean(uMean);
  SimConfig cfg;
  cfg.channel = {I, p == Policy::Buffer ? U : switching_recovery(I, U, c.tau)};
  cfg.classes = {{c.lambda, c.T}};
  cfg.horizonPackets = horizon;
  cfg.warmupPackets = horizon / 11;
  cfg.replications = reps;
  cfg.baseSeed = seed;
  return run_experiment(cfg, {}, 1).perClass[0].d;
}

}  // namespace osaq
