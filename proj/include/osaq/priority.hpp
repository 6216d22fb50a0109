#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "osaq/errors.hpp"
#include "osaq/interruption.hpp"
#include "osaq/stochastic.hpp"

namespace osaq {

// Poisson arrivals with real service time T. Index 0 is the highest priority.
struct TrafficClass {
  double lambda = 0.0;
  Distribution T;
};

enum class Discipline { Non, ENo, Pr, FP, Fifo };

inline const char* to_string(Discipline d) {
  switch (d) {
    case Discipline::Non: return "Non";
    case Discipline::ENo: return "ENo";
    case Discipline::Pr: return "Pr";
    case Discipline::FP: return "FP";
    case Discipline::Fifo: return "FIFO";
  }
  return "?";
}

struct ClassMetrics {
  MomentPair xb;
  MomentPair x;      // completion from head of line
  MomentPair xStar;  // completion from real service start
  double w = 0.0;
  double wStar = 0.0;
  double d = 0.0;
  // Same system time via an independent formula; NaN when there is none.
  double dSecondRoute = std::numeric_limits<double>::quiet_NaN();
};

struct ClassBounds {
  double dLow = 0.0;
  double dHigh = 0.0;
  bool looseUpper = false;  // proposed upper bound exceeded the natural one
};

// LP completion under FP is approximated differently per channel regime.
enum class FpPath { None, Large, Small, Intermediate, ExponentialExact };

inline const char* to_string(FpPath p) {
  switch (p) {
    case FpPath::None: return "none";
    case FpPath::Large: return "large";
    case FpPath::Small: return "small";
    case FpPath::Intermediate: return "intermediate";
    case FpPath::ExponentialExact: return "exponential-exact";
  }
  return "?";
}

struct DisciplineReport {
  Discipline discipline = Discipline::Non;
  std::vector<ClassMetrics> perClass;
  double p0 = 1.0;
  double kappa = 0.0;      // sum lambda_i E[T_i] E[W_i]
  double kappaStar = 0.0;  // same with alternative-model waiting times
  std::optional<std::vector<ClassBounds>> bounds;
  bool approximate = false;
  FpPath fpPath = FpPath::None;
};

namespace detail {

inline void validate_classes(const std::vector<TrafficClass>& classes) {
  if (classes.empty()) throw std::invalid_argument("at least one traffic class is required");
  for (const auto& c : classes)
    if (!(c.lambda > 0.0) || !std::isfinite(c.lambda))
      throw std::invalid_argument("class arrival rates must be finite and > 0");
}

inline void require_two(const std::vector<TrafficClass>& classes, const char* what) {
  if (classes.size() != 2)
    throw UnsupportedAnalytic(std::string(what) + " analysis supports exactly 2 classes, got " +
                              std::to_string(classes.size()));
}

inline double total_rate(const std::vector<TrafficClass>& classes) {
  double s = 0.0;
  for (const auto& c : classes) s += c.lambda;
  return s;
}

// Partial loads sigma[i] = sum_{j <= i} rho_j, sigma[-1] = 0 stored at index 0.
inline std::vector<double> partial_loads(const std::vector<double>& rho, const char* what) {
  std::vector<double> sigma(rho.size() + 1, 0.0);
  for (std::size_t i = 0; i < rho.size(); ++i) {
    sigma[i + 1] = sigma[i] + rho[i];
    require_stable(sigma[i + 1], std::string(what) + " (classes 1.." + std::to_string(i + 1) + ")");
  }
  return sigma;
}

// kappa uses each report's own w. kappaStar measures waiting beyond the
// channel-only completion X_b, which is the same reference for every
// discipline; with exponential service it equals the mean unfinished work
// up to a discipline-independent constant.
inline void fill_kappa(DisciplineReport& rep, const std::vector<TrafficClass>& classes,
                       double alpha, const MomentPair& r) {
  rep.kappa = rep.kappaStar = 0.0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    double t = analytic_form(classes[i].T).mean();
    double work = classes[i].lambda * t;
    rep.kappa += work * rep.perClass[i].w;
    rep.kappaStar += work * (rep.perClass[i].d - t * (1.0 + alpha * r.m1));
  }
}

struct StartMix {
  std::vector<MomentPair> t, xb, xe;
  double lambda = 0.0, rhoB = 0.0;
  MomentPair setup;  // (1 - P_ae) R_r against the aggregate arrival stream
};

inline StartMix start_mix(const InterruptionLaw& law, const std::vector<TrafficClass>& classes) {
  StartMix m;
  m.lambda = total_rate(classes);
  double pae = p_ae(law, m.lambda);
  MomentPair rr = law.residual(m.lambda);
  m.setup = {(1.0 - pae) * rr.m1, (1.0 - pae) * rr.m2};
  for (const auto& c : classes) {
    MomentPair t = moments(analytic_form(c.T));
    MomentPair xb = completion_from_up(law, t);
    MomentPair xu{xb.m1 + rr.m1, xb.m2 + rr.m2 + 2.0 * rr.m1 * xb.m1};
    m.t.push_back(t);
    m.xb.push_back(xb);
    m.xe.push_back({pae * xb.m1 + (1.0 - pae) * xu.m1, pae * xb.m2 + (1.0 - pae) * xu.m2});
    m.rhoB += c.lambda * xb.m1;
  }
  return m;
}

// Empty-system probability; identical for every work-conserving discipline.
inline double empty_probability(const StartMix& m) {
  return (1.0 - m.rhoB) / (1.0 + m.lambda * m.setup.m1);
}

}  // namespace detail

// Classical priority M/G/1 without interruptions (Non or Pr only).
inline DisciplineReport classical_priority(const std::vector<TrafficClass>& classes,
                                           Discipline discipline) {
  detail::validate_classes(classes);
  if (discipline != Discipline::Non && discipline != Discipline::Pr)
    throw UnsupportedAnalytic("classical priority formula covers Non and Pr only");
  std::vector<double> rho;
  std::vector<MomentPair> t;
  double jAll = 0.0;
  for (const auto& c : classes) {
    t.push_back(moments(analytic_form(c.T)));
    rho.push_back(c.lambda * t.back().m1);
    jAll += 0.5 * c.lambda * t.back().m2;
  }
  auto sigma = detail::partial_loads(rho, "classical priority");
  DisciplineReport rep;
  rep.discipline = discipline;
  double jPartial = 0.0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    jPartial += 0.5 * classes[i].lambda * t[i].m2;
    ClassMetrics cm;
    cm.xb = t[i];
    double den = (1.0 - sigma[i]) * (1.0 - sigma[i + 1]);
    if (discipline == Discipline::Non) {
      cm.x = cm.xStar = t[i];
      cm.w = jAll / den;
      cm.d = cm.w + t[i].m1;
    } else {
      // Completion stretched by higher-class preemptions.
      cm.x = cm.xStar = {t[i].m1 / (1.0 - sigma[i]), std::numeric_limits<double>::quiet_NaN()};
      cm.w = jPartial / den;
      cm.d = cm.w + cm.x.m1;
    }
    cm.wStar = cm.w;
    rep.perClass.push_back(cm);
  }
  rep.p0 = 1.0 - sigma.back();
  detail::fill_kappa(rep, classes, 0.0, {});
  return rep;
}

inline DisciplineReport nonpreemptive(const ChannelModel& ch,
                                      const std::vector<TrafficClass>& classes) {
  detail::validate_classes(classes);
  InterruptionLaw law = interruption_law(ch);
  detail::StartMix m = detail::start_mix(law, classes);
  std::vector<double> rhoB;
  for (std::size_t i = 0; i < classes.size(); ++i) rhoB.push_back(classes[i].lambda * m.xb[i].m1);
  auto sigma = detail::partial_loads(rhoB, "nonpreemptive");
  const std::size_t n = classes.size();

  // X_i = X_e,i + rho (X_b,i - X_e,i) with rho = sum lambda_j E[X_j].
  double num = 0.0, den = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    num += classes[j].lambda * m.xe[j].m1;
    den -= classes[j].lambda * (m.xb[j].m1 - m.xe[j].m1);
  }
  double rho = num / den;
  double j2 = 0.0;
  std::vector<MomentPair> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = {m.xe[i].m1 + rho * (m.xb[i].m1 - m.xe[i].m1),
            rho * m.xb[i].m2 + (1.0 - rho) * m.xe[i].m2};
    j2 += 0.5 * classes[i].lambda * x[i].m2;
  }

  // Busy periods opened by an exceptional first service.
  MomentPair xeAll;
  double sumXb2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double share = classes[i].lambda / m.lambda;
    xeAll.m1 += share * m.xe[i].m1;
    xeAll.m2 += share * m.xe[i].m2;
    sumXb2 += classes[i].lambda * m.xb[i].m2;
  }
  double denE = 1.0 + m.lambda * xeAll.m1 - m.rhoB;

  DisciplineReport rep;
  rep.discipline = Discipline::Non;
  for (std::size_t i = 0; i < n; ++i) {
    double pri = (1.0 - sigma[i]) * (1.0 - sigma[i + 1]);
    ClassMetrics cm;
    cm.xb = m.xb[i];
    cm.x = x[i];
    cm.xStar = m.xb[i];
    cm.w = j2 / pri;
    cm.d = cm.w + x[i].m1;
    cm.wStar = cm.d - cm.xStar.m1;
    cm.dSecondRoute =
        ((1.0 - m.rhoB) * m.xe[i].m1 + m.lambda * xeAll.m1 * m.xb[i].m1) / denE +
        m.lambda * ((1.0 - m.rhoB) * xeAll.m2 + xeAll.m1 * sumXb2) / (2.0 * denE * pri);
    rep.perClass.push_back(cm);
  }
  rep.p0 = (1.0 - m.rhoB) / denE;
  detail::fill_kappa(rep, classes, law.alpha, law.r);
  return rep;
}

inline DisciplineReport exceptional_nonpreemptive(const ChannelModel& ch,
                                                  const std::vector<TrafficClass>& classes) {
  detail::validate_classes(classes);
  InterruptionLaw law = interruption_law(ch);
  detail::StartMix m = detail::start_mix(law, classes);
  std::vector<double> rhoB;
  double sumXb2 = 0.0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    rhoB.push_back(classes[i].lambda * m.xb[i].m1);
    sumXb2 += classes[i].lambda * m.xb[i].m2;
  }
  auto sigma = detail::partial_loads(rhoB, "exceptional nonpreemptive");
  const MomentPair& s = m.setup;
  double setupTerm =
      (1.0 - m.rhoB) * (m.lambda * s.m2 + 2.0 * s.m1) / (2.0 * (1.0 + m.lambda * s.m1));

  DisciplineReport rep;
  rep.discipline = Discipline::ENo;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    double pri = (1.0 - sigma[i]) * (1.0 - sigma[i + 1]);
    ClassMetrics cm;
    cm.xb = cm.x = cm.xStar = m.xb[i];
    cm.d = m.xb[i].m1 + sumXb2 / (2.0 * pri) + setupTerm / pri;
    cm.w = cm.wStar = cm.d - m.xb[i].m1;
    rep.perClass.push_back(cm);
  }
  rep.p0 = detail::empty_probability(m);
  detail::fill_kappa(rep, classes, law.alpha, law.r);
  return rep;
}

// Operating and interruption periods as perceived by the LP class.
struct LpChannelView {
  MomentPair y2;
  MomentPair r2;
};

namespace detail {

// Moments of the HP busy-period machinery.
struct HpBusy {
  double lambda = 0.0;
  MomentPair xb;
  double g = 1.0;  // 1 / (1 - rho_1)
  MomentPair bb;   // inner busy period

  // Busy period opened by initial work with moments `init`.
  MomentPair opened_by(const MomentPair& init) const {
    return {init.m1 * g, init.m2 * g * g + lambda * bb.m2 * init.m1};
  }
};

inline HpBusy hp_busy(const InterruptionLaw& law, const TrafficClass& hp, const char* what) {
  HpBusy h;
  h.lambda = hp.lambda;
  h.xb = completion_from_up(law, moments(analytic_form(hp.T)));
  double rho = hp.lambda * h.xb.m1;
  require_stable(rho, std::string(what) + " (HP class)");
  h.g = 1.0 / (1.0 - rho);
  h.bb = {h.xb.m1 * h.g, h.xb.m2 * h.g * h.g * h.g};
  return h;
}

// R2 branch for an HP arrival during the recovery R: the clock reading plus
// the busy period opened by the residual recovery and one HP service.
inline MomentPair recovery_arrival_branch(const ClockRace& rr, const HpBusy& h) {
  MomentPair v{rr.overshoot.m1 + h.xb.m1,
               rr.overshoot.m2 + h.xb.m2 + 2.0 * rr.overshoot.m1 * h.xb.m1};
  MomentPair b = h.opened_by(v);
  return {rr.clock.m1 + b.m1, rr.clock.m2 + 2.0 * (rr.cross + rr.clock.m1 * h.xb.m1) * h.g + b.m2};
}

// Transform-level description of R2 under preemption, for the LP overshoot.
struct PreemptiveLpTransform {
  Distribution R, T1;
  double alpha, lambda1;

  double xb1_lst(double s) const { return lst(T1, s + alpha * lst_complement(R, s)); }

  double bb1_lst(double s) const {
    double b = 0.0;
    for (int it = 0; it < 100000; ++it) {
      double next = xb1_lst(s + lambda1 * (1.0 - b));
      if (std::fabs(next - b) < 1e-16) return next;
      b = next;
    }
    throw ConvergenceError("HP busy-period transform did not converge");
  }

  double complement(double s) const {
    double b = bb1_lst(s);
    double sigma = s + lambda1 * (1.0 - b);
    double phi = lambda1 / (alpha + lambda1);
    double fail = lst(R, s + lambda1) +
                  (lst(R, sigma) - lst(R, lambda1 + s)) / b * xb1_lst(sigma);
    return phi * (1.0 - b) + (1.0 - phi) * (1.0 - fail);
  }
};

}  // namespace detail

inline LpChannelView lp_channel_view(const ChannelModel& ch, const TrafficClass& hp) {
  InterruptionLaw law = interruption_law(ch);
  detail::HpBusy h = detail::hp_busy(law, hp, "lp_channel_view");
  double a = law.alpha, l1 = hp.lambda;
  Distribution r = analytic_form(ch.R);
  ClockRace rr = race(r, l1);
  MomentPair arrival = detail::recovery_arrival_branch(rr, h);
  double phi = l1 / (a + l1);
  double pNo = rr.p_below;
  LpChannelView v;
  v.y2 = {1.0 / (a + l1), 2.0 / ((a + l1) * (a + l1))};
  v.r2 = {phi * h.bb.m1 + (1.0 - phi) * (pNo * rr.below.m1 + (1.0 - pNo) * arrival.m1),
          phi * h.bb.m2 + (1.0 - phi) * (pNo * rr.below.m2 + (1.0 - pNo) * arrival.m2)};
  return v;
}

// Interruption law the LP class sees under preemptive priority.
inline InterruptionLaw lp_interruption_law(const ChannelModel& ch, const TrafficClass& hp) {
  LpChannelView v = lp_channel_view(ch, hp);
  InterruptionLaw base = interruption_law(ch);
  detail::PreemptiveLpTransform tr{analytic_form(ch.R), analytic_form(hp.T), base.alpha,
                                   hp.lambda};
  return make_law(base.alpha + hp.lambda, v.r2, [tr](double s) { return tr.complement(s); });
}

namespace detail {

inline ClassMetrics from_single(const SingleClassReport& s) {
  ClassMetrics cm;
  cm.xb = s.completion.xb;
  cm.x = s.completion.x;
  cm.xStar = s.completion.xStar;
  cm.w = s.w;
  cm.wStar = s.wStar;
  cm.d = s.d;
  cm.dSecondRoute = s.w + s.completion.x.m1;
  return cm;
}

}  // namespace detail

inline DisciplineReport preemptive(const ChannelModel& ch, const std::vector<TrafficClass>& classes) {
  detail::validate_classes(classes);
  detail::require_two(classes, "preemptive");
  InterruptionLaw law = interruption_law(ch);
  const TrafficClass& hp = classes[0];
  const TrafficClass& lp = classes[1];
  DisciplineReport rep;
  rep.discipline = Discipline::Pr;
  rep.perClass.push_back(
      detail::from_single(single_class_report(law, moments(analytic_form(hp.T)), hp.lambda)));
  InterruptionLaw lpLaw = lp_interruption_law(ch, hp);
  rep.perClass.push_back(
      detail::from_single(single_class_report(lpLaw, moments(analytic_form(lp.T)), lp.lambda)));
  detail::StartMix m = detail::start_mix(law, classes);
  require_stable(m.rhoB, "preemptive");
  rep.p0 = detail::empty_probability(m);
  detail::fill_kappa(rep, classes, law.alpha, law.r);
  return rep;
}

namespace detail {

// R2 seen by an LP packet holding the channel for one cycle under FP. The
// window before the failure is exponential with rate `k`; HP arrivals within
// the window or the recovery hand the channel to HP at recovery end.
struct FpInterruption {
  MomentPair r2;
  double windowCross = 0.0;  // E[W R2] for the full window W
};

inline FpInterruption fp_interruption(const Distribution& R, const HpBusy& h, double k) {
  double l1 = h.lambda;
  double yhat = k / (k + l1);
  MomentPair u{1.0 / k, 2.0 / (k * k)};  // window left after the HP arrival
  ClockRace rr = race(R, l1);
  MomentPair rm = moments(R);

  MomentPair init{u.m1 + rm.m1 + h.xb.m1,
                  u.m2 + rm.m2 + h.xb.m2 +
                      2.0 * (u.m1 * rm.m1 + u.m1 * h.xb.m1 + rm.m1 * h.xb.m1)};
  double uInit = u.m2 + u.m1 * rm.m1 + u.m1 * h.xb.m1;
  MomentPair b = h.opened_by(init);
  MomentPair inWindow{b.m1 - u.m1, b.m2 - 2.0 * uInit * h.g + u.m2};
  MomentPair inRecovery = recovery_arrival_branch(rr, h);

  double pWin = 1.0 - yhat, pNone = yhat * rr.p_below, pRec = yhat * (1.0 - rr.p_below);
  FpInterruption out;
  out.r2 = {pNone * rr.below.m1 + pWin * inWindow.m1 + pRec * inRecovery.m1,
            pNone * rr.below.m2 + pWin * inWindow.m2 + pRec * inRecovery.m2};
  // Window given no HP arrival in it is Exp(k + l1); given an arrival it is
  // the clock (Exp(k + l1)) plus the independent remainder u.
  double clock = 1.0 / (k + l1);
  double uR2 = uInit * h.g - u.m2;
  out.windowCross = pNone * clock * rr.below.m1 + pRec * clock * inRecovery.m1 +
                    pWin * (clock * inWindow.m1 + uR2);
  return out;
}

inline MomentPair renewal_completion(const MomentPair& t, double alpha, const MomentPair& r2) {
  double f = 1.0 + alpha * r2.m1;
  return {t.m1 * f, t.m2 * f * f + alpha * t.m1 * r2.m2};
}

struct FpLpCompletion {
  MomentPair xStar;
  FpPath path = FpPath::None;
};

}  // namespace detail

// LP completion from real service start under FP.
inline detail::FpLpCompletion fp_lp_completion(const ChannelModel& ch, const TrafficClass& hp,
                                               const Distribution& T2) {
  InterruptionLaw law = interruption_law(ch);
  detail::HpBusy h = detail::hp_busy(law, hp, "failure_preemptive");
  Distribution r = analytic_form(ch.R);
  Distribution t2 = analytic_form(T2);
  MomentPair t = moments(t2);
  double a = law.alpha;
  detail::FpLpCompletion out;

  if (t2.kind() == Distribution::Kind::Exponential) {
    // Each service restart is a fresh race between failure and completion.
    double k = a + t2.rate();
    detail::FpInterruption fi = detail::fp_interruption(r, h, k);
    double q = a / k;
    double en = q / (1.0 - q), enn = 2.0 * q * q / ((1.0 - q) * (1.0 - q));
    MomentPair z{1.0 / k + fi.r2.m1, 2.0 / (k * k) + 2.0 * fi.windowCross + fi.r2.m2};
    MomentPair f{1.0 / k, 2.0 / (k * k)};
    out.xStar = {f.m1 + en * z.m1,
                 f.m2 + 2.0 * f.m1 * en * z.m1 + en * z.m2 + enn * z.m1 * z.m1};
    out.path = FpPath::ExponentialExact;
    return out;
  }

  auto large = [&] {
    // At most one interruption; window matched to an exponential LP service.
    detail::FpInterruption fi = detail::fp_interruption(r, h, a + 1.0 / t.m1);
    double p = lst_complement(t2, a);
    double tHit = t.m1 + lst_deriv(t2, a, 1);  // E[T 1{Y < T}]
    return MomentPair{t.m1 + p * fi.r2.m1, t.m2 + 2.0 * tHit * fi.r2.m1 + p * fi.r2.m2};
  };
  auto small = [&] {
    detail::FpInterruption fi = detail::fp_interruption(r, h, a);
    return detail::renewal_completion(t, a, fi.r2);
  };

  double ey = 1.0 / a;
  if (ey >= 5.0 * t.m1) {
    out.xStar = large();
    out.path = FpPath::Large;
  } else if (ey <= t.m1) {
    out.xStar = small();
    out.path = FpPath::Small;
  } else {
    // Pick the regime closer to the middle of the Pr/Non completion bracket.
    MomentPair nonX = completion_from_up(law, t);
    MomentPair prX = completion_from_up(lp_interruption_law(ch, hp), t);
    double mid = 0.5 * (nonX.m1 + prX.m1);
    MomentPair l = large(), s = small();
    out.xStar = std::fabs(l.m1 - mid) <= std::fabs(s.m1 - mid) ? l : s;
    out.path = FpPath::Intermediate;
  }
  return out;
}

namespace detail {

// Remaining LP service seen by an HP arrival, as transform value L and
// derivative L1 at the failure rate.
enum class LpRemainder { Fresh, Equilibrium };

inline std::pair<double, double> lp_remainder_transform(const Distribution& t2, double a,
                                                        LpRemainder mode) {
  if (mode == LpRemainder::Fresh || t2.kind() == Distribution::Kind::Exponential)
    return {lst(t2, a), lst_deriv(t2, a, 1)};
  // Stationary residual life: L_e(s) = (1 - T^(s)) / (s E[T]).
  double mu = t2.mean(), c = lst_complement(t2, a);
  return {c / (a * mu), (-a * lst_deriv(t2, a, 1) - c) / (a * a * mu)};
}

// HP setup time under FP for a given probability that LP work is present
// when the system is empty of HP packets. With LP in service the HP packet
// waits min(Y, V), plus R when the failure comes first.
inline MomentPair fp_hp_setup(const InterruptionLaw& law, const Distribution& R,
                              const TrafficClass& hp, const Distribution& T2, double pLp,
                              LpRemainder mode) {
  double a = law.alpha;
  double pae1 = p_ae(law, hp.lambda);
  MomentPair rr1 = law.residual(hp.lambda);
  auto [L, L1] = lp_remainder_transform(analytic_form(T2), a, mode);
  MomentPair rm = moments(R);
  double pY = 1.0 - L;
  double min1 = pY / a, min2 = 2.0 / (a * a) * (pY + a * L1), yHit = pY / a + L1;
  MomentPair held{min1 + pY * rm.m1, min2 + 2.0 * yHit * rm.m1 + pY * rm.m2};
  double up = pae1 * pLp;
  return {(1.0 - pae1) * rr1.m1 + up * held.m1, (1.0 - pae1) * rr1.m2 + up * held.m2};
}

struct FpFixedPoint {
  double pLp = 0.0;
  MomentPair setup;
  int iterations = 0;
};

// Damped iteration of P_{L|NH} = 1 - P0 / P_{0,1}(S(P_{L|NH})).
inline FpFixedPoint fp_fixed_point(const InterruptionLaw& law, const Distribution& R,
                                   const TrafficClass& hp, const Distribution& T2, double p0,
                                   double rho1, LpRemainder mode) {
  auto f = [&](double p) {
    MomentPair s = fp_hp_setup(law, R, hp, T2, p, mode);
    double p01 = (1.0 - rho1) / (1.0 + hp.lambda * s.m1);
    return std::clamp(1.0 - p0 / p01, 0.0, 1.0);
  };
  FpFixedPoint fp;
  double p = 1.0 - p0;
  for (int it = 1; it <= 10000; ++it) {
    double next = 0.5 * p + 0.5 * f(p);
    if (std::fabs(next - p) < 1e-10) {
      fp.pLp = next;
      fp.setup = fp_hp_setup(law, R, hp, T2, next, mode);
      fp.iterations = it;
      return fp;
    }
    p = next;
  }
  throw ConvergenceError("FP setup fixed point did not converge in 10^4 iterations");
}

}  // namespace detail

inline DisciplineReport failure_preemptive(const ChannelModel& ch,
                                           const std::vector<TrafficClass>& classes) {
  detail::validate_classes(classes);
  detail::require_two(classes, "failure-preemptive");
  InterruptionLaw law = interruption_law(ch);
  Distribution r = analytic_form(ch.R);
  const TrafficClass& hp = classes[0];
  const TrafficClass& lp = classes[1];
  detail::StartMix m = detail::start_mix(law, classes);
  require_stable(m.rhoB, "failure_preemptive");
  double p0 = detail::empty_probability(m);
  double rho1 = hp.lambda * m.xb[0].m1;

  DisciplineReport non = nonpreemptive(ch, classes);
  DisciplineReport pre = preemptive(ch, classes);

  DisciplineReport rep;
  rep.discipline = Discipline::FP;
  rep.p0 = p0;
  rep.approximate = analytic_form(lp.T).kind() != Distribution::Kind::Exponential;

  auto hp_system_time = [&](const MomentPair& s) {
    return setup_queue_system_time(m.xb[0], s, hp.lambda);
  };
  detail::FpFixedPoint fp =
      detail::fp_fixed_point(law, r, hp, lp.T, p0, rho1, detail::LpRemainder::Equilibrium);
  ClassMetrics h;
  h.xb = h.x = h.xStar = m.xb[0];
  h.d = hp_system_time(fp.setup);
  h.w = h.wStar = h.d - h.xb.m1;

  detail::FpLpCompletion lc = fp_lp_completion(ch, hp, lp.T);
  rep.fpPath = lc.path;
  ClassMetrics l;
  l.xb = m.xb[1];
  l.x = l.xStar = lc.xStar;
  // LP system time from the conservation law referenced to Non.
  double hpWork = hp.lambda * m.t[0].m1, lpWork = lp.lambda * m.t[1].m1;
  l.d = (non.kappaStar - hpWork * (h.d - m.xb[0].m1)) / lpWork + m.xb[1].m1;

  // HP: [Pr, proposed vacation bound with 1 - P0], tightened by Non.
  ClassBounds hb;
  hb.dLow = pre.perClass[0].d;
  hb.dHigh = hp_system_time(
      detail::fp_hp_setup(law, r, hp, lp.T, 1.0 - p0, detail::LpRemainder::Fresh));
  if (hb.dHigh > non.perClass[0].d) {
    hb.looseUpper = true;
    hb.dHigh = non.perClass[0].d;
  }
  // LP: [max(P-K on the FP completion, Non), Pr].
  ClassBounds lb;
  double util = lp.lambda * lc.xStar.m1;
  require_stable(util, "failure_preemptive (LP completion)");
  double pk = lc.xStar.m1 + lp.lambda * lc.xStar.m2 / (2.0 * (1.0 - util));
  lb.dLow = std::max(pk, non.perClass[1].d);
  lb.dHigh = pre.perClass[1].d;
  // Work is only conserved for memoryless T; elsewhere the point can leave the bracket.
  l.d = std::clamp(l.d, lb.dLow, lb.dHigh);
  l.w = l.wStar = l.d - l.xStar.m1;
  rep.perClass = {h, l};
  detail::fill_kappa(rep, classes, law.alpha, law.r);
  rep.bounds = std::vector<ClassBounds>{hb, lb};
  return rep;
}

// Interruptions as a virtual top-priority class (approximate).
struct VirtualPacket {
  MomentPair tv;
  double rate = 0.0;
};

inline VirtualPacket virtual_packet(const ChannelModel& ch) {
  InterruptionLaw law = interruption_law(ch);
  double tv1 = law.r.m1 / (1.0 + law.alpha * law.r.m1);
  double f = 1.0 - law.alpha * tv1;
  return {{tv1, law.r.m2 * f * f * f}, law.alpha};
}

enum class VirtualScheme { Preemptive, Nonpreemptive };

inline DisciplineReport virtual_packet_metrics(const ChannelModel& ch,
                                               const std::vector<TrafficClass>& classes,
                                               VirtualScheme scheme) {
  detail::validate_classes(classes);
  VirtualPacket v = virtual_packet(ch);
  InterruptionLaw law = interruption_law(ch);
  double rhoV = v.rate * v.tv.m1;
  std::vector<MomentPair> t;
  std::vector<double> rho;
  double jAll = 0.5 * v.rate * v.tv.m2;
  for (const auto& c : classes) {
    t.push_back(moments(analytic_form(c.T)));
    rho.push_back(c.lambda * t.back().m1);
    jAll += 0.5 * c.lambda * t.back().m2;
  }
  std::vector<double> sigma{rhoV};
  for (double r : rho) {
    sigma.push_back(sigma.back() + r);
    require_stable(sigma.back(), "virtual_packet_metrics");
  }
  DisciplineReport rep;
  rep.discipline = scheme == VirtualScheme::Preemptive ? Discipline::Pr : Discipline::Non;
  rep.approximate = true;
  double jPartial = 0.5 * v.rate * v.tv.m2;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    jPartial += 0.5 * classes[i].lambda * t[i].m2;
    double den = (1.0 - sigma[i]) * (1.0 - sigma[i + 1]);
    ClassMetrics cm;
    if (scheme == VirtualScheme::Preemptive) {
      cm.w = jPartial / den;
      cm.x.m1 = t[i].m1 / (1.0 - sigma[i]);
    } else {
      cm.w = jAll / den;
      cm.x.m1 = t[i].m1 / (1.0 - rhoV);
    }
    cm.x.m2 = std::numeric_limits<double>::quiet_NaN();
    cm.xb = cm.xStar = cm.x;
    cm.wStar = cm.w;
    cm.d = cm.w + cm.x.m1;
    rep.perClass.push_back(cm);
  }
  rep.p0 = 1.0 - sigma.back();
  detail::fill_kappa(rep, classes, law.alpha, law.r);
  return rep;
}

inline DisciplineReport analyze(Discipline d, const ChannelModel& ch,
                                const std::vector<TrafficClass>& classes) {
  switch (d) {
    case Discipline::Non: return nonpreemptive(ch, classes);
    case Discipline::ENo: return exceptional_nonpreemptive(ch, classes);
    case Discipline::Pr: return preemptive(ch, classes);
    case Discipline::FP: return failure_preemptive(ch, classes);
    case Discipline::Fifo: break;
  }
  throw UnsupportedAnalytic(std::string("no analytic engine for discipline ") + to_string(d));
}

struct ConservationResult {
  std::vector<double> kappaValues;
  std::vector<double> kappaStarValues;
  double maxSpread = 0.0;      // (max - min) / min over kappa
  double maxSpreadStar = 0.0;  // same over kappaStar
};

inline ConservationResult conservation_check(const std::vector<DisciplineReport>& reports) {
  ConservationResult out;
  for (const auto& r : reports) {
    out.kappaValues.push_back(r.kappa);
    out.kappaStarValues.push_back(r.kappaStar);
  }
  auto spread = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo > 0.0 ? (*hi - *lo) / *lo : 0.0;
  };
  out.maxSpread = spread(out.kappaValues);
  out.maxSpreadStar = spread(out.kappaStarValues);
  return out;
}

}  // namespace osaq
