#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <string>

#include "osaq/errors.hpp"
#include "osaq/stochastic.hpp"

namespace osaq {

// Server alternating operating periods Y and recovery periods R.
struct ChannelModel {
  Distribution Y;
  Distribution R;
};

// Exponential-Y interruption process as seen by one class: failure rate,
// recovery moments and the recovery transform. Derived channels (the LP view
// under preemption) are expressed in the same form.
struct InterruptionLaw {
  double alpha = 0.0;
  MomentPair r;
  std::function<double(double)> complement;    // 1 - R^(s)
  std::function<MomentPair(double)> residual;  // R - A | R > A, A ~ Exp(s)
};

// Residual moments from the transform alone.
inline MomentPair residual_from_transform(const MomentPair& r, double c, double s) {
  return {r.m1 / c - 1.0 / s, (r.m2 - 2.0 * r.m1 / s) / c + 2.0 / (s * s)};
}

inline InterruptionLaw make_law(double alpha, MomentPair r,
                                std::function<double(double)> complement) {
  InterruptionLaw law{alpha, r, std::move(complement), {}};
  // The subtraction is ill-conditioned for tiny s; floor it (bias is O(s)).
  law.residual = [r, c = law.complement](double s) {
    s = std::max(s, 1e-4 / r.m1);
    return residual_from_transform(r, c(s), s);
  };
  return law;
}

inline InterruptionLaw interruption_law(const ChannelModel& ch) {
  Distribution y = analytic_form(ch.Y);
  if (y.kind() != Distribution::Kind::Exponential)
    throw UnsupportedAnalytic("analytic engine requires exponential operating periods, got " +
                              ch.Y.describe());
  Distribution r = analytic_form(ch.R);
  InterruptionLaw law;
  law.alpha = y.rate();
  law.r = moments(r);
  law.complement = [r](double s) { return lst_complement(r, s); };
  law.residual = [r](double s) { return overshoot_moments(r, s); };
  return law;
}

// P(server available | system empty) for a general operating-period law.
inline double p_ae(const ChannelModel& ch, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("arrival rate must be > 0");
  Distribution y = analytic_form(ch.Y), r = analytic_form(ch.R);
  double cy = lst_complement(y, lambda), cr = lst_complement(r, lambda);
  return 1.0 - cy * cr / (lambda * y.mean() * (cy + (1.0 - cy) * cr));
}

inline double p_ae(const InterruptionLaw& law, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("arrival rate must be > 0");
  double c = law.complement(lambda);
  return lambda / (lambda + law.alpha * c);
}

struct RenewalMoments {
  double kMean = 0.0;
  double kM2 = 0.0;
  double tkCross = 0.0;  // E[T K]
};

// Failures during a real service time T under Poisson(alpha) failures.
inline RenewalMoments renewal_moments(double alpha, const MomentPair& t) {
  return {alpha * t.m1, alpha * alpha * t.m2 + alpha * t.m1, alpha * t.m2};
}

inline RenewalMoments renewal_moments(const ChannelModel& ch, const Distribution& T) {
  return renewal_moments(interruption_law(ch).alpha, moments(analytic_form(T)));
}

struct CompletionMoments {
  MomentPair xa, xb, xu, xe, x, xStar;
  double kMean = 0.0;
  double kM2 = 0.0;
  double tkCross = 0.0;
  double pae = 1.0;
  MomentPair rr;  // residual recovery seen by an arrival into an empty down server
};

// Service time plus interruptions for a service that starts with the server up.
inline MomentPair completion_from_up(const InterruptionLaw& law, const MomentPair& t) {
  RenewalMoments k = renewal_moments(law.alpha, t);
  double er = law.r.m1;
  return {t.m1 + k.kMean * er,
          t.m2 + 2.0 * k.tkCross * er + k.kMean * law.r.variance() + er * er * k.kM2};
}

inline CompletionMoments completion_moments(const InterruptionLaw& law, const MomentPair& t,
                                            double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("arrival rate must be > 0");
  CompletionMoments cm;
  RenewalMoments k = renewal_moments(law.alpha, t);
  cm.kMean = k.kMean;
  cm.kM2 = k.kM2;
  cm.tkCross = k.tkCross;
  cm.xa = completion_from_up(law, t);
  cm.xb = cm.xa;
  require_stable(lambda * cm.xb.m1, "completion_moments");
  cm.pae = p_ae(law, lambda);
  cm.rr = law.residual(lambda);
  cm.xu = {cm.rr.m1 + cm.xa.m1, cm.rr.m2 + cm.xa.m2 + 2.0 * cm.rr.m1 * cm.xa.m1};
  double pu = 1.0 - cm.pae;
  cm.xe = {cm.pae * cm.xa.m1 + pu * cm.xu.m1, cm.pae * cm.xa.m2 + pu * cm.xu.m2};

  auto aggregate = [&](const MomentPair& xe) {
    double m1 = xe.m1 / (1.0 - lambda * cm.xb.m1 + lambda * xe.m1);
    double rho = lambda * m1;
    return MomentPair{m1, rho * cm.xb.m2 + (1.0 - rho) * xe.m2};
  };
  cm.x = aggregate(cm.xe);
  // Clock started at real service start: the residual recovery drops out.
  MomentPair xeStar = {cm.xa.m1, cm.xa.m2};
  cm.xStar = aggregate(xeStar);
  return cm;
}

inline CompletionMoments completion_moments(const ChannelModel& ch, const Distribution& T,
                                            double lambda) {
  return completion_moments(interruption_law(ch), moments(analytic_form(T)), lambda);
}

struct BusyPeriodMoments {
  MomentPair b;
  MomentPair bb;
};

// Busy period started by a service with moments `first`; inner services `xb`.
inline MomentPair busy_period(const MomentPair& first, const MomentPair& xb, double lambda) {
  double rho = lambda * xb.m1;
  require_stable(rho, "busy period");
  double bb1 = xb.m1 / (1.0 - rho), bb2 = xb.m2 / ((1.0 - rho) * (1.0 - rho) * (1.0 - rho));
  return {first.m1 / (1.0 - rho),
          lambda * bb2 * first.m1 + (1.0 + lambda * bb1) * (1.0 + lambda * bb1) * first.m2};
}

inline BusyPeriodMoments busy_moments(const CompletionMoments& cm, double lambda) {
  return {busy_period(cm.xe, cm.xb, lambda), busy_period(cm.xb, cm.xb, lambda)};
}

struct SingleClassReport {
  CompletionMoments completion;
  BusyPeriodMoments busy;
  double pae = 1.0;
  double w = 0.0;
  double wStar = 0.0;
  double d = 0.0;
  double p0 = 1.0;
  MomentPair setup;
};

// Mean system time of an M/G/1 queue whose busy periods start with a setup S.
inline double setup_queue_system_time(const MomentPair& xb, const MomentPair& s, double lambda) {
  double rho = lambda * xb.m1;
  return xb.m1 + lambda * xb.m2 / (2.0 * (1.0 - rho)) +
         (2.0 * s.m1 + lambda * s.m2) / (2.0 * (1.0 + lambda * s.m1));
}

inline SingleClassReport single_class_report(const InterruptionLaw& law, const MomentPair& t,
                                             double lambda) {
  SingleClassReport rep;
  rep.completion = completion_moments(law, t, lambda);
  const CompletionMoments& cm = rep.completion;
  rep.busy = busy_moments(cm, lambda);
  rep.pae = cm.pae;
  double rho = lambda * cm.xb.m1;
  rep.w = lambda * cm.x.m2 / (2.0 * (1.0 - rho));
  rep.wStar = rep.w + cm.x.m1 - cm.xStar.m1;
  double pu = 1.0 - cm.pae;
  rep.setup = {pu * cm.rr.m1, pu * cm.rr.m2};
  rep.d = setup_queue_system_time(cm.xb, rep.setup, lambda);
  rep.p0 = (1.0 - rho) / (1.0 + lambda * rep.setup.m1);
  return rep;
}

inline SingleClassReport single_class_report(const ChannelModel& ch, const Distribution& T,
                                             double lambda) {
  return single_class_report(interruption_law(ch), moments(analytic_form(T)), lambda);
}

enum class Policy { Buffer, Switch };

inline const char* to_string(Policy p) { return p == Policy::Buffer ? "buffer" : "switch"; }

struct SwitchDecision {
  Policy policy = Policy::Buffer;
  std::optional<double> dBuffer;  // empty when that policy is unstable
  std::optional<double> dSwitch;
};

// Recovery of the switching policy: expected sensing time until a free channel.
inline Distribution switching_recovery(const Distribution& I, const Distribution& U, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("switching time must be > 0");
  return Distribution::geometric_lattice(I.mean() / (I.mean() + U.mean()), tau);
}

inline SwitchDecision switch_vs_buffer(const Distribution& I, const Distribution& U, double tau,
                                       double lambda, const Distribution& T) {
  auto system_time = [&](const Distribution& r) -> std::optional<double> {
    try {
      return single_class_report(ChannelModel{I, r}, T, lambda).d;
    } catch (const SaturatedQueue&) {
      return std::nullopt;
    }
  };
  SwitchDecision out;
  out.dBuffer = system_time(U);
  out.dSwitch = system_time(switching_recovery(I, U, tau));
  if (!out.dBuffer && !out.dSwitch)
    throw SaturatedQueue("switch_vs_buffer: both policies", lambda * T.mean());
  if (!out.dBuffer || (out.dSwitch && *out.dSwitch < *out.dBuffer)) out.policy = Policy::Switch;
  return out;
}

}  // namespace osaq
