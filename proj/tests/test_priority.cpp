#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "osaq/priority.hpp"

using namespace osaq;

namespace {

Distribution E(double mean) { return Distribution::exponential_mean(mean); }
Distribution D(double v) { return Distribution::deterministic(v); }

double rel(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

// Textbook priority M/G/1 (Cobham; preemptive-resume).
std::vector<double> cobham(const std::vector<TrafficClass>& cl, bool preemptive) {
  std::vector<double> out;
  double sigma = 0.0, w0All = 0.0;
  for (const auto& c : cl) w0All += 0.5 * c.lambda * moments(c.T).m2;
  double w0Part = 0.0;
  for (const auto& c : cl) {
    MomentPair t = moments(c.T);
    double prev = sigma;
    sigma += c.lambda * t.m1;
    w0Part += 0.5 * c.lambda * t.m2;
    if (preemptive)
      out.push_back(t.m1 / (1 - prev) + w0Part / ((1 - prev) * (1 - sigma)));
    else
      out.push_back(t.m1 + w0All / ((1 - prev) * (1 - sigma)));
  }
  return out;
}

struct GridPoint {
  ChannelModel ch;
  std::vector<TrafficClass> classes;
  std::string label;
};

std::vector<GridPoint> grid() {
  std::vector<GridPoint> g;
  for (bool dynamic : {false, true})
    for (bool tDet : {false, true})
      for (bool rDet : {false, true})
        for (double l2 : {0.02, 0.05, 0.08}) {
          double ey = dynamic ? 1.0 : 75.0, er = dynamic ? 0.2 : 15.0;
          GridPoint p{{E(ey), rDet ? D(er) : E(er)},
                      {{0.03, tDet ? D(3) : E(3)}, {l2, tDet ? D(5) : E(5)}},
                      std::string(dynamic ? "dynamic " : "static ") + (tDet ? "Det" : "Exp") +
                          (rDet ? "Det" : "Exp") + " l2=" + std::to_string(l2)};
          g.push_back(p);
        }
  return g;
}

}  // namespace

TEST(Nonpreemptive, SingleClassMatchesInterruptionCore) {
  for (const auto& ch : {ChannelModel{E(75), E(15)}, ChannelModel{E(1), D(0.2)}}) {
    DisciplineReport r = nonpreemptive(ch, {{0.08, E(5)}});
    SingleClassReport s = single_class_report(ch, E(5), 0.08);
    EXPECT_LT(rel(r.perClass[0].d, s.d), 1e-12);
    EXPECT_LT(rel(r.perClass[0].w, s.w), 1e-12);
    EXPECT_LT(rel(r.p0, s.p0), 1e-12);
  }
}

TEST(Nonpreemptive, NoInterruptionsGiveCobham) {
  std::vector<TrafficClass> cl{{0.03, E(3)}, {0.05, D(5)}, {0.02, E(2)}};
  ChannelModel quiet{E(1e15), E(15)};
  DisciplineReport r = nonpreemptive(quiet, cl);
  std::vector<double> ref = cobham(cl, false);
  DisciplineReport c = classical_priority(cl, Discipline::Non);
  for (std::size_t i = 0; i < cl.size(); ++i) {
    EXPECT_LT(rel(r.perClass[i].d, ref[i]), 1e-9);
    EXPECT_LT(rel(c.perClass[i].d, ref[i]), 1e-12);
  }
}

TEST(Nonpreemptive, LinearSystemAndClosedFormAgree) {
  for (const auto& p : grid()) {
    DisciplineReport r = nonpreemptive(p.ch, p.classes);
    for (const auto& c : r.perClass) {
      EXPECT_LT(rel(c.d, c.dSecondRoute), 1e-9) << p.label;
      EXPECT_LT(rel(c.w + c.x.m1, c.d), 1e-12) << p.label;
    }
  }
  std::vector<TrafficClass> three{{0.02, E(3)}, {0.03, D(4)}, {0.01, E(6)}};
  for (const auto& c : nonpreemptive(ChannelModel{E(75), D(15)}, three).perClass)
    EXPECT_LT(rel(c.d, c.dSecondRoute), 1e-9);
}

TEST(Nonpreemptive, InstabilityNamesThePartialSum) {
  try {
    nonpreemptive(ChannelModel{E(75), E(15)}, {{0.03, E(3)}, {0.2, E(5)}});
    FAIL();
  } catch (const SaturatedQueue& e) {
    EXPECT_NE(std::string(e.what()).find("classes 1..2"), std::string::npos) << e.what();
  }
}

TEST(Exceptional, CoincidesWithNonWithoutRecovery) {
  std::vector<TrafficClass> cl{{0.03, E(3)}, {0.05, D(5)}};
  ChannelModel ch{E(75), D(1e-12)};
  DisciplineReport e = exceptional_nonpreemptive(ch, cl), n = nonpreemptive(ch, cl);
  for (int i = 0; i < 2; ++i) EXPECT_LT(rel(e.perClass[i].d, n.perClass[i].d), 1e-9);
}

TEST(Exceptional, HpGainsLpLoses) {
  for (const auto& p : grid()) {
    DisciplineReport e = exceptional_nonpreemptive(p.ch, p.classes), n = nonpreemptive(p.ch, p.classes);
    EXPECT_LE(e.perClass[0].d, n.perClass[0].d + 1e-9) << p.label;
    EXPECT_GE(e.perClass[1].d, n.perClass[1].d - 1e-9) << p.label;
    EXPECT_NEAR(e.p0, n.p0, 1e-12);
  }
}

TEST(Preemptive, HpIsSingleClass) {
  ChannelModel ch{E(75), E(15)};
  DisciplineReport r = preemptive(ch, {{0.03, E(3)}, {0.05, E(5)}});
  EXPECT_LT(rel(r.perClass[0].d, single_class_report(ch, E(3), 0.03).d), 1e-12);
}

TEST(Preemptive, NoInterruptionsGiveClassicalResume) {
  for (bool det : {false, true}) {
    std::vector<TrafficClass> cl{{0.03, det ? D(3) : E(3)}, {0.05, det ? D(5) : E(5)}};
    DisciplineReport r = preemptive(ChannelModel{E(1e15), E(15)}, cl);
    std::vector<double> ref = cobham(cl, true);
    DisciplineReport c = classical_priority(cl, Discipline::Pr);
    for (int i = 0; i < 2; ++i) {
      EXPECT_LT(rel(r.perClass[i].d, ref[i]), 1e-9) << i;
      EXPECT_LT(rel(c.perClass[i].d, ref[i]), 1e-12);
    }
  }
}

TEST(Preemptive, LightLpTrafficLimit) {
  ChannelModel ch{E(75), E(15)};
  TrafficClass hp{0.03, E(3)};
  InterruptionLaw law = lp_interruption_law(ch, hp);
  double l = 1e-9;
  DisciplineReport r = preemptive(ch, {hp, {l, D(5)}});
  CompletionMoments cm = completion_moments(law, {5, 25}, l);
  EXPECT_NEAR(r.perClass[1].d, cm.xb.m1 + (1 - cm.pae) * cm.rr.m1, 1e-3);
  // Hand value from the LP view: xb = 5 (1 + alpha2 E[R2]) plus the equilibrium residual.
  EXPECT_NEAR(r.perClass[1].d, 10.3571, 2e-3);
}

TEST(Preemptive, RequiresExactlyTwoClasses) {
  std::vector<TrafficClass> three{{0.01, E(3)}, {0.01, E(3)}, {0.01, E(3)}};
  EXPECT_THROW(preemptive(ChannelModel{E(75), E(15)}, three), UnsupportedAnalytic);
  EXPECT_THROW(failure_preemptive(ChannelModel{E(75), E(15)}, three), UnsupportedAnalytic);
  EXPECT_NO_THROW(nonpreemptive(ChannelModel{E(75), E(15)}, three));
  EXPECT_NO_THROW(exceptional_nonpreemptive(ChannelModel{E(75), E(15)}, three));
}

TEST(LpChannelView, NoHpTrafficLeavesRawChannel) {
  for (const auto& r : {E(15), D(15)}) {
    LpChannelView v = lp_channel_view(ChannelModel{E(75), r}, {1e-10, E(3)});
    EXPECT_NEAR(v.y2.m1, 75.0, 1e-6);
    EXPECT_NEAR(v.r2.m1, r.mean(), 1e-6);
    EXPECT_NEAR(v.r2.m2, moments(r).m2, 1e-4);
  }
}

TEST(LpChannelView, NoFailuresLeavesHpBusyPeriods) {
  TrafficClass hp{0.05, E(3)};
  LpChannelView v = lp_channel_view(ChannelModel{E(1e14), E(15)}, hp);
  double rho = 0.15;
  EXPECT_NEAR(v.r2.m1, 3.0 / (1 - rho), 1e-9);
  EXPECT_NEAR(v.r2.m2, 18.0 / std::pow(1 - rho, 3), 1e-8);
  EXPECT_NEAR(v.y2.m1, 20.0, 1e-9);
}

TEST(LpChannelView, TransformDerivativesMatchMoments) {
  // 1 - R2^(s) = s E[R2] - s^2 E[R2^2] / 2 + ...; Richardson on two step sizes.
  for (const auto& ch : {ChannelModel{E(75), E(15)}, ChannelModel{E(75), D(15)},
                         ChannelModel{E(1), E(0.2)}, ChannelModel{E(1), D(0.2)}})
    for (const auto& t1 : {E(3), D(3)}) {
      TrafficClass hp{0.03, t1};
      InterruptionLaw law = lp_interruption_law(ch, hp);
      double h = 1e-4 / law.r.m1;
      auto m1 = [&](double s) { return law.complement(s) / s; };
      auto m2 = [&](double s) { return 2.0 * (s * law.r.m1 - law.complement(s)) / (s * s); };
      double e1 = 2 * m1(h / 2) - m1(h), e2 = 2 * m2(h / 2) - m2(h);
      EXPECT_LT(rel(e1, law.r.m1), 1e-5) << ch.R.describe() << " " << t1.describe();
      EXPECT_LT(rel(e2, law.r.m2), 1e-3) << ch.R.describe() << " " << t1.describe();
    }
}

TEST(LpChannelView, HpBusyTransformFixedPoint) {
  // B^(s) = Xb^(s + lambda (1 - B^(s))) with mean Xb/(1 - rho).
  detail::PreemptiveLpTransform tr{E(15), E(3), 1.0 / 75, 0.03};
  double s = 1e-6, b = tr.bb1_lst(s);
  double xb = 3 * (1 + 15.0 / 75);
  EXPECT_NEAR((1 - b) / s, xb / (1 - 0.03 * xb), 1e-3);
  EXPECT_NEAR(b, tr.xb1_lst(s + 0.03 * (1 - b)), 1e-15);
}

TEST(Ordering, AnalyticOnGrid) {
  for (const auto& p : grid()) {
    double pr[2], fp[2], en[2], nn[2];
    DisciplineReport a = preemptive(p.ch, p.classes), b = failure_preemptive(p.ch, p.classes),
                     c = exceptional_nonpreemptive(p.ch, p.classes), d = nonpreemptive(p.ch, p.classes);
    for (int i = 0; i < 2; ++i) {
      pr[i] = a.perClass[i].d;
      fp[i] = b.perClass[i].d;
      en[i] = c.perClass[i].d;
      nn[i] = d.perClass[i].d;
    }
    EXPECT_LE(pr[0], fp[0] + 1e-9) << p.label;
    EXPECT_LE(fp[0], en[0] + 1e-9) << p.label;
    EXPECT_LE(en[0], nn[0] + 1e-9) << p.label;
    EXPECT_GE(pr[1], fp[1] - 1e-9) << p.label;
    EXPECT_GE(fp[1], en[1] - 1e-9) << p.label;
    EXPECT_GE(en[1], nn[1] - 1e-9) << p.label;
  }
}

TEST(Conservation, ExactForMemorylessService) {
  for (const auto& p : grid()) {
    if (p.classes[0].T.kind() != Distribution::Kind::Exponential) continue;
    ConservationResult c = conservation_check({nonpreemptive(p.ch, p.classes),
                                               exceptional_nonpreemptive(p.ch, p.classes),
                                               preemptive(p.ch, p.classes)});
    EXPECT_LT(c.maxSpreadStar, 1e-6) << p.label;
    EXPECT_GT(c.maxSpread, 0.0);  // own waiting times carry discipline-specific setups
  }
}

TEST(Conservation, SingleEffectiveClass) {
  ChannelModel ch{E(75), E(15)};
  std::vector<TrafficClass> cl{{0.03, D(3)}, {1e-12, D(5)}};
  ConservationResult c = conservation_check(
      {nonpreemptive(ch, cl), exceptional_nonpreemptive(ch, cl), preemptive(ch, cl)});
  EXPECT_LT(c.maxSpreadStar, 1e-9);
}

TEST(Conservation, DeterministicServiceBreaksIt) {
  // Preemptive resume conserves waiting only under memoryless service.
  GridPoint p{{E(75), E(15)}, {{0.03, D(3)}, {0.05, D(5)}}, "DetExp"};
  ConservationResult c = conservation_check({nonpreemptive(p.ch, p.classes),
                                             preemptive(p.ch, p.classes)});
  EXPECT_GT(c.maxSpreadStar, 0.01);
}

TEST(FailurePreemptive, CompletionRegression) {
  // Frozen outputs of the LP completion path.
  struct Cell { double ey, er; bool rDet; double l1, m1, m2; FpPath path; };
  const Cell cells[] = {
      {1, 0.2, false, 0.03, 6.7265, 49.514, FpPath::Small},
      {1, 0.2, false, 0.05, 7.3171, 62.334, FpPath::Small},
      {75, 15, false, 0.03, 6.1211, 75.620, FpPath::Large},
      {75, 15, false, 0.05, 6.2461, 86.752, FpPath::Large},
      {1, 0.2, true, 0.03, 6.7265, 49.232, FpPath::Small},
      {1, 0.2, true, 0.05, 7.3171, 61.971, FpPath::Small},
      {75, 15, true, 0.03, 6.1211, 56.900, FpPath::Large},
      {75, 15, true, 0.05, 6.2461, 64.135, FpPath::Large},
  };
  for (const auto& c : cells) {
    ChannelModel ch{E(c.ey), c.rDet ? D(c.er) : E(c.er)};
    detail::FpLpCompletion x = fp_lp_completion(ch, {c.l1, D(3)}, D(5));
    EXPECT_NEAR(x.xStar.m1, c.m1, 5e-5);
    EXPECT_NEAR(x.xStar.m2, c.m2, 5e-4);
    EXPECT_EQ(x.path, c.path);
  }
}

TEST(FailurePreemptive, CompletionBetweenNonAndPr) {
  for (const auto& p : grid()) {
    InterruptionLaw law = interruption_law(p.ch);
    MomentPair t = moments(analytic_form(p.classes[1].T));
    double lo = completion_from_up(law, t).m1;
    double hi = completion_from_up(lp_interruption_law(p.ch, p.classes[0]), t).m1;
    double x = fp_lp_completion(p.ch, p.classes[0], p.classes[1].T).xStar.m1;
    EXPECT_GE(x, lo - 1e-9) << p.label;
    EXPECT_LE(x, hi + 1e-9) << p.label;
  }
}

TEST(FailurePreemptive, NoHpTrafficGivesRawCompletion) {
  // Without HP packets every restart sees the bare channel.
  for (const auto& ch : {ChannelModel{E(75), E(15)}, ChannelModel{E(1), D(0.2)}})
    for (const auto& t2 : {E(5), D(5)}) {
      detail::FpLpCompletion x = fp_lp_completion(ch, {1e-12, E(3)}, t2);
      MomentPair ref = completion_from_up(interruption_law(ch), moments(t2));
      if (t2.kind() == Distribution::Kind::Exponential || x.path == FpPath::Small) {
        EXPECT_LT(rel(x.xStar.m1, ref.m1), 1e-9) << ch.R.describe() << " " << to_string(x.path);
        EXPECT_LT(rel(x.xStar.m2, ref.m2), 1e-8) << ch.R.describe() << " " << to_string(x.path);
      }
    }
}

TEST(FailurePreemptive, FixedPointConverges) {
  ChannelModel ch{E(75), E(15)};
  InterruptionLaw law = interruption_law(ch);
  TrafficClass hp{0.03, E(3)};
  std::vector<TrafficClass> cl{hp, {0.05, E(5)}};
  detail::StartMix m = detail::start_mix(law, cl);
  double p0 = detail::empty_probability(m), rho1 = 0.03 * m.xb[0].m1;
  for (auto mode : {detail::LpRemainder::Fresh, detail::LpRemainder::Equilibrium}) {
    detail::FpFixedPoint fp = detail::fp_fixed_point(law, E(15), hp, E(5), p0, rho1, mode);
    EXPECT_GE(fp.pLp, 0.0);
    EXPECT_LE(fp.pLp, 1.0);
    EXPECT_LT(fp.iterations, 10000);
    MomentPair s = detail::fp_hp_setup(law, E(15), hp, E(5), fp.pLp, mode);
    double p01 = (1 - rho1) / (1 + 0.03 * s.m1);
    EXPECT_NEAR(fp.pLp, 1 - p0 / p01, 1e-9);
  }
}

TEST(FailurePreemptive, BoundsBracketThePoint) {
  for (const auto& p : grid()) {
    DisciplineReport r = failure_preemptive(p.ch, p.classes);
    ASSERT_TRUE(r.bounds.has_value());
    DisciplineReport pr = preemptive(p.ch, p.classes), non = nonpreemptive(p.ch, p.classes);
    const auto& b = *r.bounds;
    EXPECT_NEAR(b[0].dLow, pr.perClass[0].d, 1e-12);
    EXPECT_LE(b[0].dHigh, non.perClass[0].d + 1e-12);
    EXPECT_NEAR(b[1].dHigh, pr.perClass[1].d, 1e-12);
    EXPECT_GE(b[1].dLow, non.perClass[1].d - 1e-12);
    for (int i = 0; i < 2; ++i) {
      EXPECT_LE(b[i].dLow, r.perClass[i].d + 1e-9) << p.label;
      EXPECT_GE(b[i].dHigh, r.perClass[i].d - 1e-9) << p.label;
    }
    EXPECT_EQ(r.approximate, p.classes[1].T.kind() != Distribution::Kind::Exponential);
  }
}

TEST(VirtualPacket, StaticMoments) {
  VirtualPacket v = virtual_packet(ChannelModel{E(75), E(15)});
  EXPECT_NEAR(v.tv.m1, 12.5, 1e-12);
  EXPECT_NEAR(v.tv.m2, 450 * std::pow(1 - 12.5 / 75, 3), 1e-9);
  EXPECT_NEAR(v.tv.m2, 260.42, 5e-3);
}

TEST(VirtualPacket, CloseToExactForExponentialRecovery) {
  for (bool dynamic : {false, true}) {
    ChannelModel ch = dynamic ? ChannelModel{E(1), E(0.2)} : ChannelModel{E(75), E(15)};
    std::vector<TrafficClass> cl{{0.03, E(3)}, {0.05, E(5)}};
    DisciplineReport vp = virtual_packet_metrics(ch, cl, VirtualScheme::Preemptive);
    DisciplineReport ex = preemptive(ch, cl);
    EXPECT_TRUE(vp.approximate);
    for (int i = 0; i < 2; ++i) EXPECT_LT(rel(vp.perClass[i].d, ex.perClass[i].d), 0.05) << i;
  }
}

TEST(VirtualPacket, PreemptiveSchemeIsExact) {
  // The virtual class's busy periods carry exactly E[R] and E[R^2], which is
  // all a preemptive-resume class below it can see.
  for (const auto& p : grid()) {
    DisciplineReport v = virtual_packet_metrics(p.ch, p.classes, VirtualScheme::Preemptive);
    DisciplineReport ex = preemptive(p.ch, p.classes);
    for (int i = 0; i < 2; ++i) EXPECT_LT(rel(v.perClass[i].d, ex.perClass[i].d), 1e-9) << p.label << i;
  }
}
