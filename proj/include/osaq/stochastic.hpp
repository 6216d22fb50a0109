#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace osaq {

// First and second raw moments.
struct MomentPair {
  double m1 = 0.0;
  double m2 = 0.0;

  double variance() const { return m2 - m1 * m1; }
};

// Law of a nonnegative random variable. All parameters strictly positive.
class Distribution {
 public:
  enum class Kind { Exponential, Deterministic, GeometricLattice };

  static Distribution exponential(double rate) {
    require_positive(rate, "exponential rate");
    return Distribution(Kind::Exponential, rate, 0.0);
  }
  static Distribution exponential_mean(double mean) {
    require_positive(mean, "exponential mean");
    return Distribution(Kind::Exponential, 1.0 / mean, 0.0);
  }
  static Distribution deterministic(double value) {
    require_positive(value, "deterministic value");
    return Distribution(Kind::Deterministic, value, 0.0);
  }
  // Support {slot, 2 slot, ...} with P(k slots) = p (1-p)^(k-1).
  static Distribution geometric_lattice(double success_prob, double slot) {
    require_positive(success_prob, "geometric success probability");
    require_positive(slot, "geometric slot");
    if (success_prob > 1.0)
      throw std::invalid_argument("geometric success probability must be <= 1");
    return Distribution(Kind::GeometricLattice, success_prob, slot);
  }

  Kind kind() const { return kind_; }
  double rate() const { return a_; }          // Exponential
  double value() const { return a_; }         // Deterministic
  double success_prob() const { return a_; }  // GeometricLattice
  double slot() const { return b_; }          // GeometricLattice

  double mean() const {
    switch (kind_) {
      case Kind::Exponential: return 1.0 / a_;
      case Kind::Deterministic: return a_;
      case Kind::GeometricLattice: return b_ / a_;
    }
    return 0.0;
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(12);
    switch (kind_) {
      case Kind::Exponential: os << "Exp(" << 1.0 / a_ << ")"; break;
      case Kind::Deterministic: os << "Det(" << a_ << ")"; break;
      case Kind::GeometricLattice: os << "Geo(" << a_ << "," << b_ << ")"; break;
    }
    return os.str();
  }

  bool operator==(const Distribution&) const = default;

 private:
  Distribution(Kind k, double a, double b) : kind_(k), a_(a), b_(b) {}

  static void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string(what) + " must be finite and > 0");
  }

  Kind kind_;
  double a_;
  double b_;
};

inline MomentPair moments(const Distribution& d) {
  switch (d.kind()) {
    case Distribution::Kind::Exponential: {
      double m = 1.0 / d.rate();
      return {m, 2.0 * m * m};
    }
    case Distribution::Kind::Deterministic:
      return {d.value(), d.value() * d.value()};
    case Distribution::Kind::GeometricLattice: {
      double p = d.success_prob(), t = d.slot();
      return {t / p, t * t * (2.0 - p) / (p * p)};
    }
  }
  return {};
}

// Same family with every time scaled by f (the success probability is kept).
inline Distribution scaled(const Distribution& d, double f) {
  switch (d.kind()) {
    case Distribution::Kind::Exponential: return Distribution::exponential_mean(d.mean() * f);
    case Distribution::Kind::Deterministic: return Distribution::deterministic(d.value() * f);
    case Distribution::Kind::GeometricLattice:
      return Distribution::geometric_lattice(d.success_prob(), d.slot() * f);
  }
  return d;
}

inline Distribution with_mean(const Distribution& d, double mean) {
  return scaled(d, mean / d.mean());
}

// Geometric laws enter the analytic engine as an exponential of equal mean.
inline Distribution analytic_form(const Distribution& d) {
  if (d.kind() == Distribution::Kind::GeometricLattice)
    return Distribution::exponential_mean(d.mean());
  return d;
}

namespace detail {

inline void require_nonneg_rate(double s) {
  if (!(s >= 0.0) || !std::isfinite(s))
    throw std::invalid_argument("transform argument must be finite and >= 0");
}

// P(N >= n) for N ~ Poisson(x), n in {1, 2, 3}; stable for small x.
inline double poisson_tail(double x, int n) {
  if (x < 1.0) {
    double term = 1.0;
    for (int k = 1; k <= n; ++k) term *= x / k;
    double sum = 0.0;
    int k = n;
    do {
      sum += term;
      term *= x / ++k;
    } while (term > 1e-18 * sum);
    return std::exp(-x) * sum;
  }
  double head = 0.0, term = 1.0;
  for (int k = 0; k < n; ++k) {
    head += term;
    term *= x / (k + 1);
  }
  return 1.0 - std::exp(-x) * head;
}

}  // namespace detail

inline double lst(const Distribution& d, double s) {
  detail::require_nonneg_rate(s);
  switch (d.kind()) {
    case Distribution::Kind::Exponential: return d.rate() / (d.rate() + s);
    case Distribution::Kind::Deterministic: return std::exp(-s * d.value());
    case Distribution::Kind::GeometricLattice: {
      double p = d.success_prob(), q = std::exp(-s * d.slot());
      return p * q / (1.0 - (1.0 - p) * q);
    }
  }
  return 1.0;
}

// 1 - lst(d, s) without cancellation at small s.
inline double lst_complement(const Distribution& d, double s) {
  detail::require_nonneg_rate(s);
  switch (d.kind()) {
    case Distribution::Kind::Exponential: return s / (d.rate() + s);
    case Distribution::Kind::Deterministic: return -std::expm1(-s * d.value());
    case Distribution::Kind::GeometricLattice: {
      double p = d.success_prob(), q = std::exp(-s * d.slot());
      return -std::expm1(-s * d.slot()) / (1.0 - (1.0 - p) * q);
    }
  }
  return 0.0;
}

inline double lst_deriv(const Distribution& d, double s, int order) {
  detail::require_nonneg_rate(s);
  if (order != 1 && order != 2)
    throw std::invalid_argument("lst_deriv supports order 1 or 2");
  switch (d.kind()) {
    case Distribution::Kind::Exponential: {
      double b = d.rate(), u = b + s;
      return order == 1 ? -b / (u * u) : 2.0 * b / (u * u * u);
    }
    case Distribution::Kind::Deterministic: {
      double c = d.value(), e = std::exp(-s * c);
      return order == 1 ? -c * e : c * c * e;
    }
    case Distribution::Kind::GeometricLattice: {
      double p = d.success_prob(), t = d.slot(), q = std::exp(-s * t);
      double den = 1.0 - (1.0 - p) * q;
      double f1 = p / (den * den);
      if (order == 1) return -f1 * t * q;
      double f2 = 2.0 * p * (1.0 - p) / (den * den * den);
      return f2 * t * t * q * q + f1 * t * t * q;
    }
  }
  return 0.0;
}

// Outcome of racing V against an independent clock U ~ Exp(alpha).
struct ClockRace {
  double p_below = 0.0;    // Pr(V < U)
  MomentPair below;        // V | V < U
  MomentPair clock;        // U | U < V
  MomentPair overshoot;    // V - U | U < V
  double cross = 0.0;      // E[U (V - U) | U < V]
};

namespace detail {

// From the transform and its derivatives at alpha; valid for any law.
inline ClockRace race_from_lst(const Distribution& v, double a) {
  double L = lst(v, a), L1 = lst_deriv(v, a, 1), L2 = lst_deriv(v, a, 2);
  double C = lst_complement(v, a);
  MomentPair mv = moments(v);
  ClockRace r;
  r.p_below = L;
  r.below = {-L1 / L, L2 / L};
  double eu = C / a + L1;
  double eu2 = 2.0 / (a * a) * (C + a * L1) - L2;
  double euv = (mv.m1 + L1) / a - L2;
  r.clock = {eu / C, eu2 / C};
  r.overshoot = {mv.m1 / C - 1.0 / a, (mv.m2 - 2.0 * mv.m1 / a) / C + 2.0 / (a * a)};
  r.cross = (euv - eu2) / C;
  return r;
}

}  // namespace detail

inline ClockRace race(const Distribution& v, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("clock rate must be finite and > 0");
  switch (v.kind()) {
    case Distribution::Kind::Exponential: {
      double b = v.rate(), u = alpha + b;
      ClockRace r;
      r.p_below = b / u;
      r.below = {1.0 / u, 2.0 / (u * u)};
      r.clock = r.below;
      r.overshoot = {1.0 / b, 2.0 / (b * b)};
      r.cross = 1.0 / (u * b);
      return r;
    }
    case Distribution::Kind::Deterministic: {
      // U given U < c is exponential truncated to [0, c].
      double c = v.value(), x = alpha * c;
      double q1 = detail::poisson_tail(x, 1);
      double eu = detail::poisson_tail(x, 2) / (alpha * q1);
      double eu2 = 2.0 * detail::poisson_tail(x, 3) / (alpha * alpha * q1);
      ClockRace r;
      r.p_below = std::exp(-x);
      r.below = {c, c * c};
      r.clock = {eu, eu2};
      r.overshoot = {c - eu, c * c - 2.0 * c * eu + eu2};
      r.cross = c * eu - eu2;
      return r;
    }
    case Distribution::Kind::GeometricLattice:
      return detail::race_from_lst(v, alpha);
  }
  return {};
}

// V | V < U with U ~ Exp(alpha).
inline MomentPair cond_below_moments(const Distribution& v, double alpha) {
  return race(v, alpha).below;
}

// V - U | V > U with U ~ Exp(alpha).
inline MomentPair overshoot_moments(const Distribution& v, double alpha) {
  return race(v, alpha).overshoot;
}

// Variate generator bound to one law; draws from a caller-owned engine.
class Sampler {
 public:
  explicit Sampler(const Distribution& d)
      : kind_(d.kind()),
        value_(d.kind() == Distribution::Kind::Deterministic ? d.value() : 0.0),
        slot_(d.kind() == Distribution::Kind::GeometricLattice ? d.slot() : 0.0),
        exp_(d.kind() == Distribution::Kind::Exponential ? d.rate() : 1.0),
        geo_(d.kind() == Distribution::Kind::GeometricLattice && d.success_prob() < 1.0
                 ? d.success_prob()
                 : 0.5),
        geo_certain_(d.kind() == Distribution::Kind::GeometricLattice &&
                     d.success_prob() >= 1.0) {}

  template <class URBG>
  double operator()(URBG& g) {
    switch (kind_) {
      case Distribution::Kind::Exponential: return exp_(g);
      case Distribution::Kind::Deterministic: return value_;
      case Distribution::Kind::GeometricLattice:
        if (geo_certain_) return slot_;
        return slot_ * static_cast<double>(geo_(g) + 1);
    }
    return 0.0;
  }

 private:
  Distribution::Kind kind_;
  double value_;
  double slot_;
  std::exponential_distribution<double> exp_;
  std::geometric_distribution<std::int64_t> geo_;
  bool geo_certain_;
};

template <class URBG>
double sample(const Distribution& d, URBG& g) {
  Sampler s(d);
  return s(g);
}

}  // namespace osaq
