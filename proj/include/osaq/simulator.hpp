#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "osaq/interruption.hpp"
#include "osaq/priority.hpp"
#include "osaq/stochastic.hpp"

namespace osaq {

// Event log entry for tests and debugging.
struct TraceEvent {
  enum Kind { Arrival, Serve, Depart, Fail, Recover } kind;
  double t;
  int cls;  // -1 for channel events
};

struct SimConfig {
  ChannelModel channel{Distribution::exponential_mean(75.0), Distribution::exponential_mean(15.0)};
  std::vector<TrafficClass> classes;
  Discipline discipline = Discipline::Non;
  std::uint64_t horizonPackets = 100000;
  std::uint64_t warmupPackets = 10000;
  int replications = 30;
  std::uint64_t baseSeed = 1;
  std::size_t maxQueue = 1000000;
  // Fixed arrival instants per class; replaces the Poisson streams when set.
  std::optional<std::vector<std::vector<double>>> scriptedArrivals;
  // Fixed service times per class (consumed in arrival order) when set.
  std::optional<std::vector<std::vector<double>>> scriptedServices;
  std::function<void(const TraceEvent&)> trace;
};

// Queue grew past maxQueue: the configuration is most likely unstable.
class SimulationAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ArrivalCase { kCaseA = 0, kCaseB = 1, kCaseU = 2 };

// Sums of one tallied quantity.
struct Tally {
  std::uint64_t n = 0;
  double s1 = 0.0;
  double s2 = 0.0;

  void add(double v) {
    ++n;
    s1 += v;
    s2 += v * v;
  }
  MomentPair moments() const {
    if (n == 0) return {std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN()};
    return {s1 / n, s2 / n};
  }
  double mean() const { return moments().m1; }
};

struct ClassTallies {
  Tally d, w, wStar, x, xStar;
  std::array<Tally, 3> xByCase;  // X split by arrival case a/b/u
  Tally realService;             // service actually delivered, for work accounting
  double maxWorkError = 0.0;     // max |delivered - sampled T|
};

// One replication's raw output.
struct ReplicationStats {
  std::uint64_t seed = 0;
  std::vector<ClassTallies> perClass;
  double p0 = 0.0;             // time-average empty fraction after warmup
  double pae = 0.0;            // available fraction at arrivals to an empty system
  std::uint64_t emptyArrivals = 0;
  Tally busy;                  // all busy periods
  std::array<Tally, 3> busyByCase;  // by the case of the opening arrival
  Tally lpInterruption;        // pauses of the lowest class after its real start
  double measuredTime = 0.0;
};

namespace detail {

struct Packet {
  double arrival = 0.0;
  double service = 0.0;
  double remaining = 0.0;
  double selectedAt = -1.0;
  double startedAt = -1.0;
  ArrivalCase arrivalCase = kCaseA;
};

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  return std::mt19937_64(seq);
}

class Replication {
 public:
  Replication(const SimConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        n_(cfg.classes.size()),
        channelRng_(make_stream(seed, 0)),
        ySampler_(cfg.channel.Y),
        rSampler_(cfg.channel.R),
        queues_(n_),
        nextArrival_(n_, kInf),
        scriptPos_(n_, 0),
        servicePos_(n_, 0) {
    if (n_ == 0) throw std::invalid_argument("simulation needs at least one class");
    if (cfg.horizonPackets <= cfg.warmupPackets)
      throw std::invalid_argument("horizonPackets must exceed warmupPackets");
    for (std::size_t i = 0; i < n_; ++i) {
      arrivalRng_.push_back(make_stream(seed, 1 + 2 * i));
      serviceRng_.push_back(make_stream(seed, 2 + 2 * i));
      interarrival_.emplace_back(cfg.classes[i].lambda);
      serviceSampler_.emplace_back(cfg.classes[i].T);
    }
    stats_.seed = seed;
    stats_.perClass.resize(n_);
  }

  ReplicationStats run() {
    nextChannel_ = ySampler_(channelRng_);
    for (std::size_t i = 0; i < n_; ++i) schedule_arrival(i);
    measuring_ = cfg_.warmupPackets == 0;
    while (departures_ < cfg_.horizonPackets) {
      double tArr = kInf;
      std::size_t cls = 0;
      for (std::size_t i = 0; i < n_; ++i)
        if (nextArrival_[i] < tArr) {
          tArr = nextArrival_[i];
          cls = i;
        }
      double tComp = serving() ? now_ + queues_[sel_].front().remaining : kInf;
      if (tComp == kInf && tArr == kInf && total_ == 0) break;  // script exhausted
      // Tie order: completion, then channel transition, then arrival.
      if (tComp <= nextChannel_ && tComp <= tArr) {
        advance(tComp);
        on_completion();
      } else if (nextChannel_ <= tArr) {
        advance(nextChannel_);
        on_channel();
      } else {
        advance(tArr);
        on_arrival(cls);
      }
      track_lowest_class();
    }
    double span = now_ - measureStart_;
    stats_.measuredTime = span;
    stats_.p0 = span > 0.0 ? emptyTime_ / span : std::numeric_limits<double>::quiet_NaN();
    stats_.pae = stats_.emptyArrivals > 0
                     ? static_cast<double>(emptyUp_) / static_cast<double>(stats_.emptyArrivals)
                     : std::numeric_limits<double>::quiet_NaN();
    return stats_;
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  bool serving() const { return up_ && sel_ >= 0; }

  void emit(TraceEvent::Kind k, int cls) {
    if (cfg_.trace) cfg_.trace(TraceEvent{k, now_, cls});
  }

  void schedule_arrival(std::size_t i) {
    if (cfg_.scriptedArrivals) {
      const auto& times = (*cfg_.scriptedArrivals)[i];
      nextArrival_[i] = scriptPos_[i] < times.size() ? times[scriptPos_[i]++] : kInf;
    } else {
      nextArrival_[i] = now_ + interarrival_[i](arrivalRng_[i]);
    }
  }

  double draw_service(std::size_t i) {
    if (cfg_.scriptedServices) return (*cfg_.scriptedServices)[i].at(servicePos_[i]++);
    return serviceSampler_[i](serviceRng_[i]);
  }

  void advance(double t) {
    double dt = t - now_;
    if (serving()) queues_[sel_].front().remaining -= dt;
    if (measuring_ && total_ == 0) emptyTime_ += dt;
    now_ = t;
  }

  int best_class() const {
    if (cfg_.discipline == Discipline::Fifo) {
      int best = -1;
      double first = kInf;
      for (std::size_t i = 0; i < n_; ++i)
        if (!queues_[i].empty() && queues_[i].front().arrival < first) {
          first = queues_[i].front().arrival;
          best = static_cast<int>(i);
        }
      return best;
    }
    for (std::size_t i = 0; i < n_; ++i)
      if (!queues_[i].empty()) return static_cast<int>(i);
    return -1;
  }

  void select(int cls) {
    bool was = serving();
    int prev = sel_;
    sel_ = cls;
    if (sel_ < 0) return;
    Packet& p = queues_[sel_].front();
    if (p.selectedAt < 0.0) p.selectedAt = now_;
    if (up_ && p.startedAt < 0.0) p.startedAt = now_;
    if (up_ && (!was || prev != sel_)) emit(TraceEvent::Serve, sel_);
  }

  bool commits_while_down() const {
    return cfg_.discipline == Discipline::Non || cfg_.discipline == Discipline::Fifo;
  }

  void on_arrival(std::size_t cls) {
    Packet p;
    p.arrival = now_;
    p.service = p.remaining = draw_service(cls);
    if (total_ == 0) {
      p.arrivalCase = up_ ? kCaseA : kCaseU;
      if (measuring_) {
        ++stats_.emptyArrivals;
        if (up_) ++emptyUp_;
      }
      busyStart_ = now_;
      busyCase_ = p.arrivalCase;
      busyCounted_ = measuring_;
    } else {
      p.arrivalCase = kCaseB;
    }
    queues_[cls].push_back(p);
    ++total_;
    emit(TraceEvent::Arrival, static_cast<int>(cls));
    if (queues_[cls].size() > cfg_.maxQueue)
      throw SimulationAborted("class " + std::to_string(cls + 1) + " queue exceeded " +
                              std::to_string(cfg_.maxQueue) + " packets at t=" +
                              std::to_string(now_) + "; configuration is likely unstable");
    schedule_arrival(cls);

    if (sel_ < 0) {
      if (up_ || commits_while_down()) select(best_class());
    } else if (cfg_.discipline == Discipline::Pr && static_cast<int>(cls) < sel_) {
      select(static_cast<int>(cls));
    }
  }

  void on_completion() {
    std::size_t cls = static_cast<std::size_t>(sel_);
    Packet p = queues_[cls].front();
    queues_[cls].pop_front();
    --total_;
    ++departures_;
    emit(TraceEvent::Depart, static_cast<int>(cls));
    if (measuring_) {
      ClassTallies& t = stats_.perClass[cls];
      t.d.add(now_ - p.arrival);
      t.w.add(p.selectedAt - p.arrival);
      t.wStar.add(p.startedAt - p.arrival);
      t.x.add(now_ - p.selectedAt);
      t.xStar.add(now_ - p.startedAt);
      t.xByCase[p.arrivalCase].add(now_ - p.selectedAt);
      double delivered = p.service - p.remaining;
      t.realService.add(delivered);
      t.maxWorkError = std::max(t.maxWorkError, std::fabs(p.remaining));
    }
    if (total_ == 0 && busyCounted_) {
      stats_.busy.add(now_ - busyStart_);
      stats_.busyByCase[busyCase_].add(now_ - busyStart_);
    }
    if (!measuring_ && departures_ >= cfg_.warmupPackets) {
      measuring_ = true;
      measureStart_ = now_;
    }
    sel_ = -1;
    select(best_class());
  }

  void on_channel() {
    if (up_) {
      up_ = false;
      nextChannel_ = now_ + rSampler_(channelRng_);
      emit(TraceEvent::Fail, -1);
      return;
    }
    up_ = true;
    nextChannel_ = now_ + ySampler_(channelRng_);
    emit(TraceEvent::Recover, -1);
    int held = sel_;
    sel_ = -1;
    // FP hands the server to the highest class at every recovery end.
    if (held < 0 || cfg_.discipline == Discipline::FP)
      select(best_class());
    else
      select(held);
  }

  // Pauses of the lowest class once its real service has started.
  void track_lowest_class() {
    std::size_t low = n_ - 1;
    bool active = !queues_[low].empty() && queues_[low].front().startedAt >= 0.0;
    bool served = active && serving() && static_cast<std::size_t>(sel_) == low;
    if (active && !served) {
      if (pauseStart_ < 0.0) pauseStart_ = now_;
    } else if (pauseStart_ >= 0.0) {
      if (measuring_) stats_.lpInterruption.add(now_ - pauseStart_);
      pauseStart_ = -1.0;
    }
  }

  const SimConfig& cfg_;
  std::size_t n_;
  std::mt19937_64 channelRng_;
  std::vector<std::mt19937_64> arrivalRng_, serviceRng_;
  Sampler ySampler_, rSampler_;
  std::vector<std::exponential_distribution<double>> interarrival_;
  std::vector<Sampler> serviceSampler_;
  std::vector<std::deque<Packet>> queues_;
  std::vector<double> nextArrival_;
  std::vector<std::size_t> scriptPos_, servicePos_;

  double now_ = 0.0;
  double nextChannel_ = 0.0;
  bool up_ = true;
  int sel_ = -1;
  std::size_t total_ = 0;
  std::uint64_t departures_ = 0;
  bool measuring_ = false;
  double measureStart_ = 0.0;
  double emptyTime_ = 0.0;
  std::uint64_t emptyUp_ = 0;
  double busyStart_ = 0.0;
  ArrivalCase busyCase_ = kCaseA;
  bool busyCounted_ = false;
  double pauseStart_ = -1.0;
  ReplicationStats stats_;
};

}  // namespace detail

inline ReplicationStats run_replication(const SimConfig& cfg, std::uint64_t seed) {
  return detail::Replication(cfg, seed).run();
}

// Across-replication mean with a Student-t 95% interval.
struct Estimate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double halfWidth = std::numeric_limits<double>::quiet_NaN();
  double stdError = std::numeric_limits<double>::quiet_NaN();
  int n = 0;

  bool contains(double v) const { return std::fabs(v - mean) <= halfWidth; }
  double z(double v) const { return (v - mean) / stdError; }
};

inline Estimate estimate(const std::vector<double>& values) {
  Estimate e;
  std::vector<double> v;
  for (double x : values)
    if (std::isfinite(x)) v.push_back(x);
  e.n = static_cast<int>(v.size());
  if (e.n == 0) return e;
  double s = 0.0;
  for (double x : v) s += x;
  e.mean = s / e.n;
  if (e.n < 2) return e;
  double ss = 0.0;
  for (double x : v) ss += (x - e.mean) * (x - e.mean);
  e.stdError = std::sqrt(ss / (e.n - 1) / e.n);
  boost::math::students_t dist(e.n - 1);
  e.halfWidth = boost::math::quantile(boost::math::complement(dist, 0.025)) * e.stdError;
  return e;
}

struct ClassEstimates {
  Estimate d, w, wStar, x, xStar, x2, xStar2;
};

struct SimStats {
  std::vector<ClassEstimates> perClass;
  Estimate p0, pae;
  Estimate busy1, busy2;
  Estimate lpInterruption1, lpInterruption2;
  std::vector<ReplicationStats> replications;
};

inline SimStats summarize(std::vector<ReplicationStats> reps) {
  SimStats s;
  if (reps.empty()) return s;
  std::size_t n = reps.front().perClass.size();
  auto collect = [&](auto f) {
    std::vector<double> v;
    for (const auto& r : reps) v.push_back(f(r));
    return estimate(v);
  };
  for (std::size_t i = 0; i < n; ++i) {
    ClassEstimates c;
    c.d = collect([i](const ReplicationStats& r) { return r.perClass[i].d.mean(); });
    c.w = collect([i](const ReplicationStats& r) { return r.perClass[i].w.mean(); });
    c.wStar = collect([i](const ReplicationStats& r) { return r.perClass[i].wStar.mean(); });
    c.x = collect([i](const ReplicationStats& r) { return r.perClass[i].x.mean(); });
    c.xStar = collect([i](const ReplicationStats& r) { return r.perClass[i].xStar.mean(); });
    c.x2 = collect([i](const ReplicationStats& r) { return r.perClass[i].x.moments().m2; });
    c.xStar2 = collect([i](const ReplicationStats& r) { return r.perClass[i].xStar.moments().m2; });
    s.perClass.push_back(c);
  }
  s.p0 = collect([](const ReplicationStats& r) { return r.p0; });
  s.pae = collect([](const ReplicationStats& r) { return r.pae; });
  s.busy1 = collect([](const ReplicationStats& r) { return r.busy.moments().m1; });
  s.busy2 = collect([](const ReplicationStats& r) { return r.busy.moments().m2; });
  s.lpInterruption1 = collect([](const ReplicationStats& r) { return r.lpInterruption.moments().m1; });
  s.lpInterruption2 = collect([](const ReplicationStats& r) { return r.lpInterruption.moments().m2; });
  s.replications = std::move(reps);
  return s;
}

using ReplicationCallback = std::function<void(std::size_t index, const ReplicationStats&)>;

// Independent replications, seeds baseSeed + i, run on a small thread pool.
// Results are ordered by replication index regardless of scheduling.
inline SimStats run_experiment(const SimConfig& cfg, const ReplicationCallback& record = {},
                               unsigned threads = 0) {
  if (cfg.replications < 1) throw std::invalid_argument("replications must be >= 1");
  std::size_t reps = static_cast<std::size_t>(cfg.replications);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, reps));
  std::vector<std::optional<ReplicationStats>> out(reps);
  std::atomic<std::size_t> next{0};
  std::mutex errMutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < reps; i = next++) {
      try {
        out[i] = run_replication(cfg, cfg.baseSeed + i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(errMutex);
        if (!error) error = std::current_exception();
        next = reps;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  std::vector<ReplicationStats> done;
  for (std::size_t i = 0; i < reps; ++i) {
    if (record) record(i, *out[i]);
    done.push_back(std::move(*out[i]));
  }
  return summarize(std::move(done));
}

}  // namespace osaq
