#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "osaq/interruption.hpp"
#include "osaq/priority.hpp"
#include "osaq/stochastic.hpp"

namespace osaq {

// Analytic backends and simulated disciplines selectable from a scenario.
enum class Method { Non, ENo, Pr, FP, Fifo, VirtualPr, VirtualNon };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Non: return "Non";
    case Method::ENo: return "ENo";
    case Method::Pr: return "Pr";
    case Method::FP: return "FP";
    case Method::Fifo: return "FIFO";
    case Method::VirtualPr: return "VPr";
    case Method::VirtualNon: return "VNon";
  }
  return "?";
}

// Discipline the simulator runs for a method (virtual backends model Pr/Non).
inline Discipline simulated_discipline(Method m) {
  switch (m) {
    case Method::Non: case Method::VirtualNon: return Discipline::Non;
    case Method::ENo: return Discipline::ENo;
    case Method::Pr: case Method::VirtualPr: return Discipline::Pr;
    case Method::FP: return Discipline::FP;
    case Method::Fifo: return Discipline::Fifo;
  }
  return Discipline::Non;
}

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sweep {
  std::string parameter;  // class<i>.lambda, class<i>.T, channel.Y, channel.R
  std::vector<double> values;
};

struct SimSettings {
  int replications = 30;
  std::uint64_t horizonPackets = 110000;
  std::uint64_t warmupPackets = 10000;
  std::uint64_t seed = 1;
};

struct Scenario {
  std::string name = "unnamed";
  ChannelModel channel{Distribution::exponential_mean(75.0), Distribution::exponential_mean(15.0)};
  std::vector<TrafficClass> classes;
  std::vector<Method> methods{Method::Non, Method::ENo, Method::Pr, Method::FP};
  std::optional<Sweep> sweep;
  SimSettings sim;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    auto e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

inline double parse_number(const std::string& text, const std::string& field) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ScenarioError("field '" + field + "': expected a number, got '" + text + "'");
  }
}

}  // namespace detail

// "Exp <mean>", "Det <value>" or "Geo <p> <slot>".
inline Distribution parse_distribution(const std::string& text, const std::string& field) {
  std::vector<std::string> tok;
  std::istringstream is(text);
  for (std::string t; is >> t;) tok.push_back(t);
  auto arity = [&](std::size_t n) {
    if (tok.size() != n + 1)
      throw ScenarioError("field '" + field + "': '" + tok[0] + "' takes " + std::to_string(n) +
                          " parameter(s)");
  };
  if (tok.empty()) throw ScenarioError("field '" + field + "': empty distribution");
  try {
    if (tok[0] == "Exp") {
      arity(1);
      return Distribution::exponential_mean(detail::parse_number(tok[1], field));
    }
    if (tok[0] == "Det") {
      arity(1);
      return Distribution::deterministic(detail::parse_number(tok[1], field));
    }
    if (tok[0] == "Geo") {
      arity(2);
      return Distribution::geometric_lattice(detail::parse_number(tok[1], field),
                                             detail::parse_number(tok[2], field));
    }
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("field '" + field + "': " + e.what());
  }
  throw ScenarioError("field '" + field + "': unknown distribution '" + tok[0] +
                      "' (valid: Exp, Det, Geo)");
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::Non, Method::ENo, Method::Pr, Method::FP, Method::Fifo,
                   Method::VirtualPr, Method::VirtualNon})
    if (s == to_string(m)) return m;
  throw ScenarioError("unknown discipline '" + s + "' (valid: Non, ENo, Pr, FP, FIFO, VPr, VNon)");
}

inline std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  for (const auto& s : detail::split(list, ',')) out.push_back(parse_method(s));
  if (out.empty()) throw ScenarioError("empty discipline list");
  return out;
}

// Applies one sweep value to a copy of the scenario.
inline Scenario at_sweep_point(const Scenario& base, const std::string& parameter, double v) {
  Scenario s = base;
  auto dot = parameter.find('.');
  std::string head = parameter.substr(0, dot), field = dot == std::string::npos ? "" : parameter.substr(dot + 1);
  try {
    if (head == "channel" && field == "Y") {
      s.channel.Y = with_mean(s.channel.Y, v);
      return s;
    }
    if (head == "channel" && field == "R") {
      s.channel.R = with_mean(s.channel.R, v);
      return s;
    }
    if (head.rfind("class", 0) == 0 && head.size() > 5) {
      std::size_t idx = std::stoul(head.substr(5));
      if (idx >= 1 && idx <= s.classes.size()) {
        TrafficClass& c = s.classes[idx - 1];
        if (field == "lambda") {
          if (!(v > 0.0)) throw std::invalid_argument("arrival rate must be > 0");
          c.lambda = v;
          return s;
        }
        if (field == "T") {
          c.T = with_mean(c.T, v);
          return s;
        }
      }
    }
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("sweep '" + parameter + "': " + e.what());
  }
  throw ScenarioError("sweep parameter '" + parameter +
                      "' does not name a numeric field (classN.lambda, classN.T, channel.Y, channel.R)");
}

inline Scenario parse_scenario(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ScenarioError("line " + std::to_string(e.line()) + ": " + e.message());
  }
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    return v ? std::optional<std::string>(*v) : std::nullopt;
  };
  auto require = [&](const std::string& key) {
    auto v = get(key);
    if (!v) throw ScenarioError("missing field '" + key + "'");
    return *v;
  };

  Scenario s;
  if (auto v = get("scenario.name")) s.name = *v;
  s.channel.Y = parse_distribution(require("channel.Y"), "channel.Y");
  s.channel.R = parse_distribution(require("channel.R"), "channel.R");
  for (int i = 1;; ++i) {
    std::string sec = "class" + std::to_string(i);
    if (!tree.get_child_optional(sec)) break;
    TrafficClass c{detail::parse_number(require(sec + ".lambda"), sec + ".lambda"),
                   parse_distribution(require(sec + ".T"), sec + ".T")};
    if (!(c.lambda > 0.0)) throw ScenarioError("field '" + sec + ".lambda': must be > 0");
    s.classes.push_back(c);
  }
  if (s.classes.empty()) throw ScenarioError("no [class1] section");
  for (const auto& kv : tree)
    if (kv.first.rfind("class", 0) == 0) {
      std::string idx = kv.first.substr(5);
      if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos ||
          std::stoul(idx) > s.classes.size())
        throw ScenarioError("section '" + kv.first + "': classes must be numbered 1, 2, ... without gaps");
    }
  if (auto v = get("scenario.disciplines")) s.methods = parse_methods(*v);
  if (auto p = get("sweep.parameter")) {
    Sweep sw{*p, {}};
    for (const auto& t : detail::split(require("sweep.values"), ','))
      sw.values.push_back(detail::parse_number(t, "sweep.values"));
    if (sw.values.empty()) throw ScenarioError("field 'sweep.values': empty list");
    at_sweep_point(s, sw.parameter, sw.values.front());  // validates the path
    s.sweep = sw;
  }
  auto count = [&](const std::string& key, auto& dst) {
    if (auto v = get(key)) {
      double x = detail::parse_number(*v, key);
      if (!(x >= 0.0) || x != std::floor(x)) throw ScenarioError("field '" + key + "': expected a count");
      dst = static_cast<std::remove_reference_t<decltype(dst)>>(x);
    }
  };
  count("simulation.replications", s.sim.replications);
  count("simulation.horizon", s.sim.horizonPackets);
  count("simulation.warmup", s.sim.warmupPackets);
  count("simulation.seed", s.sim.seed);
  return s;
}

inline Scenario parse_scenario_text(const std::string& text) {
  std::istringstream in(text);
  return parse_scenario(in);
}

}  // namespace osaq
