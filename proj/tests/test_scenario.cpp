#include <fstream>

#include <gtest/gtest.h>

#include "osaq/scenario.hpp"

using namespace osaq;

namespace {

const char* kBase = R"(
[channel]
Y = Exp 75
R = Exp 15

[class1]
lambda = 0.03
T = Exp 3

[class2]
lambda = 0.05
T = Det 5
)";

std::string error_of(const std::string& text) {
  try {
    parse_scenario_text(text);
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return "";
}

bool has(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST(Scenario, ParsesMinimalFile) {
  Scenario s = parse_scenario_text(kBase);
  ASSERT_EQ(s.classes.size(), 2u);
  EXPECT_DOUBLE_EQ(s.classes[1].lambda, 0.05);
  EXPECT_EQ(s.classes[1].T.kind(), Distribution::Kind::Deterministic);
  EXPECT_DOUBLE_EQ(s.channel.Y.mean(), 75.0);
  EXPECT_EQ(s.methods.size(), 4u);
  EXPECT_FALSE(s.sweep.has_value());
  EXPECT_EQ(s.sim.replications, 30);
}

TEST(Scenario, Presets) {
  for (const char* name : {"static", "dynamic"}) {
    std::ifstream in(std::string(OSAQ_SCENARIO_DIR) + "/" + name + ".cfg");
    ASSERT_TRUE(in) << name;
    Scenario s = parse_scenario(in);
    EXPECT_EQ(s.name, name);
    double ey = std::string(name) == "static" ? 75.0 : 1.0;
    EXPECT_DOUBLE_EQ(s.channel.Y.mean(), ey);
    EXPECT_DOUBLE_EQ(s.channel.R.mean(), ey / 5.0);
    ASSERT_TRUE(s.sweep.has_value());
    EXPECT_EQ(s.sweep->parameter, "class2.lambda");
    EXPECT_EQ(s.sweep->values.size(), 11u);
    EXPECT_DOUBLE_EQ(s.classes[0].lambda, 0.03);
    EXPECT_DOUBLE_EQ(s.classes[0].T.mean(), 3.0);
    EXPECT_DOUBLE_EQ(s.classes[1].T.mean(), 5.0);
  }
}

TEST(Scenario, Distributions) {
  EXPECT_DOUBLE_EQ(parse_distribution("Exp 4", "f").mean(), 4.0);
  EXPECT_DOUBLE_EQ(parse_distribution("  Det   2.5 ", "f").mean(), 2.5);
  Distribution g = parse_distribution("Geo 0.25 2", "f");
  EXPECT_EQ(g.kind(), Distribution::Kind::GeometricLattice);
  EXPECT_DOUBLE_EQ(g.mean(), 8.0);
}

TEST(Scenario, UnknownDistributionListsValidNames) {
  std::string e = error_of(std::string(kBase) + "\n[class3]\nlambda = 0.01\nT = Gamma 2\n");
  EXPECT_TRUE(has(e, "valid: Exp, Det, Geo")) << e;
  EXPECT_TRUE(has(e, "class3.T")) << e;
}

TEST(Scenario, BadParametersNameTheField) {
  EXPECT_TRUE(has(error_of("[channel]\nY = Exp -1\nR = Exp 1\n[class1]\nlambda=1\nT=Exp 1\n"), "channel.Y"));
  EXPECT_TRUE(has(error_of("[channel]\nY = Exp 1\nR = Exp 1 2\n[class1]\nlambda=1\nT=Exp 1\n"), "takes 1"));
  EXPECT_TRUE(has(error_of("[channel]\nY = Exp 1\nR = Geo 2 1\n[class1]\nlambda=1\nT=Exp 1\n"), "channel.R"));
  EXPECT_TRUE(has(error_of("[channel]\nY = Exp 1\nR = Exp x\n[class1]\nlambda=1\nT=Exp 1\n"), "expected a number"));
  EXPECT_TRUE(has(error_of("[channel]\nY = Exp 1\nR = Exp 1\n[class1]\nlambda=0\nT=Exp 1\n"), "class1.lambda"));
  EXPECT_TRUE(has(error_of("[channel]\nY = Exp 1\n[class1]\nlambda=1\nT=Exp 1\n"), "missing field 'channel.R'"));
  EXPECT_TRUE(has(error_of("[channel]\nY = Exp 1\nR = Exp 1\n"), "[class1]"));
}

TEST(Scenario, SyntaxErrorsCarryLineNumbers) {
  std::string e = error_of("[channel]\nY = Exp 1\nR = Exp 1\n[class1\n");
  EXPECT_TRUE(has(e, "line 4")) << e;
  e = error_of("[channel]\nY = Exp 1\nY = Exp 2\n");
  EXPECT_TRUE(has(e, "line 3")) << e;
}

TEST(Scenario, ClassNumbering) {
  std::string e = error_of(std::string(kBase) + "\n[class4]\nlambda = 0.01\nT = Exp 2\n");
  EXPECT_TRUE(has(e, "without gaps")) << e;
  e = error_of(std::string(kBase) + "\n[classX]\nlambda = 0.01\nT = Exp 2\n");
  EXPECT_TRUE(has(e, "classX")) << e;
}

TEST(Scenario, Disciplines) {
  Scenario s = parse_scenario_text(std::string("[scenario]\ndisciplines = Pr, FIFO ,VNon\n") + kBase);
  ASSERT_EQ(s.methods.size(), 3u);
  EXPECT_EQ(s.methods[0], Method::Pr);
  EXPECT_EQ(s.methods[1], Method::Fifo);
  EXPECT_EQ(s.methods[2], Method::VirtualNon);
  EXPECT_EQ(simulated_discipline(Method::VirtualNon), Discipline::Non);
  EXPECT_TRUE(has(error_of(std::string("[scenario]\ndisciplines = Pr,LIFO\n") + kBase), "LIFO"));
  EXPECT_THROW(parse_methods(" , "), ScenarioError);
}

TEST(Scenario, SweepMustNameANumericField) {
  auto with_sweep = [](const std::string& p) {
    return std::string(kBase) + "\n[sweep]\nparameter = " + p + "\nvalues = 1, 2\n";
  };
  for (const char* ok : {"class1.lambda", "class2.T", "channel.Y", "channel.R"})
    EXPECT_EQ(error_of(with_sweep(ok)), "") << ok;
  for (const char* bad : {"class3.lambda", "class1.mu", "channel.Z", "lambda", "class.T"})
    EXPECT_TRUE(has(error_of(with_sweep(bad)), "sweep")) << bad;
  EXPECT_TRUE(has(error_of(std::string(kBase) + "\n[sweep]\nparameter = class1.lambda\nvalues = 0.1, x\n"),
                  "sweep.values"));
  EXPECT_TRUE(has(error_of(std::string(kBase) + "\n[sweep]\nparameter = class1.lambda\n"), "sweep.values"));
}

TEST(Scenario, SweepPointKeepsDistributionFamily) {
  Scenario s = parse_scenario_text(kBase);
  Scenario a = at_sweep_point(s, "class2.T", 7.0);
  EXPECT_EQ(a.classes[1].T.kind(), Distribution::Kind::Deterministic);
  EXPECT_DOUBLE_EQ(a.classes[1].T.mean(), 7.0);
  Scenario b = at_sweep_point(s, "channel.R", 3.0);
  EXPECT_EQ(b.channel.R.kind(), Distribution::Kind::Exponential);
  EXPECT_DOUBLE_EQ(b.channel.R.mean(), 3.0);
  EXPECT_DOUBLE_EQ(at_sweep_point(s, "class1.lambda", 0.2).classes[0].lambda, 0.2);
  EXPECT_DOUBLE_EQ(s.classes[0].lambda, 0.03);  // base untouched
  EXPECT_THROW(at_sweep_point(s, "class1.lambda", -1.0), ScenarioError);
}

TEST(Scenario, SimulationSettings) {
  Scenario s = parse_scenario_text(std::string(kBase) +
                                   "\n[simulation]\nreplications = 5\nhorizon = 2000\nwarmup = 100\nseed = 9\n");
  EXPECT_EQ(s.sim.replications, 5);
  EXPECT_EQ(s.sim.horizonPackets, 2000u);
  EXPECT_EQ(s.sim.warmupPackets, 100u);
  EXPECT_EQ(s.sim.seed, 9u);
  EXPECT_TRUE(has(error_of(std::string(kBase) + "\n[simulation]\nreplications = 2.5\n"), "expected a count"));
}
