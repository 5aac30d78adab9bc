#include <complex>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "radopf/errors.hpp"
#include "radopf/netmodel.hpp"
#include "test_util.hpp"

using namespace radopf;
using namespace radopf::net;

TEST(Netmodel, TwoBusLineAdmittance) {
  const auto net = testing_util::case2();
  ASSERT_EQ(net.lines.size(), 1u);
  // -1/(r + ix) evaluated with std::complex
  const std::complex<double> y = -1.0 / std::complex<double>(0.01008, 0.0504);
  EXPECT_NEAR(net.lines[0].g(), y.real(), 1e-12);
  EXPECT_NEAR(net.lines[0].b(), y.imag(), 1e-12);
  EXPECT_NEAR(net.lines[0].g(), -3.8156, 5e-4);
  EXPECT_NEAR(net.lines[0].b(), 19.0782, 5e-4);
}

TEST(Netmodel, PerUnitConversion) {
  const auto net = testing_util::case2();
  EXPECT_DOUBLE_EQ(net.base_mva, 100.0);
  EXPECT_NEAR(net.buses[0].pd, 0.75, 1e-15);
  EXPECT_NEAR(net.buses[0].qd, -0.847, 1e-15);
  EXPECT_NEAR(net.generators[0].pmin, 0.75, 1e-15);
  EXPECT_NEAR(net.generators[0].cost.c1, 500.0, 1e-12);
  EXPECT_NEAR(net.generators[1].cost.c1, 120.0, 1e-12);
}

TEST(Netmodel, QuadraticCostRescaled) {
  const auto net = testing_util::load("case9.m");
  EXPECT_NEAR(net.generators[0].cost.c2, 0.11 * 1e4, 1e-9);
  EXPECT_NEAR(net.generators[0].cost.c1, 500.0, 1e-9);
  EXPECT_NEAR(net.generators[0].cost.c0, 150.0, 1e-12);
}

TEST(Netmodel, BusWithoutGeneratorHasZeroBounds) {
  const auto net = testing_util::case3();
  const auto b = bus_generation_bounds(net, 1);
  EXPECT_EQ(b.pmin, 0.0);
  EXPECT_EQ(b.pmax, 0.0);
  EXPECT_EQ(b.qmin, 0.0);
  EXPECT_EQ(b.qmax, 0.0);
}

TEST(Netmodel, AdmittanceDiagonal) {
  const auto net = testing_util::case2();
  const auto y = admittance(net);
  EXPECT_NEAR(y.G(0, 0), -y.G(0, 1), 1e-12);
  EXPECT_NEAR(y.B(0, 0), -19.0782, 5e-4);
  EXPECT_NEAR((y.G - y.G.transpose()).norm(), 0.0, 0.0);
  EXPECT_NEAR((y.B - y.B.transpose()).norm(), 0.0, 0.0);
}

TEST(Netmodel, ThreeBusChainIsTridiagonal) {
  const auto y = admittance(testing_util::case3());
  EXPECT_EQ(y.B(0, 2), 0.0);
  EXPECT_EQ(y.B(2, 0), 0.0);
  EXPECT_NE(y.B(0, 1), 0.0);
  EXPECT_NE(y.B(1, 2), 0.0);
}

TEST(Netmodel, LineAdmittanceIdentity) {
  for (const char* f : {"case9.m", "case14.m"}) {
    for (const auto& l : testing_util::load(f).lines) {
      const double z2 = l.r * l.r + l.x * l.x;
      EXPECT_LT(std::abs(l.g() * z2 + l.r), 1e-12);
      EXPECT_LT(std::abs(l.b() * z2 - l.x), 1e-12);
    }
  }
}

TEST(Netmodel, RoundTripMatpower) {
  for (const char* f : {"case2.m", "case3.m", "case9.m", "case14.m"}) {
    const auto net = testing_util::load(f);
    const auto again = parse_case(write_case(net), net.name);
    ASSERT_EQ(again.buses.size(), net.buses.size());
    ASSERT_EQ(again.lines.size(), net.lines.size());
    ASSERT_EQ(again.generators.size(), net.generators.size());
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); };
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
      EXPECT_TRUE(close(again.buses[i].pd, net.buses[i].pd));
      EXPECT_TRUE(close(again.buses[i].qd, net.buses[i].qd));
      EXPECT_TRUE(close(again.buses[i].bsh, net.buses[i].bsh));
      EXPECT_EQ(again.buses[i].vmax, net.buses[i].vmax);
    }
    for (std::size_t g = 0; g < net.generators.size(); ++g) {
      EXPECT_TRUE(close(again.generators[g].pmin, net.generators[g].pmin));
      EXPECT_TRUE(close(again.generators[g].cost.c2, net.generators[g].cost.c2));
      EXPECT_TRUE(close(again.generators[g].cost.c1, net.generators[g].cost.c1));
    }
    for (std::size_t l = 0; l < net.lines.size(); ++l) EXPECT_EQ(again.lines[l], net.lines[l]);
  }
}

TEST(Netmodel, RoundTripJsonExact) {
  for (const char* f : {"case2.m", "case14.m"}) {
    const auto net = testing_util::load(f);
    const auto again = network_from_json(nlohmann::json::parse(to_json(net).dump()));
    EXPECT_EQ(again, net);
  }
}

TEST(Netmodel, MalformedTableReportsLine) {
  const std::string text =
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [\n"
      "  1 3 0 0 0 0 1 1 0 1 1 1.1 0.9;\n"
      "  2 1 abc 0 0 0 1 1 0 1 1 1.1 0.9;\n"
      "];\n";
  try {
    parse_case(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
  }
}

TEST(Netmodel, ShortRowReportsLine) {
  const std::string text =
      "mpc.bus = [\n"
      "  1 3 0 0 0 0 1 1 0 1 1 1.1 0.9;\n"
      "];\n"
      "mpc.gen = [\n"
      "  1 0 0 1 -1 1 100 1;\n"
      "];\n"
      "mpc.branch = [];\n";
  try {
    parse_case(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5);
  }
}

TEST(Netmodel, DisconnectedIsValidationError) {
  const std::string text =
      "mpc.bus = [\n"
      "  1 3 0 0 0 0 1 1 0 1 1 1.1 0.9;\n"
      "  2 1 0 0 0 0 1 1 0 1 1 1.1 0.9;\n"
      "];\n"
      "mpc.gen = [ 1 0 0 1 -1 1 100 1 1 0; ];\n"
      "mpc.branch = [];\n";
  EXPECT_THROW(parse_case(text), ValidationError);
}

TEST(Netmodel, UnsupportedFieldsWarn) {
  std::vector<std::string> warnings;
  const auto net = load_case(testing_util::data_path("case2.m"), &warnings);
  EXPECT_FALSE(warnings.empty());  // mpc.version
  EXPECT_EQ(net.buses.size(), 2u);
}

TEST(Netmodel, SpanningTreeOfRadialIsIdentity) {
  const auto net = testing_util::case3();
  for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_EQ(spanning_tree(net, seed), net);
}

TEST(Netmodel, SpanningTreeOfTriangle) {
  Network net;
  for (int i = 1; i <= 3; ++i) net.buses.push_back({i});
  net.lines = {{1, 2, 0.01, 0.1}, {2, 3, 0.01, 0.1}, {1, 3, 0.01, 0.1}};
  std::set<std::vector<int>> seen;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto t = spanning_tree(net, seed);
    ASSERT_TRUE(is_radial(t));
    std::vector<int> key;
    for (const auto& l : t.lines) key.push_back(l.from * 10 + l.to);
    seen.insert(key);
    EXPECT_EQ(spanning_tree(net, seed), t);
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Netmodel, SpanningTreeOfCase9) {
  const auto net = testing_util::load("case9.m");
  EXPECT_EQ(net.lines.size(), 9u);
  const auto t = spanning_tree(net, 1);
  EXPECT_EQ(t.lines.size(), 8u);
  EXPECT_TRUE(is_radial(t));
}

TEST(Netmodel, ScaleLoad) {
  const auto net = testing_util::case2();
  EXPECT_EQ(scale_load(net, 1.0), net);
  const auto s = scale_load(net, 1.01);
  EXPECT_DOUBLE_EQ(s.buses[1].pd, net.buses[1].pd * 1.01);
  EXPECT_DOUBLE_EQ(s.buses[0].qd, net.buses[0].qd * 1.01);
  const auto q = scale_load(testing_util::case3(), 1.03, {.active = false, .reactive = true});
  EXPECT_DOUBLE_EQ(q.buses[2].pd, 0.6);
  EXPECT_DOUBLE_EQ(q.buses[2].qd, -0.823 * 1.03);
  EXPECT_THROW(scale_load(net, 0.0), ValidationError);
}

TEST(Netmodel, RadialModelRejectsTapsAndMeshes) {
  EXPECT_THROW(require_radial_model(testing_util::load("case9.m")), ModelError);
  const auto tree = spanning_tree(testing_util::load("case14.m"), 3);
  EXPECT_THROW(require_radial_model(tree), ModelError);
  EXPECT_NO_THROW(require_radial_model(strip_unsupported(tree)));
}
