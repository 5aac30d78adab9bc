#include "radopf/twobus.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "radopf/errors.hpp"

namespace radopf::twobus {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTie = 1e-12;

struct Roots {
  double lo = 0.0;
  double hi = 0.0;
};

// Solutions of hyperbola(c22) = level, i.e. c22^2 - (2 beta + level) c22 + K = 0.
std::optional<Roots> level_roots(double beta, double K, double level) {
  const double b = 2.0 * beta + level;
  const double disc = b * b - 4.0 * K;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  // the smaller root through K / larger avoids cancellation
  const double hi = 0.5 * (b + sq);
  const double lo = hi > 0.0 ? K / hi : 0.5 * (b - sq);
  return Roots{lo, hi};
}

void check(const TwoBusInstance& inst) {
  if (!(inst.G < 0.0)) throw ValidationError("two-bus instance needs G < 0");
  if (inst.B == 0.0 || !std::isfinite(inst.B)) throw ValidationError("two-bus instance needs finite nonzero B");
  if (!(inst.cost > 0.0)) throw ValidationError("two-bus instance needs a positive cost coefficient");
  if (!(inst.c11min > 0.0 && inst.c11min <= inst.c11max && inst.c22min > 0.0 && inst.c22min <= inst.c22max)) {
    throw ValidationError("two-bus instance needs 0 < lower <= upper squared-voltage bounds");
  }
  if (inst.pmin > inst.pmax || inst.qmin > inst.qmax) throw ValidationError("generator bounds out of order");
}

TwoBusInstance mirror(const TwoBusInstance& inst) {
  TwoBusInstance m = inst;
  m.B = -inst.B;
  m.q2d = -inst.q2d;
  m.qmin = -inst.qmax;
  m.qmax = -inst.qmin;
  return m;
}

double p1g_of_d(const TwoBusInstance& inst, double alpha, double beta, double d) {
  return -inst.G * d - inst.G * beta + inst.B * alpha;
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::exact: return "exact";
    case Verdict::inexact: return "inexact";
    case Verdict::opf_infeasible: return "opf-infeasible-socp-feasible";
    case Verdict::both_infeasible: return "both-infeasible";
  }
  return "unknown";
}

std::pair<double, double> alpha_beta(const TwoBusInstance& inst) {
  const double den = inst.B * inst.B + inst.G * inst.G;
  return {(inst.B * inst.p2d + inst.G * inst.q2d) / den, (inst.G * inst.p2d - inst.B * inst.q2d) / den};
}

BackSubstitution back_substitute(const TwoBusInstance& inst, double c11, double c22) {
  const auto [a, b] = alpha_beta(inst);
  BackSubstitution r;
  r.s12 = -a;
  r.c12 = c22 - b;
  r.p1g = -inst.G * (c11 - c22) - inst.G * b + inst.B * a;
  r.q1g = inst.B * (c11 - c22) + inst.B * b + inst.G * a;
  return r;
}

double hyperbola(const TwoBusInstance& inst, double c22) {
  const auto [a, b] = alpha_beta(inst);
  return c22 - 2.0 * b + (a * a + b * b) / c22;
}

double effective_delta(const TwoBusInstance& inst) {
  const auto [a, b] = alpha_beta(inst);
  const double G = inst.G, B = inst.B;
  return std::max((inst.pmin + G * b - B * a) / (-G), (inst.qmin - B * b - G * a) / B);
}

TwoBusClassification classify(const TwoBusInstance& input) {
  check(input);
  if (input.B < 0.0) {
    auto c = classify(mirror(input));
    c.mirrored = true;
    const auto [a, b] = alpha_beta(input);
    c.alpha = a;
    c.beta = b;
    return c;
  }
  const TwoBusInstance& in = input;
  TwoBusClassification out;
  const auto [alpha, beta] = alpha_beta(in);
  const double K = alpha * alpha + beta * beta;
  const double G = in.G, B = in.B;
  out.alpha = alpha;
  out.beta = beta;
  out.delta = effective_delta(in);
  out.delta_up = std::min((in.pmax + G * beta - B * alpha) / (-G), (in.qmax - B * beta - G * alpha) / B);
  const double delta = out.delta;

  auto value_at = [&](double d) { return in.cost * p1g_of_d(in, alpha, beta, d); };

  // Part of the hyperbola inside c11 <= c11max.
  const auto top = level_roots(beta, K, in.c11max);
  if (!top) {
    out.negative_discriminant = true;
    return out;
  }
  const double lo = std::max(in.c22min, top->lo);
  const double hi = std::min(in.c22max, top->hi);
  if (lo > hi) return out;

  // Relaxation optimum without the effective lower bound.
  Point cO;
  if (hyperbola(in, in.c22max) <= in.c11max) {
    cO = {hyperbola(in, in.c22max), in.c22max};
  } else {
    cO = {in.c11max, top->hi};
  }
  if (cO.c11 < in.c11min) {
    cO.c11 = in.c11min;
    out.off_curve_optimum = true;
  }
  out.cO = cO;
  const double dO = cO.c11 - cO.c22;
  const double ds = std::max(dO, delta);
  const double dmax = std::min(in.c11max - lo, out.delta_up);
  if (ds > dmax + kTie) return out;
  if (ds > dmax) out.degenerate = true;

  out.socp_value = value_at(ds);

  // Case 1: the effective bound is slack at c^O.
  if (!out.off_curve_optimum && dO >= delta - kTie) {
    if (dO < delta) out.degenerate = true;
    out.verdict = Verdict::exact;
    out.case_label = 1;
    out.socp_point = cO;
    out.opf_point = cO;
    out.opf_value = out.socp_value;
    return out;
  }

  const bool on_delta_line = dO < delta;
  if (on_delta_line) {
    out.cR = in.c11max - in.c22max >= delta ? Point{in.c22max + delta, in.c22max}
                                            : Point{in.c11max, in.c11max - delta};
    out.socp_point = out.cR;
  } else {
    out.socp_point = cO;
  }

  if (on_delta_line && delta + 2.0 * beta > 0.0) {
    const double c22E = K / (2.0 * beta + delta);
    out.cE = Point{c22E + delta, c22E};
    if (c22E < in.c22min - kTie) {
      out.verdict = Verdict::opf_infeasible;
      out.case_label = 2;
      return out;
    }
    if (c22E < in.c22min) out.degenerate = true;
    if (out.cE->c11 >= in.c11min - kTie) {
      if (out.cE->c11 < in.c11min) out.degenerate = true;
      out.verdict = Verdict::exact;
      out.case_label = 3;
      out.opf_point = out.cE;
      out.opf_value = out.socp_value;
      return out;
    }
  }

  if (on_delta_line) {
    out.cL = in.c11min - in.c22min <= delta ? Point{in.c22min + delta, in.c22min}
                                            : Point{in.c11min, in.c11min - delta};
  } else {
    out.cL = cO;
  }

  const auto bottom = level_roots(beta, K, in.c11min);
  if (!bottom) {
    out.negative_discriminant = true;
    out.verdict = Verdict::opf_infeasible;
    out.case_label = 4;
    return out;
  }
  out.cI = Point{in.c11min, bottom->lo};
  const double dI = in.c11min - bottom->lo;
  if (bottom->lo < in.c22min - kTie || dI > out.delta_up + kTie) {
    out.verdict = Verdict::opf_infeasible;
    out.case_label = 4;
    return out;
  }
  out.verdict = Verdict::inexact;
  out.case_label = 5;
  out.opf_point = out.cI;
  out.opf_value = value_at(dI);
  out.gap = in.cost * (-G) * (dI - ds);
  return out;
}

net::Network to_network(const TwoBusInstance& inst) {
  check(inst);
  net::Network n;
  n.name = "twobus";
  n.buses.push_back({1, std::sqrt(inst.c11min), std::sqrt(inst.c11max), 0.0, 0.0, 0.0, 0.0});
  n.buses.push_back({2, std::sqrt(inst.c22min), std::sqrt(inst.c22max), inst.p2d, inst.q2d, 0.0, 0.0});
  net::Generator g;
  g.bus = 1;
  g.pmin = inst.pmin;
  g.pmax = inst.pmax;
  g.qmin = inst.qmin;
  g.qmax = inst.qmax;
  g.cost.c1 = inst.cost;
  n.generators.push_back(g);
  const double den = inst.G * inst.G + inst.B * inst.B;
  n.lines.push_back({1, 2, -inst.G / den, inst.B / den});
  return n;
}

TwoBusInstance from_network(const net::Network& net) {
  if (net.buses.size() != 2 || net.lines.size() != 1 || net.generators.size() != 1) {
    throw ModelError("two-bus analysis needs 2 buses, 1 line and 1 generator");
  }
  net::require_radial_model(net);
  const auto& gen = net.generators[0];
  const int gi = net.index(gen.bus);
  const auto& b1 = net.buses[gi];
  const auto& b2 = net.buses[1 - gi];
  if (b1.pd != 0.0 || b1.qd != 0.0 || b1.gsh != 0.0 || b1.bsh != 0.0 || b2.gsh != 0.0 || b2.bsh != 0.0) {
    throw ModelError("two-bus analysis needs no load at the generator bus and no shunts");
  }
  if (!gen.cost.is_linear()) throw ModelError("two-bus analysis needs a linear cost");
  TwoBusInstance t;
  t.G = net.lines[0].g();
  t.B = net.lines[0].b();
  t.p2d = b2.pd;
  t.q2d = b2.qd;
  t.pmin = gen.pmin;
  t.pmax = gen.pmax;
  t.qmin = gen.qmin;
  t.qmax = gen.qmax;
  t.c11min = b1.vmin * b1.vmin;
  t.c11max = b1.vmax * b1.vmax;
  t.c22min = b2.vmin * b2.vmin;
  t.c22max = b2.vmax * b2.vmax;
  t.cost = gen.cost.c1;
  return t;
}

namespace {
nlohmann::json bound(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
double read_bound(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  return j[key].get<double>();
}
nlohmann::json point_json(const std::optional<Point>& p) {
  if (!p) return nullptr;
  return {{"c11", p->c11}, {"c22", p->c22}};
}
}  // namespace

nlohmann::json to_json(const TwoBusInstance& t) {
  return {{"G", t.G},
          {"B", t.B},
          {"p2d", t.p2d},
          {"q2d", t.q2d},
          {"pmin", bound(t.pmin)},
          {"qmin", bound(t.qmin)},
          {"pmax", bound(t.pmax)},
          {"qmax", bound(t.qmax)},
          {"c11min", t.c11min},
          {"c11max", t.c11max},
          {"c22min", t.c22min},
          {"c22max", t.c22max},
          {"cost", t.cost}};
}

TwoBusInstance instance_from_json(const nlohmann::json& j) {
  TwoBusInstance t;
  try {
    t.G = j.at("G").get<double>();
    t.B = j.at("B").get<double>();
    t.p2d = j.value("p2d", 0.0);
    t.q2d = j.value("q2d", 0.0);
    t.pmin = read_bound(j, "pmin", -kInf);
    t.qmin = read_bound(j, "qmin", -kInf);
    t.pmax = read_bound(j, "pmax", kInf);
    t.qmax = read_bound(j, "qmax", kInf);
    t.c11min = j.value("c11min", t.c11min);
    t.c11max = j.value("c11max", t.c11max);
    t.c22min = j.value("c22min", t.c22min);
    t.c22max = j.value("c22max", t.c22max);
    t.cost = j.value("cost", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("two-bus JSON: ") + e.what());
  }
  check(t);
  return t;
}

nlohmann::json to_json(const TwoBusClassification& c) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"verdict", to_string(c.verdict)},
          {"case", c.case_label},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"delta", bound(c.delta)},
          {"delta_up", bound(c.delta_up)},
          {"gap", c.gap},
          {"socp_value", opt(c.socp_value)},
          {"opf_value", opt(c.opf_value)},
          {"points",
           {{"O", point_json(c.cO)},
            {"R", point_json(c.cR)},
            {"E", point_json(c.cE)},
            {"L", point_json(c.cL)},
            {"I", point_json(c.cI)}}},
          {"degenerate", c.degenerate},
          {"negative_discriminant", c.negative_discriminant},
          {"mirrored", c.mirrored}};
}

RegionSamples sample_regions(const TwoBusInstance& inst, double res) {
  if (!(res > 0.0)) throw std::invalid_argument("resolution must be positive");
  const auto cls = classify(inst);
  const double margin = 0.05;
  RegionSamples out;
  out.hyperbola = "c22,c11\n";
  const double h0 = std::max(res, inst.c22min - 4 * margin), h1 = inst.c22max + 4 * margin;
  for (double c22 = h0; c22 <= h1 + 0.5 * res; c22 += res) {
    out.hyperbola += fmt::format("{:.10g},{:.10g}\n", c22, hyperbola(inst, c22));
  }
  out.region = "c11,c22,socp_feasible,on_curve\n";
  const double a0 = inst.c11min - margin, a1 = inst.c11max + margin;
  const double b0 = inst.c22min - margin, b1 = inst.c22max + margin;
  const std::size_t na = static_cast<std::size_t>((a1 - a0) / res) + 1;
  const std::size_t nb = static_cast<std::size_t>((b1 - b0) / res) + 1;
  for (std::size_t i = 0; i < na; ++i) {
    const double c11 = a0 + static_cast<double>(i) * res;
    for (std::size_t k = 0; k < nb; ++k) {
      const double c22 = b0 + static_cast<double>(k) * res;
      const double d = c11 - c22;
      const bool in_box = c11 >= inst.c11min && c11 <= inst.c11max && c22 >= inst.c22min && c22 <= inst.c22max;
      const bool in_d = d >= cls.delta && d <= cls.delta_up;
      const double h = hyperbola(inst, c22);
      const bool socp = in_box && in_d && c11 >= h;
      const bool curve = in_box && in_d && std::abs(c11 - h) <= 0.5 * res;
      out.region += fmt::format("{:.10g},{:.10g},{},{}\n", c11, c22, socp ? 1 : 0, curve ? 1 : 0);
    }
  }
  out.points = "label,c11,c22\n";
  auto add = [&](const char* label, const std::optional<Point>& p) {
    if (p) out.points += fmt::format("{},{:.10g},{:.10g}\n", label, p->c11, p->c22);
  };
  add("O", cls.cO);
  add("R", cls.cR);
  add("E", cls.cE);
  add("L", cls.cL);
  add("I", cls.cI);
  return out;
}

}  // namespace radopf::twobus
