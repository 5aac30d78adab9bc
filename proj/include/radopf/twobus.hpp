#pragma once

#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "radopf/netmodel.hpp"

namespace radopf::twobus {

/// Bus 1 holds the only generator, bus 2 the only load. All values p.u.
struct TwoBusInstance {
  double G = -1.0;  ///< off-diagonal conductance, must be negative
  double B = 1.0;   ///< off-diagonal susceptance, nonzero
  double p2d = 0.0;
  double q2d = 0.0;
  double pmin = -std::numeric_limits<double>::infinity();
  double qmin = -std::numeric_limits<double>::infinity();
  double pmax = std::numeric_limits<double>::infinity();
  double qmax = std::numeric_limits<double>::infinity();
  double c11min = 0.81, c11max = 1.21;
  double c22min = 0.81, c22max = 1.21;
  double cost = 1.0;  ///< linear cost per p.u. of p1g, positive
};

struct Point {
  double c11 = 0.0;
  double c22 = 0.0;
};

enum class Verdict { exact, inexact, opf_infeasible, both_infeasible };
const char* to_string(Verdict v);

struct TwoBusClassification {
  double alpha = 0.0;
  double beta = 0.0;
  double delta = 0.0;     ///< effective lower bound on c11 - c22
  double delta_up = 0.0;  ///< upper bound on c11 - c22 from pmax/qmax
  std::optional<Point> cO, cR, cE, cL, cI;
  Verdict verdict = Verdict::both_infeasible;
  /// 1..5 as in the five configurations; 0 when the relaxation is infeasible.
  int case_label = 0;
  double gap = 0.0;  ///< opf_value - socp_value when inexact, in cost units
  std::optional<double> socp_value;
  std::optional<double> opf_value;
  std::optional<Point> socp_point;  ///< one SOCP optimum
  std::optional<Point> opf_point;
  bool degenerate = false;            ///< a decision was an equality within tolerance
  bool negative_discriminant = false; ///< a needed hyperbola intersection does not exist
  bool mirrored = false;              ///< B < 0 input classified through its mirror image
  bool off_curve_optimum = false;     ///< c^O sits strictly inside the cone at the c11 lower bound
};

std::pair<double, double> alpha_beta(const TwoBusInstance& inst);

struct BackSubstitution {
  double p1g = 0.0;
  double q1g = 0.0;
  double c12 = 0.0;
  double s12 = 0.0;
};
BackSubstitution back_substitute(const TwoBusInstance& inst, double c11, double c22);

/// Curve c11 = c22 - 2 beta + (alpha^2 + beta^2)/c22.
double hyperbola(const TwoBusInstance& inst, double c22);

double effective_delta(const TwoBusInstance& inst);

TwoBusClassification classify(const TwoBusInstance& inst);

/// Network with the instance's data (bus ids 1 and 2, base 100 MVA).
net::Network to_network(const TwoBusInstance& inst);
/// Reads a 2-bus, 1-generator radial network; throws ModelError otherwise.
TwoBusInstance from_network(const net::Network& net);

nlohmann::json to_json(const TwoBusInstance& inst);
TwoBusInstance instance_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TwoBusClassification& c);

/// CSV data for (c11, c22) projection plots.
struct RegionSamples {
  std::string hyperbola;  ///< c22,c11
  std::string region;     ///< c11,c22,socp_feasible,on_curve
  std::string points;     ///< label,c11,c22
};
RegionSamples sample_regions(const TwoBusInstance& inst, double resolution);

}  // namespace radopf::twobus
