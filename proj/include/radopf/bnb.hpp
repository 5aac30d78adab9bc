#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "radopf/conic.hpp"
#include "radopf/jabr.hpp"
#include "radopf/netmodel.hpp"
#include "radopf/tighten.hpp"

namespace radopf::bnb {

/// Intervals of the branching variables: c_ii per bus position, (c_ij, s_ij)
/// per line.
struct NodeBox {
  std::vector<std::pair<double, double>> cii;
  tighten::VarBounds lines;

  bool empty() const noexcept;
  double max_width() const noexcept;
  bool operator==(const NodeBox&) const = default;
};

/// Voltage limits squared and the implied line box |c|, |s| <= Vmax_i Vmax_j,
/// intersected with `bounds` when given.
NodeBox root_box(const net::Network& net, const tighten::VarBounds* bounds = nullptr);

/// Secant of x^2 over [l, u] at x.
inline double secant(double l, double u, double x) noexcept { return (l + u) * x - l * u; }

/// Jabr relaxation restricted to the box, plus the cuts, plus for every line
/// the linear outer approximation of c_ii c_jj <= c_ij^2 + s_ij^2:
/// each McCormick under-estimator of c_ii c_jj stays below the secants of
/// c_ij^2 and s_ij^2.
jabr::JabrModel node_relaxation(const net::Network& net, const NodeBox& box,
                                const std::vector<jabr::LineCut>& cuts = {});

struct VarRef {
  enum class Kind { cii, cij, sij };
  Kind kind = Kind::cii;
  int index = 0;

  bool operator==(const VarRef&) const = default;
};
std::string to_string(const VarRef& v);
std::pair<double, double> interval(const NodeBox& box, const VarRef& v);
void set_interval(NodeBox& box, const VarRef& v, std::pair<double, double> iv);

struct Reduction {
  NodeBox box;
  bool empty = false;
  int solves = 0;
};

/// Min and max of each listed variable over the node relaxation with the
/// objective capped at `incumbent`.
Reduction range_reduction(const net::Network& net, const NodeBox& box, const std::vector<jabr::LineCut>& cuts,
                          double incumbent, std::span<const VarRef> vars, const conic::Options& solver = {});

struct BranchDecision {
  bool violated = false;  ///< some line is off the cone surface
  VarRef var;
  double at = 0.0;
  std::optional<std::pair<NodeBox, NodeBox>> children;
};

/// Picks the variable whose relaxation error is largest on the worst line and
/// splits its interval at the relaxation value clamped to the middle 60%.
BranchDecision branch(const net::Network& net, const NodeBox& box, const jabr::JabrModel& model,
                      std::span<const double> x, double tol = jabr::kExactTol, double min_width = 1e-6);

/// Projects the relaxation point radially onto the cone surface, recovers
/// angles, restores power-flow feasibility with Newton steps and improves the
/// cost by projected gradient steps along the feasible manifold. Returns only
/// points that pass evaluate_opf_point at `tol`.
std::optional<jabr::OpfSolution> local_polish(const net::Network& net, const jabr::JabrModel& model,
                                              std::span<const double> x, double tol = 1e-6);

/// Same, starting from a rectangular point.
std::optional<jabr::OpfSolution> polish_point(const net::Network& net, const jabr::OpfPoint& start, double tol = 1e-6);

enum class Status { global_optimal, infeasible, gap_limit, time_limit };
const char* to_string(Status s);

struct Options {
  double gap = 1e-4;          ///< relative
  double time_limit = 60.0;   ///< seconds
  bool use_cuts = true;       ///< Algorithm 1 cuts
  bool use_bounds = true;     ///< Algorithm 1 line boxes
  bool obbt = true;           ///< range reduction at shallow nodes
  int obbt_depth = 4;
  int obbt_vars = 2;
  int workers = 1;
  long max_nodes = 200000;
  double exact_tol = jabr::kExactTol;
  double min_width = 1e-6;
  conic::Options solver;
};

struct TracePoint {
  long nodes = 0;
  double seconds = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct BnbResult {
  Status status = Status::gap_limit;
  std::optional<jabr::OpfSolution> incumbent;
  double upper = conic::kInf;
  double lower = -conic::kInf;
  double gap = conic::kInf;  ///< 1 - lower/upper
  long nodes = 0;
  double root_lower = -conic::kInf;
  double root_gap_pct = conic::kInf;  ///< 100 (1 - root_lower/upper)
  double socp_value = conic::kInf;    ///< plain relaxation, no bounds or cuts
  int cuts = 0;
  double preprocess_seconds = 0.0;
  double search_seconds = 0.0;
  double total_seconds = 0.0;
  std::vector<TracePoint> trace;
  std::vector<std::string> warnings;
};

BnbResult solve_global(const net::Network& net, const Options& opts = {});

nlohmann::json to_json(const BnbResult& r);

}  // namespace radopf::bnb
