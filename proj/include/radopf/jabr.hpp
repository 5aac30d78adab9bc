#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "radopf/conic.hpp"
#include "radopf/netmodel.hpp"

namespace radopf::jabr {

/// Box on one line's (c_ij, s_ij) pair.
struct LineBox {
  double cmin = -conic::kInf;
  double cmax = conic::kInf;
  double smin = -conic::kInf;
  double smax = conic::kInf;

  bool operator==(const LineBox&) const = default;
};

/// Linear inequality a_c * c_ij + a_s * s_ij >= rhs on one line.
struct LineCut {
  int line = 0;
  double a_c = 0.0;
  double a_s = 0.0;
  double rhs = 0.0;
};

struct RelaxationOptions {
  /// Pins c_ii to the given values (one per bus position) when non-empty.
  std::vector<double> fixed_cii;
  /// Optional bounds on c_ii (one per bus position) tighter than the voltage
  /// limits; used by branch-and-bound nodes.
  std::vector<std::pair<double, double>> cii_bounds;
  /// |theta_i - theta_j| <= angle_bound (radians) as s <= tan * c cuts.
  std::optional<double> angle_bound;
  /// Per-line boxes, either empty or one per line.
  std::vector<LineBox> line_boxes;
  std::vector<LineCut> cuts;
  /// Drop the rotated cones, leaving only the linear part.
  bool cones = true;
};

/// The (c,s) model of a radial network together with its variable indices.
/// One (c_ij, s_ij) pair per line in the line's from->to orientation; the
/// reverse pair is c_ji = c_ij, s_ji = -s_ij.
struct JabrModel {
  conic::ConicProgram program;
  std::vector<int> pg, qg;  ///< per generator
  std::vector<int> cii;     ///< per bus position
  std::vector<int> cij, sij;  ///< per line
  std::vector<int> line_from, line_to;  ///< bus positions
};

/// Builds the SOCP relaxation of the (c,s) reformulation.
JabrModel build_model(const net::Network& net, const RelaxationOptions& opts = {});
inline conic::ConicProgram build_relaxation(const net::Network& net, const RelaxationOptions& opts = {}) {
  return build_model(net, opts).program;
}

struct Exactness {
  bool exact = false;
  double max_residual = 0.0;  ///< max over lines of (c_ii c_jj - c^2 - s^2)/(c_ii c_jj)
  int worst_line = -1;
  std::vector<double> line_residual;
};

inline constexpr double kExactTol = 1e-6;

Exactness check_exactness(const JabrModel& model, std::span<const double> x, double tol = kExactTol);

/// A candidate solution of the rectangular problem: voltage magnitude and
/// angle per bus position, generation per generator (p.u.).
struct OpfPoint {
  std::vector<double> vm, va;
  std::vector<double> pg, qg;
};

struct OpfResiduals {
  double p_balance = 0.0;  ///< max |mismatch| of the active balance rows
  double q_balance = 0.0;
  double voltage = 0.0;    ///< max violation of the magnitude bounds
  double p_bounds = 0.0;
  double q_bounds = 0.0;
  double objective = 0.0;

  double max() const noexcept;
  bool feasible(double tol = 1e-6) const noexcept { return max() <= tol; }
};

/// Residuals of the rectangular OPF constraints, computed from e = vm cos va,
/// f = vm sin va and the nodal admittance matrix.
OpfResiduals evaluate_opf_point(const net::Network& net, const OpfPoint& pt);

struct OpfSolution {
  OpfPoint point;
  std::vector<double> cii, cij, sij;
  std::vector<double> e, f;
  double objective = 0.0;
  Exactness exactness;
};

int slack_bus(const net::Network& net);

/// Angles by traversal of the tree from the slack bus. Throws ModelError when
/// the point is not on the cone surface or the network is not radial.
OpfSolution recover_angles(const net::Network& net, const JabrModel& model, std::span<const double> x,
                           double tol = kExactTol);

/// Maps a rectangular point to the model's variable vector.
std::vector<double> embed(const net::Network& net, const JabrModel& model, const OpfPoint& pt);

/// Program objective of a rectangular point.
double opf_cost(const net::Network& net, std::span<const double> pg);

struct RelaxationResult {
  conic::Status status = conic::Status::numerical_failure;
  double objective = 0.0;
  std::vector<double> x;
  Exactness exactness;
};

/// Builds and solves the relaxation; when the returned optimum lies strictly
/// inside some cone, a second solve over the optimal face looks for a point on
/// the cone surface before the exactness verdict is taken.
RelaxationResult solve_relaxation(const net::Network& net, const RelaxationOptions& opts = {},
                                  const conic::Options& solver = {});
RelaxationResult solve_relaxation(const JabrModel& model, const conic::Options& solver = {});

/// CSV: line,from,to,cii,cjj,cij,sij,residual
void write_line_csv(std::ostream& out, const net::Network& net, const JabrModel& model, std::span<const double> x);

}  // namespace radopf::jabr
