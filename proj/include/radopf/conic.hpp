#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace radopf::conic {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Term {
  int var = 0;
  double coef = 0.0;
};

/// Sparse affine expression sum(coef * x[var]) + constant.
struct AffineExpr {
  std::vector<Term> terms;
  double constant = 0.0;

  AffineExpr() = default;
  AffineExpr(std::initializer_list<Term> t, double c = 0.0) : terms(t), constant(c) {}
  static AffineExpr variable(int v, double coef = 1.0) { return AffineExpr{{Term{v, coef}}}; }
  static AffineExpr constant_value(double c) { return AffineExpr{{}, c}; }

  AffineExpr& add(int var, double coef) {
    terms.push_back({var, coef});
    return *this;
  }
  double evaluate(std::span<const double> x) const;
};

/// Linear row `expr <= 0` or `expr == 0`.
struct LinearRow {
  AffineExpr expr;
};

/// Rotated second-order cone ||z||^2 <= u * w with u, w >= 0.
struct RotatedCone {
  AffineExpr u;
  AffineExpr w;
  std::vector<AffineExpr> z;
};

/// A second-order cone program with a separable convex-quadratic objective:
///
///   minimize    sum_i quad_i x_i^2 + lin_i x_i + constant
///   subject to  lb <= x <= ub, equality rows, <= rows, rotated cones.
class ConicProgram {
 public:
  int add_variable(double lb = -kInf, double ub = kInf, std::string name = {});
  int num_variables() const noexcept { return static_cast<int>(lb_.size()); }

  void set_bounds(int var, double lb, double ub);
  double lower(int var) const { return lb_.at(var); }
  double upper(int var) const { return ub_.at(var); }
  const std::string& name(int var) const { return names_.at(var); }

  /// expr == rhs
  void add_equality(AffineExpr expr, double rhs = 0.0);
  /// expr <= rhs
  void add_less_equal(AffineExpr expr, double rhs = 0.0);
  /// expr >= rhs
  void add_greater_equal(AffineExpr expr, double rhs = 0.0);
  void add_rotated_cone(AffineExpr u, AffineExpr w, std::vector<AffineExpr> z);

  void set_objective_linear(int var, double coef);
  void add_objective_linear(int var, double coef);
  /// Adds coef * x_var^2; coef must be nonnegative.
  void add_objective_quadratic(int var, double coef);
  void set_objective_constant(double c) { obj_constant_ = c; }
  void clear_objective();

  const std::vector<double>& objective_linear() const noexcept { return obj_lin_; }
  const std::vector<double>& objective_quadratic() const noexcept { return obj_quad_; }
  double objective_constant() const noexcept { return obj_constant_; }
  const std::vector<LinearRow>& equalities() const noexcept { return eqs_; }
  const std::vector<LinearRow>& inequalities() const noexcept { return ineqs_; }
  const std::vector<RotatedCone>& cones() const noexcept { return cones_; }

  bool is_linear() const noexcept;
  double objective_value(std::span<const double> x) const;

  /// Largest violation of any constraint at x, evaluated directly from the
  /// program data (bounds, rows, and cones in the form u*w - ||z||^2 scaled by
  /// the cone size).
  double max_violation(std::span<const double> x) const;

  /// Human-readable dump of the program (see README for the format).
  std::string dump() const;

 private:
  std::vector<double> lb_, ub_;
  std::vector<std::string> names_;
  std::vector<double> obj_lin_, obj_quad_;
  double obj_constant_ = 0.0;
  std::vector<LinearRow> eqs_, ineqs_;
  std::vector<RotatedCone> cones_;
};

enum class Status { optimal, infeasible, unbounded, numerical_failure };
const char* to_string(Status s);

struct Options {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;   ///< relative duality gap
  double abs_gap_tol = 1e-9;
  int max_iter = 200;
  /// Accept a solution at these looser tolerances when progress stalls.
  double reduced_feas_tol = 1e-6;
  double reduced_gap_tol = 1e-6;
};

struct IterationLog {
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double mu = 0.0;
  double step = 0.0;
};

struct ConicSolution {
  Status status = Status::numerical_failure;
  std::vector<double> x;       ///< primal values, one per program variable
  double objective = 0.0;      ///< primal objective including constant
  double dual_objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;            ///< relative duality gap
  int iterations = 0;
  bool reduced_accuracy = false;
  /// Farkas ray when infeasible: multipliers on the equality rows and on the
  /// compiled inequality/cone rows (see README) with y'b + z'h < 0.
  std::vector<double> farkas_equality;
  std::vector<double> farkas_inequality;
  std::vector<IterationLog> trace;

  bool optimal() const noexcept { return status == Status::optimal; }
};

/// Primal-dual interior point method on the homogeneous self-dual embedding
/// with Nesterov-Todd scaling.
ConicSolution solve(const ConicProgram& prog, const Options& opts = {});

/// Same as solve() but rejects programs with cones or quadratic terms.
ConicSolution solve_lp(const ConicProgram& prog, const Options& opts = {});

}  // namespace radopf::conic
