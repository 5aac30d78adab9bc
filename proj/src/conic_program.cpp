#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "radopf/conic.hpp"

namespace radopf::conic {

double AffineExpr::evaluate(std::span<const double> x) const {
  double v = constant;
  for (const auto& t : terms) v += t.coef * x[static_cast<std::size_t>(t.var)];
  return v;
}

const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

int ConicProgram::add_variable(double lb, double ub, std::string name) {
  if (lb > ub) throw std::invalid_argument(fmt::format("variable {}: lb > ub", name));
  const int id = num_variables();
  lb_.push_back(lb);
  ub_.push_back(ub);
  names_.push_back(name.empty() ? fmt::format("x{}", id) : std::move(name));
  obj_lin_.push_back(0.0);
  obj_quad_.push_back(0.0);
  return id;
}

void ConicProgram::set_bounds(int var, double lb, double ub) {
  if (lb > ub) throw std::invalid_argument(fmt::format("variable {}: lb > ub", names_.at(var)));
  lb_.at(var) = lb;
  ub_.at(var) = ub;
}

namespace {
void check_expr(const AffineExpr& e, int n) {
  for (const auto& t : e.terms) {
    if (t.var < 0 || t.var >= n) throw std::out_of_range(fmt::format("expression references variable {}", t.var));
  }
}
}  // namespace

void ConicProgram::add_equality(AffineExpr expr, double rhs) {
  check_expr(expr, num_variables());
  expr.constant -= rhs;
  eqs_.push_back({std::move(expr)});
}

void ConicProgram::add_less_equal(AffineExpr expr, double rhs) {
  check_expr(expr, num_variables());
  expr.constant -= rhs;
  ineqs_.push_back({std::move(expr)});
}

void ConicProgram::add_greater_equal(AffineExpr expr, double rhs) {
  check_expr(expr, num_variables());
  for (auto& t : expr.terms) t.coef = -t.coef;
  expr.constant = rhs - expr.constant;
  ineqs_.push_back({std::move(expr)});
}

void ConicProgram::add_rotated_cone(AffineExpr u, AffineExpr w, std::vector<AffineExpr> z) {
  check_expr(u, num_variables());
  check_expr(w, num_variables());
  for (const auto& e : z) check_expr(e, num_variables());
  cones_.push_back({std::move(u), std::move(w), std::move(z)});
}

void ConicProgram::set_objective_linear(int var, double coef) { obj_lin_.at(var) = coef; }
void ConicProgram::add_objective_linear(int var, double coef) { obj_lin_.at(var) += coef; }

void ConicProgram::add_objective_quadratic(int var, double coef) {
  if (coef < 0.0) throw std::invalid_argument("quadratic objective coefficient must be nonnegative");
  obj_quad_.at(var) += coef;
}

void ConicProgram::clear_objective() {
  std::fill(obj_lin_.begin(), obj_lin_.end(), 0.0);
  std::fill(obj_quad_.begin(), obj_quad_.end(), 0.0);
  obj_constant_ = 0.0;
}

bool ConicProgram::is_linear() const noexcept {
  return cones_.empty() && std::all_of(obj_quad_.begin(), obj_quad_.end(), [](double q) { return q == 0.0; });
}

double ConicProgram::objective_value(std::span<const double> x) const {
  double v = obj_constant_;
  for (int i = 0; i < num_variables(); ++i) v += (obj_quad_[i] * x[i] + obj_lin_[i]) * x[i];
  return v;
}

double ConicProgram::max_violation(std::span<const double> x) const {
  double worst = 0.0;
  for (int i = 0; i < num_variables(); ++i) {
    worst = std::max({worst, lb_[i] - x[i], x[i] - ub_[i]});
  }
  for (const auto& r : eqs_) worst = std::max(worst, std::abs(r.expr.evaluate(x)));
  for (const auto& r : ineqs_) worst = std::max(worst, r.expr.evaluate(x));
  for (const auto& c : cones_) {
    const double u = c.u.evaluate(x);
    const double w = c.w.evaluate(x);
    double zz = 0.0;
    for (const auto& e : c.z) {
      const double v = e.evaluate(x);
      zz += v * v;
    }
    // distance-like measure: how far (u+w)/2 falls short of ||(z, (u-w)/2)||
    const double lhs = std::sqrt(zz + 0.25 * (u - w) * (u - w));
    worst = std::max(worst, lhs - 0.5 * (u + w));
  }
  return worst;
}

namespace {
std::string expr_text(const ConicProgram& p, const AffineExpr& e) {
  std::string s;
  for (const auto& t : e.terms) s += fmt::format(" {:+.12g} {}", t.coef, p.name(t.var));
  if (e.constant != 0.0 || s.empty()) s += fmt::format(" {:+.12g}", e.constant);
  return s;
}
}  // namespace

std::string ConicProgram::dump() const {
  std::string out = fmt::format("# conic program: {} vars, {} eq, {} le, {} rcones\n", num_variables(), eqs_.size(),
                                ineqs_.size(), cones_.size());
  out += "minimize";
  for (int i = 0; i < num_variables(); ++i) {
    if (obj_quad_[i] != 0.0) out += fmt::format(" {:+.12g} {}^2", obj_quad_[i], names_[i]);
    if (obj_lin_[i] != 0.0) out += fmt::format(" {:+.12g} {}", obj_lin_[i], names_[i]);
  }
  out += fmt::format(" {:+.12g}\n", obj_constant_);
  for (int i = 0; i < num_variables(); ++i) {
    out += fmt::format("var {} [{:.12g}, {:.12g}]\n", names_[i], lb_[i], ub_[i]);
  }
  for (const auto& r : eqs_) out += "eq" + expr_text(*this, r.expr) + " == 0\n";
  for (const auto& r : ineqs_) out += "le" + expr_text(*this, r.expr) + " <= 0\n";
  for (const auto& c : cones_) {
    out += "rcone u:" + expr_text(*this, c.u) + " | w:" + expr_text(*this, c.w);
    for (const auto& z : c.z) out += " | z:" + expr_text(*this, z);
    out += "\n";
  }
  return out;
}

}  // namespace radopf::conic
