#include "radopf/jabr.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <queue>

#include <fmt/format.h>

#include "radopf/errors.hpp"

namespace radopf::jabr {

using conic::AffineExpr;
using conic::kInf;

namespace {
// relative objective slack allowed while searching the optimal face
constexpr double kFaceSlack = 1e-7;
}  // namespace

JabrModel build_model(const net::Network& net, const RelaxationOptions& opts) {
  net::require_radial_model(net);
  const std::size_t nb = net.buses.size();
  const std::size_t nl = net.lines.size();
  if (!opts.fixed_cii.empty() && opts.fixed_cii.size() != nb) {
    throw std::invalid_argument("fixed_cii must have one entry per bus");
  }
  if (!opts.cii_bounds.empty() && opts.cii_bounds.size() != nb) {
    throw std::invalid_argument("cii_bounds must have one entry per bus");
  }
  if (!opts.line_boxes.empty() && opts.line_boxes.size() != nl) {
    throw std::invalid_argument("line_boxes must have one entry per line");
  }

  JabrModel m;
  auto& p = m.program;

  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto& gen = net.generators[g];
    m.pg.push_back(p.add_variable(gen.pmin, gen.pmax, fmt::format("pg{}", g)));
    m.qg.push_back(p.add_variable(gen.qmin, gen.qmax, fmt::format("qg{}", g)));
    p.set_objective_linear(m.pg.back(), gen.cost.c1);
    if (gen.cost.c2 > 0.0) p.add_objective_quadratic(m.pg.back(), gen.cost.c2);
  }
  double c0 = 0.0;
  for (const auto& gen : net.generators) c0 += gen.cost.c0;
  p.set_objective_constant(c0);

  for (std::size_t i = 0; i < nb; ++i) {
    const auto& b = net.buses[i];
    double lo = b.vmin * b.vmin, hi = b.vmax * b.vmax;
    if (!opts.cii_bounds.empty()) {
      lo = std::max(lo, opts.cii_bounds[i].first);
      hi = std::min(hi, opts.cii_bounds[i].second);
    }
    if (!opts.fixed_cii.empty()) lo = hi = opts.fixed_cii[i];
    if (lo > hi) lo = hi = 0.5 * (lo + hi);  // empty box; the caller prunes on its own
    m.cii.push_back(p.add_variable(lo, hi, fmt::format("c{}_{}", b.id, b.id)));
  }

  for (std::size_t l = 0; l < nl; ++l) {
    const int i = net.from_index(l), j = net.to_index(l);
    m.line_from.push_back(i);
    m.line_to.push_back(j);
    const double rbar = net.buses[i].vmax * net.buses[j].vmax;
    double clo = -rbar, chi = rbar, slo = -rbar, shi = rbar;
    if (!opts.line_boxes.empty()) {
      const auto& box = opts.line_boxes[l];
      clo = std::max(clo, box.cmin);
      chi = std::min(chi, box.cmax);
      slo = std::max(slo, box.smin);
      shi = std::min(shi, box.smax);
    }
    const int a = net.buses[i].id, b = net.buses[j].id;
    m.cij.push_back(p.add_variable(clo, std::max(clo, chi), fmt::format("c{}_{}", a, b)));
    m.sij.push_back(p.add_variable(slo, std::max(slo, shi), fmt::format("s{}_{}", a, b)));
  }

  // flow balance at every bus
  const auto adm = net::admittance(net);
  const auto gens_at = net.generators_by_bus();
  for (std::size_t i = 0; i < nb; ++i) {
    AffineExpr pe, qe;
    for (int g : gens_at[i]) {
      pe.add(m.pg[g], 1.0);
      qe.add(m.qg[g], 1.0);
    }
    pe.add(m.cii[i], -adm.G(i, i));
    qe.add(m.cii[i], adm.B(i, i));
    for (std::size_t l = 0; l < nl; ++l) {
      const double G = net.lines[l].g(), B = net.lines[l].b();
      double sign = 0.0;  // s_i,other = sign * s_l
      if (m.line_from[l] == static_cast<int>(i)) sign = 1.0;
      if (m.line_to[l] == static_cast<int>(i)) sign = -1.0;
      if (sign == 0.0) continue;
      // p: G c - B s,  q: -B c - G s
      pe.add(m.cij[l], -G).add(m.sij[l], sign * B);
      qe.add(m.cij[l], B).add(m.sij[l], sign * G);
    }
    p.add_equality(pe, net.buses[i].pd);
    p.add_equality(qe, net.buses[i].qd);
  }

  for (std::size_t l = 0; l < nl; ++l) {
    if (opts.cones) {
      p.add_rotated_cone(AffineExpr::variable(m.cii[m.line_from[l]]), AffineExpr::variable(m.cii[m.line_to[l]]),
                         {AffineExpr::variable(m.cij[l]), AffineExpr::variable(m.sij[l])});
    }
    if (opts.angle_bound) {
      const double t = std::tan(*opts.angle_bound);
      p.add_less_equal(AffineExpr{{{m.sij[l], 1.0}, {m.cij[l], -t}}});
      p.add_less_equal(AffineExpr{{{m.sij[l], -1.0}, {m.cij[l], -t}}});
    }
  }
  for (const auto& cut : opts.cuts) {
    if (cut.line < 0 || cut.line >= static_cast<int>(nl)) throw std::out_of_range("cut references unknown line");
    p.add_greater_equal(AffineExpr{{{m.cij[cut.line], cut.a_c}, {m.sij[cut.line], cut.a_s}}}, cut.rhs);
  }
  return m;
}

Exactness check_exactness(const JabrModel& model, std::span<const double> x, double tol) {
  Exactness e;
  e.line_residual.resize(model.cij.size());
  for (std::size_t l = 0; l < model.cij.size(); ++l) {
    const double ci = x[model.cii[model.line_from[l]]];
    const double cj = x[model.cii[model.line_to[l]]];
    const double c = x[model.cij[l]], s = x[model.sij[l]];
    const double prod = ci * cj;
    const double r = prod > 0.0 ? (prod - c * c - s * s) / prod : kInf;
    e.line_residual[l] = r;
    if (e.worst_line < 0 || r > e.max_residual) {
      e.max_residual = r;
      e.worst_line = static_cast<int>(l);
    }
  }
  if (model.cij.empty()) e.max_residual = 0.0;
  e.exact = e.max_residual <= tol;
  return e;
}

double OpfResiduals::max() const noexcept { return std::max({p_balance, q_balance, voltage, p_bounds, q_bounds}); }

double opf_cost(const net::Network& net, std::span<const double> pg) {
  double v = 0.0;
  for (std::size_t g = 0; g < net.generators.size(); ++g) v += net.generators[g].cost(pg[g]);
  return v;
}

OpfResiduals evaluate_opf_point(const net::Network& net, const OpfPoint& pt) {
  const std::size_t nb = net.buses.size();
  OpfResiduals r;
  if (pt.vm.size() != nb || pt.va.size() != nb || pt.pg.size() != net.generators.size() ||
      pt.qg.size() != net.generators.size()) {
    r.p_balance = r.q_balance = kInf;
    return r;
  }
  const auto adm = net::admittance(net);
  std::vector<double> e(nb), f(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    e[i] = pt.vm[i] * std::cos(pt.va[i]);
    f[i] = pt.vm[i] * std::sin(pt.va[i]);
  }
  std::vector<double> pinj(nb, 0.0), qinj(nb, 0.0);
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const int i = net.index(net.generators[g].bus);
    pinj[i] += pt.pg[g];
    qinj[i] += pt.qg[g];
    const auto& gen = net.generators[g];
    r.p_bounds = std::max({r.p_bounds, gen.pmin - pt.pg[g], pt.pg[g] - gen.pmax});
    r.q_bounds = std::max({r.q_bounds, gen.qmin - pt.qg[g], pt.qg[g] - gen.qmax});
  }
  for (std::size_t i = 0; i < nb; ++i) {
    double p = 0.0, q = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
      const double G = adm.G(i, j), B = adm.B(i, j);
      if (G == 0.0 && B == 0.0) continue;
      const double cc = e[i] * e[j] + f[i] * f[j];
      const double ss = e[i] * f[j] - e[j] * f[i];
      p += G * cc - B * ss;
      q += -B * cc - G * ss;
    }
    r.p_balance = std::max(r.p_balance, std::abs(pinj[i] - net.buses[i].pd - p));
    r.q_balance = std::max(r.q_balance, std::abs(qinj[i] - net.buses[i].qd - q));
    const double v2 = e[i] * e[i] + f[i] * f[i];
    const auto& b = net.buses[i];
    r.voltage = std::max({r.voltage, b.vmin * b.vmin - v2, v2 - b.vmax * b.vmax});
  }
  r.objective = opf_cost(net, pt.pg);
  return r;
}

int slack_bus(const net::Network& net) {
  int best = -1;
  for (const auto& g : net.generators) {
    const int i = net.index(g.bus);
    if (best < 0 || net.buses[i].id < net.buses[best].id) best = i;
  }
  if (best >= 0) return best;
  best = 0;
  for (std::size_t i = 1; i < net.buses.size(); ++i) {
    if (net.buses[i].id < net.buses[best].id) best = static_cast<int>(i);
  }
  return best;
}

OpfSolution recover_angles(const net::Network& net, const JabrModel& model, std::span<const double> x,
                           double tol) {
  if (!net::is_radial(net)) throw ModelError("angle recovery needs a radial network");
  OpfSolution sol;
  sol.exactness = check_exactness(model, x, tol);
  if (!sol.exactness.exact) {
    throw ModelError(fmt::format("relaxed point is not on the cone surface (residual {:.3g} on line {})",
                                 sol.exactness.max_residual, sol.exactness.worst_line));
  }
  const std::size_t nb = net.buses.size();
  const std::size_t nl = net.lines.size();
  for (int v : model.cii) sol.cii.push_back(x[v]);
  for (std::size_t l = 0; l < nl; ++l) {
    sol.cij.push_back(x[model.cij[l]]);
    sol.sij.push_back(x[model.sij[l]]);
  }
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    sol.point.pg.push_back(x[model.pg[g]]);
    sol.point.qg.push_back(x[model.qg[g]]);
  }
  sol.point.vm.resize(nb);
  for (std::size_t i = 0; i < nb; ++i) sol.point.vm[i] = std::sqrt(std::max(0.0, sol.cii[i]));

  // s_ij = e_i f_j - e_j f_i = |V_i||V_j| sin(theta_j - theta_i)
  std::vector<std::vector<std::pair<int, int>>> adj(nb);
  for (std::size_t l = 0; l < nl; ++l) {
    adj[model.line_from[l]].emplace_back(model.line_to[l], static_cast<int>(l));
    adj[model.line_to[l]].emplace_back(model.line_from[l], static_cast<int>(l));
  }
  sol.point.va.assign(nb, 0.0);
  std::vector<bool> seen(nb, false);
  std::queue<int> todo;
  const int root = slack_bus(net);
  todo.push(root);
  seen[root] = true;
  while (!todo.empty()) {
    const int i = todo.front();
    todo.pop();
    for (auto [j, l] : adj[i]) {
      if (seen[j]) continue;
      const double d = std::atan2(sol.sij[l], sol.cij[l]);  // theta_to - theta_from
      sol.point.va[j] = model.line_from[l] == i ? sol.point.va[i] + d : sol.point.va[i] - d;
      seen[j] = true;
      todo.push(j);
    }
  }
  sol.e.resize(nb);
  sol.f.resize(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    sol.e[i] = sol.point.vm[i] * std::cos(sol.point.va[i]);
    sol.f[i] = sol.point.vm[i] * std::sin(sol.point.va[i]);
  }
  sol.objective = opf_cost(net, sol.point.pg);
  return sol;
}

std::vector<double> embed(const net::Network& net, const JabrModel& model, const OpfPoint& pt) {
  std::vector<double> x(static_cast<std::size_t>(model.program.num_variables()), 0.0);
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    x[model.pg[g]] = pt.pg[g];
    x[model.qg[g]] = pt.qg[g];
  }
  for (std::size_t i = 0; i < net.buses.size(); ++i) x[model.cii[i]] = pt.vm[i] * pt.vm[i];
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const int i = model.line_from[l], j = model.line_to[l];
    const double vv = pt.vm[i] * pt.vm[j];
    x[model.cij[l]] = vv * std::cos(pt.va[j] - pt.va[i]);
    x[model.sij[l]] = vv * std::sin(pt.va[j] - pt.va[i]);
  }
  return x;
}

RelaxationResult solve_relaxation(const JabrModel& model, const conic::Options& solver) {
  RelaxationResult r;
  const auto sol = conic::solve(model.program, solver);
  r.status = sol.status;
  if (!sol.optimal()) return r;
  r.objective = sol.objective;
  r.x = sol.x;
  r.exactness = check_exactness(model, r.x);
  if (r.exactness.exact || model.cij.empty()) return r;

  // Optimal face search: stay (nearly) at the optimal value and walk toward the
  // cone surface by minimising the linearised residual c_ii c_jj - c^2 - s^2.
  const auto& lin = model.program.objective_linear();
  const auto& quad = model.program.objective_quadratic();
  conic::ConicProgram face = model.program;
  AffineExpr obj;
  for (int v = 0; v < model.program.num_variables(); ++v) {
    if (lin[v] != 0.0) obj.add(v, lin[v]);
    if (quad[v] > 0.0) {
      // epigraph t >= x^2 as x^2 <= t * 1
      const int t = face.add_variable(0.0, kInf);
      face.add_rotated_cone(AffineExpr::variable(t), AffineExpr::constant_value(1.0), {AffineExpr::variable(v)});
      obj.add(t, quad[v]);
    }
  }
  obj.constant = model.program.objective_constant();
  face.add_less_equal(obj, sol.objective + kFaceSlack * std::max(1.0, std::abs(sol.objective)));
  for (int round = 0; round < 3 && !r.exactness.exact; ++round) {
    face.clear_objective();
    for (std::size_t l = 0; l < model.cij.size(); ++l) {
      const int i = model.cii[model.line_from[l]], j = model.cii[model.line_to[l]];
      face.add_objective_linear(i, r.x[j]);
      face.add_objective_linear(j, r.x[i]);
      face.add_objective_linear(model.cij[l], -2.0 * r.x[model.cij[l]]);
      face.add_objective_linear(model.sij[l], -2.0 * r.x[model.sij[l]]);
    }
    const auto again = conic::solve(face, solver);
    if (!again.optimal()) break;
    const auto ex = check_exactness(model, again.x);
    if (ex.max_residual >= r.exactness.max_residual) break;
    r.x = again.x;
    r.exactness = ex;
  }
  return r;
}

RelaxationResult solve_relaxation(const net::Network& net, const RelaxationOptions& opts,
                                  const conic::Options& solver) {
  return solve_relaxation(build_model(net, opts), solver);
}

void write_line_csv(std::ostream& out, const net::Network& net, const JabrModel& model, std::span<const double> x) {
  const auto ex = check_exactness(model, x);
  out << "line,from,to,cii,cjj,cij,sij,residual\n";
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    out << fmt::format("{},{},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.3e}\n", l, net.lines[l].from, net.lines[l].to,
                       x[model.cii[model.line_from[l]]], x[model.cii[model.line_to[l]]], x[model.cij[l]],
                       x[model.sij[l]], ex.line_residual[l]);
  }
}

}  // namespace radopf::jabr
