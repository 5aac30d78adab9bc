#pragma once

// Brute-force reference solvers used only by the tests. They work directly on
// complex voltages and never touch the (c,s) model.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "radopf/jabr.hpp"
#include "radopf/netmodel.hpp"

namespace oracle {

using cplx = std::complex<double>;
using radopf::jabr::OpfPoint;
using radopf::net::Network;

struct Result {
  bool feasible = false;
  double value = std::numeric_limits<double>::infinity();
  OpfPoint point;
};

inline double linear_cost(const Network& net, const std::vector<double>& pg) {
  double v = 0.0;
  for (std::size_t g = 0; g < pg.size(); ++g) v += net.generators[g].cost(pg[g]);
  return v;
}

// Chain b0 - b1 - ... - b(n-1) given by the line list, one generator at b0 and
// loads elsewhere. Fixing |V|^2 at the far end determines everything else by a
// backward sweep.
struct ChainPath {
  std::vector<int> order;  // bus positions from the generator outwards
  std::vector<int> via;    // line between order[k] and order[k+1]
};

inline ChainPath chain_path(const Network& net) {
  const int n = static_cast<int>(net.buses.size());
  if (net.generators.size() != 1 || net.lines.size() != static_cast<std::size_t>(n - 1)) {
    throw std::invalid_argument("chain oracle needs a path with one generator");
  }
  ChainPath p;
  p.order = {net.index(net.generators[0].bus)};
  std::vector<char> used(net.lines.size(), 0);
  while (static_cast<int>(p.order.size()) < n) {
    bool found = false;
    for (std::size_t l = 0; l < net.lines.size() && !found; ++l) {
      if (used[l]) continue;
      const int a = net.from_index(l), b = net.to_index(l);
      if (a == p.order.back() || b == p.order.back()) {
        used[l] = 1;
        p.order.push_back(a == p.order.back() ? b : a);
        p.via.push_back(static_cast<int>(l));
        found = true;
      }
    }
    if (!found) throw std::invalid_argument("chain oracle needs a path starting at the generator bus");
  }
  return p;
}

// Feasible point with |V_last|^2 = c, if there is one.
inline std::optional<OpfPoint> chain_sweep(const Network& net, const ChainPath& path, double c) {
  const int n = static_cast<int>(net.buses.size());
  const auto& order = path.order;
  const auto& gen = net.generators[0];
  std::vector<cplx> v(n);
  v[order.back()] = std::sqrt(c);
  cplx current = 0.0;
  for (int j = n - 1; j > 0; --j) {
    const int bus = order[j];
    const auto& b = net.buses[bus];
    const cplx s = cplx(b.pd, b.qd) + std::conj(cplx(b.gsh, b.bsh)) * std::norm(v[bus]);
    current += std::conj(s / v[bus]);
    const auto& line = net.lines[path.via[j - 1]];
    v[order[j - 1]] = v[bus] + cplx(line.r, line.x) * current;
    const double m = std::abs(v[order[j - 1]]);
    const auto& up = net.buses[order[j - 1]];
    if (m < up.vmin || m > up.vmax) return std::nullopt;
  }
  const auto& b0 = net.buses[order[0]];
  const cplx sg = v[order[0]] * std::conj(current) + cplx(b0.pd, b0.qd) +
                  std::conj(cplx(b0.gsh, b0.bsh)) * std::norm(v[order[0]]);
  if (sg.real() < gen.pmin || sg.real() > gen.pmax || sg.imag() < gen.qmin || sg.imag() > gen.qmax) {
    return std::nullopt;
  }
  OpfPoint pt;
  pt.vm.assign(n, 0.0);
  pt.va.assign(n, 0.0);
  const double ref = std::arg(v[order[0]]);
  for (int i = 0; i < n; ++i) {
    pt.vm[i] = std::abs(v[i]);
    pt.va[i] = std::arg(v[i]) - ref;
  }
  pt.pg = {sg.real()};
  pt.qg = {sg.imag()};
  return pt;
}

// Scans |V_last|^2 with step `res`.
inline Result chain(const Network& net, double res) {
  const auto path = chain_path(net);
  const auto& last = net.buses[path.order.back()];
  const double lo = last.vmin * last.vmin, hi = last.vmax * last.vmax;
  const long steps = std::max(1L, static_cast<long>(std::ceil((hi - lo) / res)));
  double best_c = lo;
  Result best;
  auto sweep = [&](double c) {
    auto pt = chain_sweep(net, path, c);
    if (!pt) return;
    const double value = linear_cost(net, pt->pg);
    if (value >= best.value) return;
    best.feasible = true;
    best.value = value;
    best.point = std::move(*pt);
    best_c = c;
  };
  for (long k = 0; k <= steps; ++k) sweep(std::min(hi, lo + static_cast<double>(k) * res));
  // the other coordinates can move faster than the scanned one, so the cells
  // next to the best sample are rescanned 100 times finer
  if (best.feasible) {
    const double c0 = best_c;
    for (int k = -100; k <= 100; ++k) sweep(std::clamp(c0 + k * res / 100.0, lo, hi));
  }
  return best;
}

// Every feasible point found on an even scan with `samples` steps.
inline std::vector<OpfPoint> chain_points(const Network& net, long samples) {
  const auto path = chain_path(net);
  const auto& last = net.buses[path.order.back()];
  const double lo = last.vmin * last.vmin, hi = last.vmax * last.vmax;
  std::vector<OpfPoint> out;
  for (long k = 0; k <= samples; ++k) {
    if (auto pt = chain_sweep(net, path, lo + (hi - lo) * static_cast<double>(k) / samples)) out.push_back(*pt);
  }
  return out;
}

// Two buses, a generator at each: random magnitudes and angle difference in
// [-max_angle, max_angle], kept when both generators can cover their bus.
template <class Rng>
std::vector<OpfPoint> two_bus_points(const Network& net, Rng& rng, long tries, double max_angle = 0.3) {
  if (net.buses.size() != 2 || net.lines.size() != 1 || net.generators.size() != 2) {
    throw std::invalid_argument("two-bus sampler needs one generator per bus");
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto y = radopf::net::admittance(net);
  const auto by_bus = net.generators_by_bus();
  std::vector<OpfPoint> out;
  for (long t = 0; t < tries; ++t) {
    OpfPoint pt;
    for (int i = 0; i < 2; ++i) pt.vm.push_back(net.buses[i].vmin + u(rng) * (net.buses[i].vmax - net.buses[i].vmin));
    pt.va = {0.0, (2.0 * u(rng) - 1.0) * max_angle};
    std::array<cplx, 2> v{std::polar(pt.vm[0], pt.va[0]), std::polar(pt.vm[1], pt.va[1])};
    pt.pg.assign(2, 0.0);
    pt.qg.assign(2, 0.0);
    bool ok = true;
    for (int i = 0; i < 2 && ok; ++i) {
      cplx cur = 0.0;
      for (int k = 0; k < 2; ++k) cur += cplx(y.G(i, k), y.B(i, k)) * v[k];
      const cplx s = v[i] * std::conj(cur) + cplx(net.buses[i].pd, net.buses[i].qd);
      const int g = by_bus[i].at(0);
      const auto& gen = net.generators[g];
      ok = s.real() >= gen.pmin && s.real() <= gen.pmax && s.imag() >= gen.qmin && s.imag() <= gen.qmax;
      pt.pg[g] = s.real();
      pt.qg[g] = s.imag();
    }
    if (ok) out.push_back(std::move(pt));
  }
  return out;
}

// Two buses with fixed magnitudes. Every injection is a + b cos d + c sin d in
// the angle difference d, so the optimum sits at a constraint root on the
// circle or at the objective's minimiser.
inline Result two_bus_fixed(const Network& net, double vm1, double vm2) {
  if (net.buses.size() != 2) throw std::invalid_argument("two-bus oracle");
  const auto y = radopf::net::admittance(net);
  const auto by_bus = net.generators_by_bus();
  for (const auto& g : net.generators) {
    if (!g.cost.is_linear()) throw std::invalid_argument("two-bus oracle needs linear costs");
  }
  for (const auto& list : by_bus) {
    if (list.size() > 1) throw std::invalid_argument("two-bus oracle needs at most one generator per bus");
  }
  auto injection = [&](double d) {
    const cplx v[2] = {std::polar(vm1, d), cplx(vm2, 0.0)};
    std::array<cplx, 2> s;
    for (int i = 0; i < 2; ++i) {
      cplx yi = 0.0;
      for (int k = 0; k < 2; ++k) yi += cplx(y.G(i, k), y.B(i, k)) * v[k];
      s[i] = v[i] * std::conj(yi);
    }
    return s;
  };
  struct Sinusoid {
    double a, b, c;
    double operator()(double d) const { return a + b * std::cos(d) + c * std::sin(d); }
  };
  auto fit = [&](auto pick) {
    const double f0 = pick(injection(0.0)), fpi = pick(injection(std::numbers::pi)),
                 fh = pick(injection(0.5 * std::numbers::pi));
    const double a = 0.5 * (f0 + fpi);
    return Sinusoid{a, f0 - a, fh - a};
  };
  struct Bound {
    Sinusoid f;
    double lo, hi;
  };
  std::vector<Bound> bounds;
  Sinusoid objective{0.0, 0.0, 0.0};
  for (int i = 0; i < 2; ++i) {
    const auto& b = net.buses[i];
    auto p = fit([i](const std::array<cplx, 2>& s) { return s[i].real(); });
    auto q = fit([i](const std::array<cplx, 2>& s) { return s[i].imag(); });
    p.a += b.pd;
    q.a += b.qd;
    if (by_bus[i].empty()) {
      bounds.push_back({p, 0.0, 0.0});
      bounds.push_back({q, 0.0, 0.0});
    } else {
      const auto& g = net.generators[by_bus[i][0]];
      bounds.push_back({p, g.pmin, g.pmax});
      bounds.push_back({q, g.qmin, g.qmax});
      objective.a += g.cost.c0 + g.cost.c1 * p.a;
      objective.b += g.cost.c1 * p.b;
      objective.c += g.cost.c1 * p.c;
    }
  }
  std::vector<double> cand{std::atan2(objective.c, objective.b) + std::numbers::pi};
  auto roots = [&](const Sinusoid& f, double level) {
    const double r = std::hypot(f.b, f.c);
    if (r == 0.0) return;
    const double t = (level - f.a) / r;
    if (std::abs(t) > 1.0) return;
    const double phi = std::atan2(f.c, f.b), w = std::acos(t);
    cand.push_back(phi + w);
    cand.push_back(phi - w);
  };
  for (const auto& b : bounds) {
    if (std::isfinite(b.lo)) roots(b.f, b.lo);
    if (std::isfinite(b.hi)) roots(b.f, b.hi);
  }
  Result best;
  constexpr double tol = 1e-9;
  for (double d : cand) {
    d = std::remainder(d, 2.0 * std::numbers::pi);
    bool ok = true;
    for (const auto& b : bounds) {
      const double f = b.f(d);
      if (f < b.lo - tol || f > b.hi + tol) ok = false;
    }
    if (!ok) continue;
    const double value = objective(d);
    if (value < best.value) {
      best.feasible = true;
      best.value = value;
      best.point.vm = {vm1, vm2};
      best.point.va = {d, 0.0};
      const auto s = injection(d);
      best.point.pg.assign(net.generators.size(), 0.0);
      best.point.qg.assign(net.generators.size(), 0.0);
      for (int i = 0; i < 2; ++i) {
        if (by_bus[i].empty()) continue;
        best.point.pg[by_bus[i][0]] = s[i].real() + net.buses[i].pd;
        best.point.qg[by_bus[i][0]] = s[i].imag() + net.buses[i].qd;
      }
    }
  }
  return best;
}

// Two buses, at most one generator per bus, linear costs. In x = (c11, c22,
// c12, s12) every constraint is linear and the only nonlinearity is the
// surface c12^2 + s12^2 = c11 c22, so an optimum is a critical point of the
// objective on the surface intersected with some set of active constraints.
// All active sets of size 1..3 are enumerated and each gives at most two
// candidates in closed form.
inline Result two_bus_critical(const Network& net) {
  if (net.buses.size() != 2 || net.lines.size() != 1) throw std::invalid_argument("two-bus oracle");
  const auto by_bus = net.generators_by_bus();
  for (const auto& list : by_bus) {
    if (list.size() > 1) throw std::invalid_argument("two-bus oracle needs at most one generator per bus");
  }
  for (const auto& g : net.generators) {
    if (!g.cost.is_linear()) throw std::invalid_argument("two-bus oracle needs linear costs");
  }
  using Vec4 = Eigen::Vector4d;
  const auto y = radopf::net::admittance(net);
  // injections from e_i e_j + f_i f_j and e_i f_j - e_j f_i, with s12 = e1 f2 - e2 f1
  auto p_row = [&](int i) {
    Vec4 r = Vec4::Zero();
    const int j = 1 - i;
    const double sgn = i == 0 ? 1.0 : -1.0;
    r(i) = y.G(i, i);
    r(2) = y.G(i, j);
    r(3) = -y.B(i, j) * sgn;
    return r;
  };
  auto q_row = [&](int i) {
    Vec4 r = Vec4::Zero();
    const int j = 1 - i;
    const double sgn = i == 0 ? 1.0 : -1.0;
    r(i) = -y.B(i, i);
    r(2) = -y.B(i, j);
    r(3) = -y.G(i, j) * sgn;
    return r;
  };
  struct Row {
    Vec4 a;
    double b;  // a.x <= b
  };
  std::vector<Row> eq, ineq;
  auto add_range = [&](const Vec4& a, double lo, double hi) {
    if (lo == hi) {
      eq.push_back({a, lo});
      return;
    }
    if (std::isfinite(hi)) ineq.push_back({a, hi});
    if (std::isfinite(lo)) ineq.push_back({-a, -lo});
  };
  Vec4 cost = Vec4::Zero();
  double cost0 = 0.0;
  for (int i = 0; i < 2; ++i) {
    const auto& b = net.buses[i];
    Vec4 e = Vec4::Zero();
    e(i) = 1.0;
    add_range(e, b.vmin * b.vmin, b.vmax * b.vmax);
    // injection + load = generation
    double pmin = 0, pmax = 0, qmin = 0, qmax = 0;
    if (!by_bus[i].empty()) {
      const auto& g = net.generators[by_bus[i][0]];
      pmin = g.pmin, pmax = g.pmax, qmin = g.qmin, qmax = g.qmax;
      cost += g.cost.c1 * p_row(i);
      cost0 += g.cost.c0 + g.cost.c1 * b.pd;
    }
    add_range(p_row(i), pmin - b.pd, pmax - b.pd);
    add_range(q_row(i), qmin - b.qd, qmax - b.qd);
  }
  Eigen::Matrix4d M = Eigen::Matrix4d::Zero();  // x'Mx = c12^2 + s12^2 - c11 c22
  M(2, 2) = M(3, 3) = 1.0;
  M(0, 1) = M(1, 0) = -0.5;

  Result best;
  auto consider = [&](const Vec4& x) {
    constexpr double tol = 1e-9;
    if (x(0) <= 0.0 || x(1) <= 0.0) return;
    for (const auto& r : eq) {
      if (std::abs(r.a.dot(x) - r.b) > tol * std::max(1.0, std::abs(r.b))) return;
    }
    for (const auto& r : ineq) {
      if (r.a.dot(x) > r.b + tol * std::max(1.0, std::abs(r.b))) return;
    }
    if (std::abs(x.dot(M * x)) > 1e-9) return;
    const double value = cost.dot(x) + cost0;
    if (value >= best.value) return;
    best.feasible = true;
    best.value = value;
    best.point.vm = {std::sqrt(x(0)), std::sqrt(x(1))};
    best.point.va = {0.0, std::atan2(x(3), x(2))};
    best.point.pg.assign(net.generators.size(), 0.0);
    best.point.qg.assign(net.generators.size(), 0.0);
    for (int i = 0; i < 2; ++i) {
      if (by_bus[i].empty()) continue;
      best.point.pg[by_bus[i][0]] = p_row(i).dot(x) + net.buses[i].pd;
      best.point.qg[by_bus[i][0]] = q_row(i).dot(x) + net.buses[i].qd;
    }
  };
  // real roots of a t^2 + b t + c = 0
  auto roots = [](double a, double b, double c) {
    std::vector<double> t;
    if (std::abs(a) < 1e-14 * (std::abs(b) + std::abs(c) + 1e-300)) {
      if (b != 0.0) t.push_back(-c / b);
      return t;
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return t;
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    if (q != 0.0) t.push_back(c / q);
    t.push_back(q / a);
    return t;
  };

  const int ni = static_cast<int>(ineq.size());
  std::vector<int> active;
  auto solve_active = [&]() {
    const int k = static_cast<int>(eq.size() + active.size());
    if (k < 1 || k > 3) return;
    Eigen::MatrixXd A(k, 4);
    Eigen::VectorXd b(k);
    int r = 0;
    for (const auto& row : eq) A.row(r) = row.a.transpose(), b(r++) = row.b;
    for (int idx : active) A.row(r) = ineq[idx].a.transpose(), b(r++) = ineq[idx].b;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.rank() < k) return;
    const Vec4 x0 = A.transpose() * (A * A.transpose()).ldlt().solve(b);
    const Eigen::MatrixXd N = lu.kernel();
    const int m = static_cast<int>(N.cols());
    const Eigen::MatrixXd Q = N.transpose() * M * N;
    const Eigen::VectorXd g = 2.0 * N.transpose() * M * x0;
    const double h0 = x0.dot(M * x0);
    if (m == 1) {
      for (double t : roots(Q(0, 0), g(0), h0)) consider(x0 + N.col(0) * t);
      return;
    }
    // a = lambda (2 Q u + g)  =>  u = Q^-1 (mu a - g) / 2 with mu = 1/lambda
    const Eigen::VectorXd a = N.transpose() * cost;
    Eigen::FullPivLU<Eigen::MatrixXd> qlu(Q);
    if (!qlu.isInvertible()) return;
    const Eigen::VectorXd ua = 0.5 * qlu.solve(a), ug = -0.5 * qlu.solve(g);
    // h(u) = u'Qu + g'u + h0 with u = mu ua + ug
    const double c2 = ua.dot(Q * ua);
    const double c1 = 2.0 * ua.dot(Q * ug) + g.dot(ua);
    const double c0 = ug.dot(Q * ug) + g.dot(ug) + h0;
    for (double mu : roots(c2, c1, c0)) consider(x0 + N * (mu * ua + ug));
  };
  solve_active();
  for (int i = 0; i < ni; ++i) {
    active = {i};
    solve_active();
    for (int j = i + 1; j < ni; ++j) {
      active = {i, j};
      solve_active();
      for (int l = j + 1; l < ni; ++l) {
        active = {i, j, l};
        solve_active();
      }
    }
  }
  return best;
}

}  // namespace oracle
