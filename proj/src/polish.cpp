#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>

#include <Eigen/Dense>

#include "radopf/bnb.hpp"
#include "radopf/errors.hpp"

namespace radopf::bnb {

namespace {

using cplx = std::complex<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Power flow in polar coordinates over u = (vm, va without the slack, pg, qg).
class PowerFlow {
 public:
  explicit PowerFlow(const net::Network& net) : net_(net), nb_(static_cast<int>(net.buses.size())) {
    ng_ = static_cast<int>(net.generators.size());
    slack_ = jabr::slack_bus(net);
    const auto adm = net::admittance(net);
    Y_.resize(nb_, nb_);
    for (int i = 0; i < nb_; ++i) {
      for (int k = 0; k < nb_; ++k) Y_(i, k) = cplx(adm.G(i, k), adm.B(i, k));
    }
    va_col_.assign(nb_, -1);
    int col = nb_;
    for (int i = 0; i < nb_; ++i) {
      if (i != slack_) va_col_[i] = col++;
    }
    pg0_ = col;
    qg0_ = col + ng_;
    n_ = qg0_ + ng_;
    lo_.resize(n_);
    hi_.resize(n_);
    for (int i = 0; i < nb_; ++i) {
      lo_(i) = net.buses[i].vmin;
      hi_(i) = net.buses[i].vmax;
      if (va_col_[i] >= 0) {
        lo_(va_col_[i]) = -conic::kInf;
        hi_(va_col_[i]) = conic::kInf;
      }
    }
    for (int g = 0; g < ng_; ++g) {
      const auto& gen = net.generators[g];
      gen_bus_.push_back(net.index(gen.bus));
      lo_(pg0_ + g) = gen.pmin;
      hi_(pg0_ + g) = gen.pmax;
      lo_(qg0_ + g) = gen.qmin;
      hi_(qg0_ + g) = gen.qmax;
    }
  }

  int size() const { return n_; }
  const VectorXd& lower() const { return lo_; }
  const VectorXd& upper() const { return hi_; }

  VectorXd pack(const jabr::OpfPoint& pt) const {
    VectorXd u(n_);
    for (int i = 0; i < nb_; ++i) {
      u(i) = pt.vm[i];
      if (va_col_[i] >= 0) u(va_col_[i]) = pt.va[i] - pt.va[slack_];
    }
    for (int g = 0; g < ng_; ++g) {
      u(pg0_ + g) = pt.pg[g];
      u(qg0_ + g) = pt.qg[g];
    }
    return u;
  }

  jabr::OpfPoint unpack(const VectorXd& u) const {
    jabr::OpfPoint pt;
    pt.vm.resize(nb_);
    pt.va.assign(nb_, 0.0);
    for (int i = 0; i < nb_; ++i) {
      pt.vm[i] = u(i);
      if (va_col_[i] >= 0) pt.va[i] = u(va_col_[i]);
    }
    for (int g = 0; g < ng_; ++g) {
      pt.pg.push_back(u(pg0_ + g));
      pt.qg.push_back(u(qg0_ + g));
    }
    return pt;
  }

  Eigen::VectorXcd voltages(const VectorXd& u) const {
    Eigen::VectorXcd v(nb_);
    for (int i = 0; i < nb_; ++i) v(i) = std::polar(u(i), va_col_[i] >= 0 ? u(va_col_[i]) : 0.0);
    return v;
  }

  // rows 0..nb: active balance, nb..2nb: reactive balance
  VectorXd residual(const VectorXd& u) const {
    const auto v = voltages(u);
    const Eigen::VectorXcd cur = Y_ * v;
    VectorXd f(2 * nb_);
    for (int i = 0; i < nb_; ++i) {
      const cplx s = v(i) * std::conj(cur(i));
      f(i) = s.real() + net_.buses[i].pd;
      f(nb_ + i) = s.imag() + net_.buses[i].qd;
    }
    for (int g = 0; g < ng_; ++g) {
      f(gen_bus_[g]) -= u(pg0_ + g);
      f(nb_ + gen_bus_[g]) -= u(qg0_ + g);
    }
    return f;
  }

  MatrixXd jacobian(const VectorXd& u) const {
    const auto v = voltages(u);
    const Eigen::VectorXcd cur = Y_ * v;
    MatrixXd J = MatrixXd::Zero(2 * nb_, n_);
    for (int i = 0; i < nb_; ++i) {
      for (int k = 0; k < nb_; ++k) {
        // dS_i/dVa_k and dS_i/dVm_k
        const cplx dva = cplx(0.0, 1.0) * v(i) * std::conj((i == k ? cur(i) : 0.0) - Y_(i, k) * v(k));
        const cplx unit_k = v(k) / std::abs(v(k));
        cplx dvm = v(i) * std::conj(Y_(i, k) * unit_k);
        if (i == k) dvm += std::conj(cur(i)) * unit_k;
        J(i, k) = dvm.real();
        J(nb_ + i, k) = dvm.imag();
        if (va_col_[k] >= 0) {
          J(i, va_col_[k]) = dva.real();
          J(nb_ + i, va_col_[k]) = dva.imag();
        }
      }
    }
    for (int g = 0; g < ng_; ++g) {
      J(gen_bus_[g], pg0_ + g) = -1.0;
      J(nb_ + gen_bus_[g], qg0_ + g) = -1.0;
    }
    return J;
  }

  double cost(const VectorXd& u) const {
    double c = 0.0;
    for (int g = 0; g < ng_; ++g) c += net_.generators[g].cost(u(pg0_ + g));
    return c;
  }

  VectorXd cost_gradient(const VectorXd& u) const {
    VectorXd g = VectorXd::Zero(n_);
    for (int k = 0; k < ng_; ++k) {
      const auto& c = net_.generators[k].cost;
      g(pg0_ + k) = c.c1 + 2.0 * c.c2 * u(pg0_ + k);
    }
    return g;
  }

  VectorXd clamp(const VectorXd& u) const { return u.cwiseMax(lo_).cwiseMin(hi_); }

 private:
  const net::Network& net_;
  int nb_ = 0, ng_ = 0, slack_ = 0, n_ = 0, pg0_ = 0, qg0_ = 0;
  Eigen::MatrixXcd Y_;
  std::vector<int> va_col_, gen_bus_;
  VectorXd lo_, hi_;
};

constexpr double kRestoreTol = 1e-11;

// Gauss-Newton step that respects the bounds: min |f + J d|^2 + mu |d|^2 over
// lo <= u + d <= hi, with held coordinates kept in place. Primal active set.
std::optional<VectorXd> bounded_step(const PowerFlow& pf, const VectorXd& u, const VectorXd& f, const MatrixXd& J,
                                     const std::vector<char>& fixed, double mu) {
  const int n = pf.size();
  const MatrixXd H = J.transpose() * J + mu * MatrixXd::Identity(n, n);
  const VectorXd c = J.transpose() * f;
  VectorXd lo(n), hi(n);
  for (int k = 0; k < n; ++k) {
    lo(k) = fixed[k] ? 0.0 : std::min(0.0, pf.lower()(k) - u(k));
    hi(k) = fixed[k] ? 0.0 : std::max(0.0, pf.upper()(k) - u(k));
  }
  VectorXd d = VectorXd::Zero(n);
  std::vector<char> active(n, 0);
  for (int k = 0; k < n; ++k) active[k] = lo(k) == hi(k);
  for (int it = 0; it < 4 * n + 10; ++it) {
    std::vector<int> free;
    for (int k = 0; k < n; ++k) {
      if (!active[k]) free.push_back(k);
    }
    const int m = static_cast<int>(free.size());
    VectorXd target = d;
    if (m > 0) {
      MatrixXd Hf(m, m);
      VectorXd rhs(m);
      for (int a = 0; a < m; ++a) {
        rhs(a) = -c(free[a]);
        for (int k = 0; k < n; ++k) {
          if (active[k]) rhs(a) -= H(free[a], k) * d(k);
        }
        for (int b = 0; b < m; ++b) Hf(a, b) = H(free[a], free[b]);
      }
      const VectorXd x = Hf.ldlt().solve(rhs);
      if (!x.allFinite()) return std::nullopt;
      for (int a = 0; a < m; ++a) target(free[a]) = x(a);
    }
    const VectorXd p = target - d;
    double alpha = 1.0;
    int block = -1;
    for (int k : free) {
      if (p(k) < 0.0 && d(k) + p(k) < lo(k)) {
        const double a = (lo(k) - d(k)) / p(k);
        if (a < alpha) alpha = a, block = k;
      } else if (p(k) > 0.0 && d(k) + p(k) > hi(k)) {
        const double a = (hi(k) - d(k)) / p(k);
        if (a < alpha) alpha = a, block = k;
      }
    }
    d += alpha * p;
    if (block >= 0) {
      d(block) = p(block) < 0.0 ? lo(block) : hi(block);
      active[block] = 1;
      continue;
    }
    const VectorXd g = H * d + c;
    int release = -1;
    double worst = 0.0;
    for (int k = 0; k < n; ++k) {
      if (!active[k] || lo(k) == hi(k)) continue;
      const double wrong = d(k) <= lo(k) ? -g(k) : g(k);
      if (wrong > worst) worst = wrong, release = k;
    }
    if (release < 0) return d;
    active[release] = 0;
  }
  return d;
}

// Damped minimum-norm Newton steps, falling back to bounded Gauss-Newton steps
// when a bound blocks progress. Coordinates in `fixed` are held throughout.
bool restore(const PowerFlow& pf, VectorXd& u, const std::vector<char>& fixed) {
  const int n = pf.size();
  VectorXd f = pf.residual(u);
  auto try_step = [&](const VectorXd& d) {
    double alpha = 1.0;
    for (int ls = 0; ls < 20; ++ls, alpha *= 0.5) {
      const VectorXd trial = pf.clamp(u + alpha * d);
      const VectorXd ft = pf.residual(trial);
      if (ft.norm() < (1.0 - 1e-4 * alpha) * f.norm()) {
        u = trial;
        f = ft;
        return true;
      }
    }
    return false;
  };
  double mu = 1e-10;
  for (int it = 0; it < 40; ++it) {
    if (f.lpNorm<Eigen::Infinity>() < kRestoreTol) return true;
    MatrixXd J = pf.jacobian(u);
    for (int k = 0; k < n; ++k) {
      if (fixed[k]) J.col(k).setZero();
    }
    const MatrixXd JJ = J * J.transpose() + 1e-14 * MatrixXd::Identity(J.rows(), J.rows());
    const VectorXd d = J.transpose() * JJ.ldlt().solve(-f);
    if (d.allFinite() && try_step(d)) continue;
    bool moved = false;
    for (; mu <= 1e-2 && !moved; mu *= 1e4) {
      const auto b = bounded_step(pf, u, f, J, fixed, mu);
      moved = b && try_step(*b);
    }
    if (!moved) return false;
    mu = 1e-10;
  }
  return f.lpNorm<Eigen::Infinity>() < kRestoreTol;
}

// Cost descent along the tangent space of the balance equations.
void descend(const PowerFlow& pf, VectorXd& u) {
  const int n = pf.size();
  const auto& lo = pf.lower();
  const auto& hi = pf.upper();
  double step = -1.0;
  double cost = pf.cost(u);
  for (int it = 0; it < 80; ++it) {
    const MatrixXd J0 = pf.jacobian(u);
    const VectorXd g = pf.cost_gradient(u);
    std::vector<char> fixed(n, 0);
    VectorXd d;
    for (int pass = 0; pass <= n; ++pass) {
      MatrixXd J = J0;
      VectorXd gf = g;
      for (int k = 0; k < n; ++k) {
        if (fixed[k]) {
          J.col(k).setZero();
          gf(k) = 0.0;
        }
      }
      const MatrixXd JJ = J * J.transpose() + 1e-12 * MatrixXd::Identity(J.rows(), J.rows());
      d = -(gf - J.transpose() * JJ.ldlt().solve(J * gf));
      bool changed = false;
      for (int k = 0; k < n; ++k) {
        if (fixed[k]) continue;
        const double span = 1e-9 * std::max(1.0, std::abs(u(k)));
        if ((d(k) < 0.0 && u(k) <= lo(k) + span) || (d(k) > 0.0 && u(k) >= hi(k) - span)) {
          fixed[k] = 1;
          changed = true;
        }
      }
      if (!changed) break;
    }
    const double dn = d.lpNorm<Eigen::Infinity>();
    if (!(dn > 1e-12)) return;
    double amax = conic::kInf;
    for (int k = 0; k < n; ++k) {
      if (d(k) < 0.0) amax = std::min(amax, (lo(k) - u(k)) / d(k));
      if (d(k) > 0.0) amax = std::min(amax, (hi(k) - u(k)) / d(k));
    }
    if (step < 0.0) step = 0.02 / dn;
    bool accepted = false;
    for (int tries = 0; tries < 12; ++tries) {
      const double a = std::min(step, amax);
      VectorXd trial = pf.clamp(u + a * d);
      if (restore(pf, trial, fixed)) {
        const double c = pf.cost(trial);
        if (c < cost - 1e-12 * std::max(1.0, std::abs(cost))) {
          u = trial;
          cost = c;
          accepted = true;
          if (step <= amax) step *= 2.0;
          break;
        }
      }
      step = std::min(step, amax) * 0.25;
    }
    if (!accepted) return;
  }
}

jabr::OpfSolution make_solution(const net::Network& net, const jabr::OpfPoint& pt) {
  jabr::OpfSolution sol;
  sol.point = pt;
  const std::size_t nb = net.buses.size();
  for (std::size_t i = 0; i < nb; ++i) {
    sol.e.push_back(pt.vm[i] * std::cos(pt.va[i]));
    sol.f.push_back(pt.vm[i] * std::sin(pt.va[i]));
    sol.cii.push_back(pt.vm[i] * pt.vm[i]);
  }
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const int i = net.from_index(l), j = net.to_index(l);
    sol.cij.push_back(sol.e[i] * sol.e[j] + sol.f[i] * sol.f[j]);
    sol.sij.push_back(sol.e[i] * sol.f[j] - sol.e[j] * sol.f[i]);
  }
  sol.objective = jabr::opf_cost(net, pt.pg);
  sol.exactness.exact = true;
  return sol;
}

}  // namespace

std::optional<jabr::OpfSolution> polish_point(const net::Network& net, const jabr::OpfPoint& start, double tol) {
  const PowerFlow pf(net);
  VectorXd u = pf.clamp(pf.pack(start));
  if (!restore(pf, u, std::vector<char>(pf.size(), 0))) {
    // generation at mid-range, then also flat voltages
    const VectorXd mid = 0.5 * (pf.lower() + pf.upper());
    VectorXd alt = u;
    const int nb = static_cast<int>(net.buses.size());
    for (int k = 2 * nb - 1; k < pf.size(); ++k) alt(k) = std::isfinite(mid(k)) ? mid(k) : 0.0;
    bool ok = restore(pf, alt, std::vector<char>(pf.size(), 0));
    if (!ok) {
      for (int k = 0; k < nb; ++k) alt(k) = mid(k);
      for (int k = nb; k < 2 * nb - 1; ++k) alt(k) = 0.0;
      ok = restore(pf, alt, std::vector<char>(pf.size(), 0));
    }
    if (!ok) return std::nullopt;
    u = alt;
  }
  descend(pf, u);
  const auto pt = pf.unpack(u);
  if (!jabr::evaluate_opf_point(net, pt).feasible(tol)) return std::nullopt;
  return make_solution(net, pt);
}

std::optional<jabr::OpfSolution> local_polish(const net::Network& net, const jabr::JabrModel& model,
                                              std::span<const double> x, double tol) {
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t l = 0; l < model.cij.size(); ++l) {
    const double prod = y[model.cii[model.line_from[l]]] * y[model.cii[model.line_to[l]]];
    double& c = y[model.cij[l]];
    double& s = y[model.sij[l]];
    const double r = std::hypot(c, s);
    if (prod <= 0.0) return std::nullopt;
    if (r > 0.0) {
      c *= std::sqrt(prod) / r;
      s *= std::sqrt(prod) / r;
    } else {
      c = std::sqrt(prod);
    }
  }
  jabr::OpfSolution start;
  try {
    start = jabr::recover_angles(net, model, y, conic::kInf);
  } catch (const ModelError&) {
    return std::nullopt;
  }
  return polish_point(net, start.point, tol);
}

}  // namespace radopf::bnb
