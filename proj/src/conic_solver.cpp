// Homogeneous self-dual interior point method for
//
//   minimize c'x  subject to  A x = b,  G x + s = h,  s in K
//
// where K is a product of a nonnegative orthant and second-order cones.
// Search directions use Nesterov-Todd scaling and a Mehrotra
// predictor-corrector; the KKT system is reduced to the (x, y) block and
// solved with two Cholesky factorizations plus iterative refinement.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

#include "radopf/conic.hpp"

namespace radopf::conic {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Compiled {
  int n = 0;
  VectorXd c;
  double c_scale = 1.0;
  double obj_offset = 0.0;
  MatrixXd A;
  VectorXd b;
  MatrixXd G;
  VectorXd h;
  int lp_rows = 0;
  std::vector<int> soc_dims;
  std::vector<int> var_map;  // program var -> solver column, or -1 if fixed
  std::vector<double> fixed_value;
  std::vector<int> eq_map;  // program equality row -> compiled row, or -1
  bool trivially_infeasible = false;
};

class Builder {
 public:
  explicit Builder(const Compiled& c) : cp_(c) {}

  // Returns the row over solver columns and the folded constant.
  std::pair<VectorXd, double> row(const AffineExpr& e) const {
    VectorXd r = VectorXd::Zero(cp_.n);
    double k = e.constant;
    for (const auto& t : e.terms) {
      const int col = cp_.var_map[t.var];
      if (col < 0) {
        k += t.coef * cp_.fixed_value[t.var];
      } else {
        r(col) += t.coef;
      }
    }
    return {r, k};
  }

 private:
  const Compiled& cp_;
};

Compiled compile(const ConicProgram& prog) {
  Compiled cp;
  const int nv = prog.num_variables();
  cp.var_map.assign(nv, -1);
  cp.fixed_value.assign(nv, 0.0);
  const auto& lin = prog.objective_linear();
  const auto& quad = prog.objective_quadratic();

  int n = 0;
  for (int i = 0; i < nv; ++i) {
    const double lb = prog.lower(i), ub = prog.upper(i);
    if (std::isfinite(lb) && lb == ub) {
      cp.fixed_value[i] = lb;
      cp.obj_offset += (quad[i] * lb + lin[i]) * lb;
    } else {
      cp.var_map[i] = n++;
    }
  }
  // epigraph variables for quadratic terms
  std::vector<std::pair<int, int>> epi;  // (program var, epigraph column)
  for (int i = 0; i < nv; ++i) {
    if (quad[i] > 0.0 && cp.var_map[i] >= 0) epi.emplace_back(i, n++);
  }
  cp.n = n;
  cp.obj_offset += prog.objective_constant();

  cp.c = VectorXd::Zero(n);
  for (int i = 0; i < nv; ++i) {
    if (cp.var_map[i] >= 0) cp.c(cp.var_map[i]) = lin[i];
  }
  for (const auto& [v, col] : epi) cp.c(col) = 1.0;
  const double cmax = cp.c.size() ? cp.c.cwiseAbs().maxCoeff() : 0.0;
  cp.c_scale = std::max(1.0, cmax);
  cp.c /= cp.c_scale;

  Builder bld(cp);
  constexpr double kTrivialTol = 1e-9;

  // equalities
  std::vector<VectorXd> arows;
  std::vector<double> bvals;
  cp.eq_map.assign(prog.equalities().size(), -1);
  for (std::size_t r = 0; r < prog.equalities().size(); ++r) {
    auto [a, k] = bld.row(prog.equalities()[r].expr);
    if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0) {
      if (std::abs(k) > kTrivialTol) cp.trivially_infeasible = true;
      continue;
    }
    cp.eq_map[r] = static_cast<int>(arows.size());
    arows.push_back(std::move(a));
    bvals.push_back(-k);
  }
  cp.A.resize(static_cast<Eigen::Index>(arows.size()), n);
  cp.b.resize(static_cast<Eigen::Index>(arows.size()));
  for (std::size_t r = 0; r < arows.size(); ++r) {
    cp.A.row(static_cast<Eigen::Index>(r)) = arows[r].transpose();
    cp.b(static_cast<Eigen::Index>(r)) = bvals[r];
  }

  // linear inequalities (rows g'x <= h) then cones
  std::vector<VectorXd> grows;
  std::vector<double> hvals;
  for (const auto& r : prog.inequalities()) {
    auto [a, k] = bld.row(r.expr);
    if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0) {
      if (k > kTrivialTol) cp.trivially_infeasible = true;
      continue;
    }
    grows.push_back(std::move(a));
    hvals.push_back(-k);
  }
  for (int i = 0; i < nv; ++i) {
    const int col = cp.var_map[i];
    if (col < 0) continue;
    if (std::isfinite(prog.lower(i))) {
      VectorXd a = VectorXd::Zero(n);
      a(col) = -1.0;
      grows.push_back(std::move(a));
      hvals.push_back(-prog.lower(i));
    }
    if (std::isfinite(prog.upper(i))) {
      VectorXd a = VectorXd::Zero(n);
      a(col) = 1.0;
      grows.push_back(std::move(a));
      hvals.push_back(prog.upper(i));
    }
  }
  cp.lp_rows = static_cast<int>(grows.size());

  // s = h - Gx must equal the affine expression, so G = -a, h = k.
  auto push_soc_row = [&](const VectorXd& a, double k) {
    grows.push_back(-a);
    hvals.push_back(k);
  };
  for (const auto& cone : prog.cones()) {
    auto [au, ku] = bld.row(cone.u);
    auto [aw, kw] = bld.row(cone.w);
    push_soc_row(0.5 * (au + aw), 0.5 * (ku + kw));
    push_soc_row(0.5 * (au - aw), 0.5 * (ku - kw));
    for (const auto& z : cone.z) {
      auto [az, kz] = bld.row(z);
      push_soc_row(az, kz);
    }
    cp.soc_dims.push_back(2 + static_cast<int>(cone.z.size()));
  }
  for (const auto& [v, col] : epi) {
    // ||sqrt(q) x||^2 <= t * 1
    VectorXd at = VectorXd::Zero(n);
    at(col) = 1.0;
    VectorXd ax = VectorXd::Zero(n);
    ax(cp.var_map[v]) = std::sqrt(quad[v]);
    push_soc_row(0.5 * at, 0.5);
    push_soc_row(0.5 * at, -0.5);
    push_soc_row(ax, 0.0);
    cp.soc_dims.push_back(3);
  }

  cp.G.resize(static_cast<Eigen::Index>(grows.size()), n);
  cp.h.resize(static_cast<Eigen::Index>(grows.size()));
  for (std::size_t r = 0; r < grows.size(); ++r) {
    cp.G.row(static_cast<Eigen::Index>(r)) = grows[r].transpose();
    cp.h(static_cast<Eigen::Index>(r)) = hvals[r];
  }
  return cp;
}

// ---------------------------------------------------------------------------
// Cone algebra over K = R^l_+ x Q^{q1} x ... x Q^{qk}

class Cone {
 public:
  Cone(int lp, std::vector<int> soc) : lp_(lp), soc_(std::move(soc)) {
    int off = lp_;
    for (int d : soc_) {
      offsets_.push_back(off);
      off += d;
    }
    dim_ = off;
  }

  int dim() const { return dim_; }
  int degree() const { return lp_ + static_cast<int>(soc_.size()); }

  VectorXd identity() const {
    VectorXd e = VectorXd::Zero(dim_);
    e.head(lp_).setOnes();
    for (int off : offsets_) e(off) = 1.0;
    return e;
  }

  // Smallest alpha >= 0 with v + alpha*e in the cone boundary, i.e. how far v
  // is from being interior (negative when interior).
  double interior_margin(const VectorXd& v) const {
    double a = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < lp_; ++i) a = std::max(a, -v(i));
    for (std::size_t k = 0; k < soc_.size(); ++k) {
      const int off = offsets_[k], d = soc_[k];
      a = std::max(a, v.segment(off + 1, d - 1).norm() - v(off));
    }
    return a;
  }

  // Jordan product u o v.
  VectorXd product(const VectorXd& u, const VectorXd& v) const {
    VectorXd r(dim_);
    r.head(lp_) = u.head(lp_).cwiseProduct(v.head(lp_));
    for (std::size_t k = 0; k < soc_.size(); ++k) {
      const int off = offsets_[k], d = soc_[k];
      const double u0 = u(off), v0 = v(off);
      r(off) = u.segment(off, d).dot(v.segment(off, d));
      r.segment(off + 1, d - 1) = u0 * v.segment(off + 1, d - 1) + v0 * u.segment(off + 1, d - 1);
    }
    return r;
  }

  // Solves lambda o x = r for x.
  VectorXd divide(const VectorXd& lambda, const VectorXd& r) const {
    VectorXd x(dim_);
    x.head(lp_) = r.head(lp_).cwiseQuotient(lambda.head(lp_));
    for (std::size_t k = 0; k < soc_.size(); ++k) {
      const int off = offsets_[k], d = soc_[k];
      const double l0 = lambda(off);
      const auto l1 = lambda.segment(off + 1, d - 1);
      const double det = (l0 - l1.norm()) * (l0 + l1.norm());
      const double r0 = r(off);
      const auto r1 = r.segment(off + 1, d - 1);
      const double x0 = (l0 * r0 - l1.dot(r1)) / det;
      x(off) = x0;
      x.segment(off + 1, d - 1) = (r1 - l1 * x0) / l0;
    }
    return x;
  }

  // Largest step alpha (possibly +inf) with u + alpha*du in the cone.
  double max_step(const VectorXd& u, const VectorXd& du) const {
    double alpha = std::numeric_limits<double>::infinity();
    for (int i = 0; i < lp_; ++i) {
      if (du(i) < 0.0) alpha = std::min(alpha, -u(i) / du(i));
    }
    for (std::size_t k = 0; k < soc_.size(); ++k) {
      const int off = offsets_[k], d = soc_[k];
      const double u0 = u(off), d0 = du(off);
      const auto u1 = u.segment(off + 1, d - 1);
      const auto d1 = du.segment(off + 1, d - 1);
      const double a = d0 * d0 - d1.squaredNorm();
      const double b = 2.0 * (u0 * d0 - u1.dot(d1));
      const double c = std::max(0.0, (u0 - u1.norm()) * (u0 + u1.norm()));
      const double disc = b * b - 4.0 * a * c;
      double ak = std::numeric_limits<double>::infinity();
      if (a < 0.0 || (a > 0.0 && b < 0.0 && disc >= 0.0)) {
        const double denom = -b + std::sqrt(std::max(0.0, disc));
        ak = denom > 0.0 ? 2.0 * c / denom : 0.0;
      } else if (a == 0.0 && b < 0.0) {
        ak = -c / b;
      }
      if (d0 < 0.0) ak = std::min(ak, -u0 / d0);
      alpha = std::min(alpha, ak);
    }
    return alpha;
  }

  int lp() const { return lp_; }
  const std::vector<int>& soc() const { return soc_; }
  const std::vector<int>& offsets() const { return offsets_; }

 private:
  int lp_;
  std::vector<int> soc_;
  std::vector<int> offsets_;
  int dim_ = 0;
};

// Nesterov-Todd scaling W (symmetric, block diagonal) with W z = W^{-1} s.
struct Scaling {
  VectorXd lp_d;                // W = diag(lp_d) on the orthant
  std::vector<double> eta;      // per SOC block
  std::vector<VectorXd> wbar;   // per SOC block, wbar' J wbar = 1

  static Scaling compute(const Cone& K, const VectorXd& s, const VectorXd& z) {
    Scaling w;
    const int l = K.lp();
    w.lp_d = (s.head(l).cwiseQuotient(z.head(l))).cwiseSqrt();
    for (std::size_t k = 0; k < K.soc().size(); ++k) {
      const int off = K.offsets()[k], d = K.soc()[k];
      const VectorXd sk = s.segment(off, d), zk = z.segment(off, d);
      const double sn = sk.tail(d - 1).norm(), zn = zk.tail(d - 1).norm();
      const double sres = std::max((sk(0) - sn) * (sk(0) + sn), 1e-300);
      const double zres = std::max((zk(0) - zn) * (zk(0) + zn), 1e-300);
      const VectorXd sb = sk / std::sqrt(sres);
      const VectorXd zb = zk / std::sqrt(zres);
      const double gamma = std::sqrt(std::max(0.5 * (1.0 + sb.dot(zb)), 1e-300));
      VectorXd wb(d);
      wb(0) = (sb(0) + zb(0)) / (2.0 * gamma);
      wb.tail(d - 1) = (sb.tail(d - 1) - zb.tail(d - 1)) / (2.0 * gamma);
      w.eta.push_back(std::pow(sres / zres, 0.25));
      w.wbar.push_back(std::move(wb));
    }
    return w;
  }

  // H(w) v with H(w) = [[w0, w1'], [w1, I + w1 w1'/(1+w0)]], or its inverse
  // H(Jw) when `inverse` is set.
  static VectorXd hyperbolic(const VectorXd& wb, const VectorXd& v, bool inverse) {
    const int d = static_cast<int>(wb.size());
    const double w0 = wb(0);
    VectorXd w1 = wb.tail(d - 1);
    if (inverse) w1 = -w1;
    VectorXd r(d);
    const double t = w1.dot(v.tail(d - 1));
    r(0) = w0 * v(0) + t;
    r.tail(d - 1) = v.tail(d - 1) + w1 * (v(0) + t / (1.0 + w0));
    return r;
  }

  VectorXd apply(const Cone& K, const VectorXd& v, bool inverse) const {
    VectorXd r(v.size());
    const int l = K.lp();
    if (inverse) {
      r.head(l) = v.head(l).cwiseQuotient(lp_d);
    } else {
      r.head(l) = v.head(l).cwiseProduct(lp_d);
    }
    for (std::size_t k = 0; k < K.soc().size(); ++k) {
      const int off = K.offsets()[k], d = K.soc()[k];
      const double f = inverse ? 1.0 / eta[k] : eta[k];
      r.segment(off, d) = f * hyperbolic(wbar[k], v.segment(off, d), inverse);
    }
    return r;
  }
};

// Solver for K [dx; dy; dz] = [bx; by; bz] with
// K = [[0, A', G'], [A, 0, 0], [G, 0, -W^2]].
// Eliminating dz leaves H = (W^{-1}G)'(W^{-1}G); H is factored through a QR
// decomposition of W^{-1}G so that the ill-conditioned W^{-2} is never formed.
class KktSolver {
 public:
  KktSolver(const Compiled& cp, const Cone& K) : cp_(cp), K_(K) {}

  bool factor(const Scaling& W) {
    W_ = &W;
    const int n = cp_.n;
    const int m = K_.dim();
    MatrixXd Gs(m + n, n);
    for (int j = 0; j < n; ++j) Gs.col(j).head(m) = W.apply(K_, cp_.G.col(j), true);
    Gs.bottomRows(n) = std::sqrt(kReg) * MatrixXd::Identity(n, n);
    Eigen::HouseholderQR<MatrixXd> qr(Gs);
    R_ = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    if (!R_.diagonal().allFinite() || R_.diagonal().cwiseAbs().minCoeff() == 0.0) return false;
    const int p = static_cast<int>(cp_.A.rows());
    if (p > 0) {
      // S = A H^{-1} A' = Y'Y with Y = R^{-T} A'
      MatrixXd Y(n + p, p);
      Y.topRows(n) = R_.transpose().triangularView<Eigen::Lower>().solve(cp_.A.transpose());
      Y.bottomRows(p) = std::sqrt(kReg) * MatrixXd::Identity(p, p);
      Eigen::HouseholderQR<MatrixXd> qs(Y);
      Rs_ = qs.matrixQR().topRows(p).triangularView<Eigen::Upper>();
      if (!Rs_.diagonal().allFinite() || Rs_.diagonal().cwiseAbs().minCoeff() == 0.0) return false;
    }
    return true;
  }

  void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& dx, VectorXd& dy,
             VectorXd& dz) const {
    solve_regularized(bx, by, bz, dx, dy, dz);
    for (int it = 0; it < 3; ++it) {
      // residual of the unregularized system
      const VectorXd rx = bx - cp_.A.transpose() * dy - cp_.G.transpose() * dz;
      const VectorXd ry = by - cp_.A * dx;
      const VectorXd rz = bz - (cp_.G * dx - W_->apply(K_, W_->apply(K_, dz, false), false));
      const double rn = std::max({rx.lpNorm<Eigen::Infinity>(), ry.size() ? ry.lpNorm<Eigen::Infinity>() : 0.0,
                                  rz.lpNorm<Eigen::Infinity>()});
      if (rn < 1e-14) break;
      VectorXd cx, cy, cz;
      solve_regularized(rx, ry, rz, cx, cy, cz);
      dx += cx;
      dy += cy;
      dz += cz;
    }
  }

 private:
  static constexpr double kReg = 1e-18;

  VectorXd h_solve(const VectorXd& v) const {
    const VectorXd t = R_.transpose().triangularView<Eigen::Lower>().solve(v);
    return R_.triangularView<Eigen::Upper>().solve(t);
  }

  void solve_regularized(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& dx, VectorXd& dy,
                         VectorXd& dz) const {
    // G'W^{-2} bz
    const VectorXd wb = W_->apply(K_, W_->apply(K_, bz, true), true);
    const VectorXd r1 = bx + cp_.G.transpose() * wb;
    const int p = static_cast<int>(cp_.A.rows());
    const VectorXd Hr1 = h_solve(r1);
    if (p > 0) {
      const VectorXd rhs = cp_.A * Hr1 - by;
      const VectorXd t = Rs_.transpose().triangularView<Eigen::Lower>().solve(rhs);
      dy = Rs_.triangularView<Eigen::Upper>().solve(t);
      dx = Hr1 - h_solve(cp_.A.transpose() * dy);
    } else {
      dy = VectorXd::Zero(0);
      dx = Hr1;
    }
    dz = W_->apply(K_, W_->apply(K_, cp_.G * dx - bz, true), true);
  }

  const Compiled& cp_;
  const Cone& K_;
  const Scaling* W_ = nullptr;
  MatrixXd R_, Rs_;
};

double safe_norm(const VectorXd& v) { return v.size() ? v.norm() : 0.0; }

ConicSolution finish(const ConicProgram& prog, const Compiled& cp, const VectorXd& x) {
  ConicSolution sol;
  sol.x.resize(prog.num_variables());
  for (int i = 0; i < prog.num_variables(); ++i) {
    sol.x[i] = cp.var_map[i] >= 0 ? x(cp.var_map[i]) : cp.fixed_value[i];
  }
  sol.objective = prog.objective_value(sol.x);
  return sol;
}

}  // namespace

ConicSolution solve(const ConicProgram& prog, const Options& opts) {
  const Compiled cp = compile(prog);
  const Cone K(cp.lp_rows, cp.soc_dims);
  const int n = cp.n;
  const int p = static_cast<int>(cp.A.rows());
  const int m = K.dim();

  if (cp.trivially_infeasible) {
    ConicSolution sol = finish(prog, cp, VectorXd::Zero(n));
    sol.status = Status::infeasible;
    return sol;
  }
  if (n == 0) {
    ConicSolution sol = finish(prog, cp, VectorXd::Zero(0));
    const bool ok = (m == 0 || K.interior_margin(cp.h) <= opts.feas_tol);
    sol.status = ok ? Status::optimal : Status::infeasible;
    sol.dual_objective = sol.objective;
    return sol;
  }

  KktSolver kkt(cp, K);
  const VectorXd e = K.identity();

  // Initial point: least-squares primal and dual estimates shifted into the cone.
  VectorXd x, y, z, s;
  {
    Scaling I;
    I.lp_d = VectorXd::Ones(K.lp());
    for (int d : K.soc()) {
      VectorXd w = VectorXd::Zero(d);
      w(0) = 1.0;
      I.eta.push_back(1.0);
      I.wbar.push_back(w);
    }
    if (!kkt.factor(I)) {
      ConicSolution sol = finish(prog, cp, VectorXd::Zero(n));
      sol.status = Status::numerical_failure;
      return sol;
    }
    VectorXd dx, dy, dz;
    kkt.solve(VectorXd::Zero(n), cp.b, cp.h, dx, dy, dz);
    x = dx;
    s = -dz;
    const double ap = K.interior_margin(s);
    if (ap >= -1e-8) s += (1.0 + std::max(ap, 0.0)) * e;
    kkt.solve(-cp.c, VectorXd::Zero(p), VectorXd::Zero(m), dx, dy, dz);
    y = dy;
    z = dz;
    const double ad = K.interior_margin(z);
    if (ad >= -1e-8) z += (1.0 + std::max(ad, 0.0)) * e;
  }
  double tau = 1.0, kappa = 1.0;

  const double nb = std::max(1.0, safe_norm(cp.b));
  const double nh = std::max(1.0, safe_norm(cp.h));
  const double nc = std::max(1.0, safe_norm(cp.c));

  ConicSolution result;
  result.status = Status::numerical_failure;
  const int degree = K.degree();
  int stall = 0;

  // best iterate seen, used when the final iterations lose accuracy
  struct Snapshot {
    VectorXd x, y, z, s;
    double tau = 1.0, kappa = 1.0;
    double score = kInf;
  } best;

  auto evaluate = [&](bool reduced) -> std::optional<Status> {
    const double ft = reduced ? opts.reduced_feas_tol : opts.feas_tol;
    const double gt = reduced ? opts.reduced_gap_tol : opts.gap_tol;
    const VectorXd xh = x / tau, yh = y / tau, zh = z / tau, sh = s / tau;
    const double pres = std::max(p ? (cp.A * xh - cp.b).norm() / nb : 0.0, (cp.G * xh + sh - cp.h).norm() / nh);
    const double dres = (cp.A.transpose() * yh + cp.G.transpose() * zh + cp.c).norm() / nc;
    const double pcost = cp.c.dot(xh);
    const double dcost = -(p ? cp.b.dot(yh) : 0.0) - cp.h.dot(zh);
    const double gap = sh.dot(zh);
    const double relgap = std::abs(pcost - dcost) / std::max(1.0, std::min(std::abs(pcost), std::abs(dcost)));
    result.primal_residual = pres;
    result.dual_residual = dres;
    result.gap = relgap;
    const double score = std::max({pres, dres, std::min(relgap, gap)});
    if (score < best.score) best = {x, y, z, s, tau, kappa, score};
    if (pres <= ft && dres <= ft && (gap <= opts.abs_gap_tol || relgap <= gt)) return Status::optimal;

    const double byhz = (p ? cp.b.dot(y) : 0.0) + cp.h.dot(z);
    if (byhz < 0.0) {
      const double r = (cp.A.transpose() * y + cp.G.transpose() * z).norm() / -byhz;
      if (r <= ft) return Status::infeasible;
    }
    const double cx = cp.c.dot(x);
    if (cx < 0.0) {
      const double r = std::max(p ? (cp.A * x).norm() : 0.0, (cp.G * x + s).norm()) / -cx;
      if (r <= ft) return Status::unbounded;
    }
    return std::nullopt;
  };

  int iter = 0;
  for (; iter <= opts.max_iter; ++iter) {
    if (auto st = evaluate(false)) {
      result.status = *st;
      break;
    }
    if (iter == opts.max_iter || stall >= 5) break;

    const VectorXd rx = (p ? VectorXd(cp.A.transpose() * y) : VectorXd::Zero(n)) + cp.G.transpose() * z + cp.c * tau;
    const VectorXd ry = (p ? VectorXd(-cp.A * x + cp.b * tau) : VectorXd::Zero(0));
    const VectorXd rz = s + cp.G * x - cp.h * tau;
    const double rt = kappa + cp.c.dot(x) + (p ? cp.b.dot(y) : 0.0) + cp.h.dot(z);
    const double mu = (s.dot(z) + tau * kappa) / (degree + 1);

    const Scaling W = Scaling::compute(K, s, z);
    const VectorXd lambda = W.apply(K, z, false);
    if (!kkt.factor(W)) break;

    VectorXd x1, y1, z1;
    kkt.solve(-cp.c, cp.b, cp.h, x1, y1, z1);
    const double denom_base = cp.c.dot(x1) + (p ? cp.b.dot(y1) : 0.0) + cp.h.dot(z1);

    auto direction = [&](double eta_res, const VectorXd& rc, double rkappa, VectorXd& dx, VectorXd& dy, VectorXd& dz,
                         VectorXd& ds, double& dtau, double& dkappa) {
      const double f = 1.0 - eta_res;
      const VectorXd lr = K.divide(lambda, rc);
      const VectorXd Wlr = W.apply(K, lr, false);
      VectorXd x2, y2, z2;
      kkt.solve(-f * rx, f * ry, -f * rz - Wlr, x2, y2, z2);
      const double num = -f * rt - rkappa / tau - (cp.c.dot(x2) + (p ? cp.b.dot(y2) : 0.0) + cp.h.dot(z2));
      dtau = num / (denom_base - kappa / tau);
      dx = x2 + dtau * x1;
      dy = y2 + dtau * y1;
      dz = z2 + dtau * z1;
      dkappa = (rkappa - kappa * dtau) / tau;
      ds = W.apply(K, lr - W.apply(K, dz, false), false);
    };

    auto step_to_boundary = [&](const VectorXd& ds, const VectorXd& dz, double dtau, double dkappa) {
      double a = std::min(K.max_step(s, ds), K.max_step(z, dz));
      if (dtau < 0.0) a = std::min(a, -tau / dtau);
      if (dkappa < 0.0) a = std::min(a, -kappa / dkappa);
      return a;
    };

    // predictor
    VectorXd dxa, dya, dza, dsa;
    double dtaua = 0.0, dkappaa = 0.0;
    const VectorXd ll = K.product(lambda, lambda);
    direction(0.0, -ll, -tau * kappa, dxa, dya, dza, dsa, dtaua, dkappaa);
    const double alpha_a = std::min(1.0, step_to_boundary(dsa, dza, dtaua, dkappaa));
    const double sigma = std::clamp(std::pow(1.0 - alpha_a, 3), 0.0, 1.0);

    // corrector
    const VectorXd corr = K.product(W.apply(K, dsa, true), W.apply(K, dza, false));
    const VectorXd rc = -ll + sigma * mu * e - corr;
    const double rk = -tau * kappa + sigma * mu - dtaua * dkappaa;
    VectorXd dx, dy, dz, ds;
    double dtau = 0.0, dkappa = 0.0;
    direction(sigma, rc, rk, dx, dy, dz, ds, dtau, dkappa);
    const double amax = step_to_boundary(ds, dz, dtau, dkappa);
    const double alpha = std::min(1.0, 0.99 * amax);
    if (!std::isfinite(alpha) || alpha < 1e-10) {
      ++stall;
    } else {
      stall = alpha < 1e-6 ? stall + 1 : 0;
    }
    if (!std::isfinite(alpha)) break;

    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    tau += alpha * dtau;
    kappa += alpha * dkappa;

    IterationLog log;
    log.primal_objective = cp.c.dot(x) / tau * cp.c_scale + cp.obj_offset;
    log.dual_objective = (-(p ? cp.b.dot(y) : 0.0) - cp.h.dot(z)) / tau * cp.c_scale + cp.obj_offset;
    log.mu = mu;
    log.step = alpha;
    result.trace.push_back(log);

    // keep the iterate strictly interior
    if (K.interior_margin(s) >= 0.0 || K.interior_margin(z) >= 0.0 || tau <= 0.0 || kappa <= 0.0) break;
  }

  if (result.status == Status::numerical_failure && std::isfinite(best.score)) {
    x = best.x;
    y = best.y;
    z = best.z;
    s = best.s;
    tau = best.tau;
    kappa = best.kappa;
    if (auto st = evaluate(true)) {
      result.status = *st;
      result.reduced_accuracy = true;
    }
  }

  ConicSolution sol = finish(prog, cp, x / tau);
  sol.status = result.status;
  sol.reduced_accuracy = result.reduced_accuracy;
  sol.primal_residual = result.primal_residual;
  sol.dual_residual = result.dual_residual;
  sol.gap = result.gap;
  sol.iterations = iter;
  sol.trace = std::move(result.trace);
  sol.dual_objective = (-(p ? cp.b.dot(y) : 0.0) - cp.h.dot(z)) / tau * cp.c_scale + cp.obj_offset;
  if (sol.status == Status::infeasible) {
    const double byhz = -((p ? cp.b.dot(y) : 0.0) + cp.h.dot(z));
    const double scale = byhz > 0.0 ? 1.0 / byhz : 1.0;
    sol.farkas_equality.assign(prog.equalities().size(), 0.0);
    for (std::size_t r = 0; r < cp.eq_map.size(); ++r) {
      if (cp.eq_map[r] >= 0) sol.farkas_equality[r] = y(cp.eq_map[r]) * scale;
    }
    sol.farkas_inequality.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) sol.farkas_inequality[i] = z(i) * scale;
  }
  return sol;
}

ConicSolution solve_lp(const ConicProgram& prog, const Options& opts) {
  if (!prog.is_linear()) throw std::invalid_argument("solve_lp: program has cones or quadratic terms");
  return solve(prog, opts);
}

}  // namespace radopf::conic
