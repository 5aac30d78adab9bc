#include "radopf/bnb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <queue>

#include <fmt/format.h>

#include "radopf/errors.hpp"

namespace radopf::bnb {

using conic::AffineExpr;
using conic::kInf;

bool NodeBox::empty() const noexcept {
  for (const auto& [lo, hi] : cii) {
    if (lo > hi) return true;
  }
  for (const auto& b : lines) {
    if (b.cmin > b.cmax || b.smin > b.smax) return true;
  }
  return false;
}

double NodeBox::max_width() const noexcept {
  double w = 0.0;
  for (const auto& [lo, hi] : cii) w = std::max(w, hi - lo);
  for (const auto& b : lines) w = std::max({w, b.cmax - b.cmin, b.smax - b.smin});
  return w;
}

NodeBox root_box(const net::Network& net, const tighten::VarBounds* bounds) {
  NodeBox box;
  for (const auto& b : net.buses) box.cii.emplace_back(b.vmin * b.vmin, b.vmax * b.vmax);
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const double r = net.buses[net.from_index(l)].vmax * net.buses[net.to_index(l)].vmax;
    jabr::LineBox lb{-r, r, -r, r};
    if (bounds && l < bounds->size()) {
      const auto& t = (*bounds)[l];
      lb = {std::max(lb.cmin, t.cmin), std::min(lb.cmax, t.cmax), std::max(lb.smin, t.smin),
            std::min(lb.smax, t.smax)};
    }
    box.lines.push_back(lb);
  }
  return box;
}

jabr::JabrModel node_relaxation(const net::Network& net, const NodeBox& box, const std::vector<jabr::LineCut>& cuts) {
  jabr::RelaxationOptions o;
  o.cii_bounds = box.cii;
  o.line_boxes = box.lines;
  o.cuts = cuts;
  auto m = jabr::build_model(net, o);
  auto& p = m.program;
  for (std::size_t l = 0; l < m.cij.size(); ++l) {
    const int ci = m.cii[m.line_from[l]], cj = m.cii[m.line_to[l]];
    const int c = m.cij[l], s = m.sij[l];
    const double li = p.lower(ci), ui = p.upper(ci), lj = p.lower(cj), uj = p.upper(cj);
    const double lc = p.lower(c), uc = p.upper(c), ls = p.lower(s), us = p.upper(s);
    // McCormick(ci cj) <= secant(c^2) + secant(s^2)
    const double sec_const = lc * uc + ls * us;
    p.add_less_equal(AffineExpr{{{ci, lj}, {cj, li}, {c, -(lc + uc)}, {s, -(ls + us)}}}, li * lj - sec_const);
    p.add_less_equal(AffineExpr{{{ci, uj}, {cj, ui}, {c, -(lc + uc)}, {s, -(ls + us)}}}, ui * uj - sec_const);
  }
  return m;
}

std::string to_string(const VarRef& v) {
  switch (v.kind) {
    case VarRef::Kind::cii: return fmt::format("c_bus{}", v.index);
    case VarRef::Kind::cij: return fmt::format("c_line{}", v.index);
    case VarRef::Kind::sij: return fmt::format("s_line{}", v.index);
  }
  return "?";
}

std::pair<double, double> interval(const NodeBox& box, const VarRef& v) {
  switch (v.kind) {
    case VarRef::Kind::cii: return box.cii.at(v.index);
    case VarRef::Kind::cij: return {box.lines.at(v.index).cmin, box.lines.at(v.index).cmax};
    case VarRef::Kind::sij: return {box.lines.at(v.index).smin, box.lines.at(v.index).smax};
  }
  return {0.0, 0.0};
}

void set_interval(NodeBox& box, const VarRef& v, std::pair<double, double> iv) {
  switch (v.kind) {
    case VarRef::Kind::cii: box.cii.at(v.index) = iv; break;
    case VarRef::Kind::cij: std::tie(box.lines.at(v.index).cmin, box.lines.at(v.index).cmax) = iv; break;
    case VarRef::Kind::sij: std::tie(box.lines.at(v.index).smin, box.lines.at(v.index).smax) = iv; break;
  }
}

namespace {

int model_var(const jabr::JabrModel& m, const VarRef& v) {
  switch (v.kind) {
    case VarRef::Kind::cii: return m.cii.at(v.index);
    case VarRef::Kind::cij: return m.cij.at(v.index);
    case VarRef::Kind::sij: return m.sij.at(v.index);
  }
  return -1;
}

// objective <= cap, with epigraph variables for the quadratic terms
void add_objective_cap(conic::ConicProgram& p, double cap) {
  AffineExpr obj;
  const auto lin = p.objective_linear();
  const auto quad = p.objective_quadratic();
  for (int i = 0; i < static_cast<int>(lin.size()); ++i) {
    if (lin[i] != 0.0) obj.add(i, lin[i]);
    if (i < static_cast<int>(quad.size()) && quad[i] > 0.0) {
      const int t = p.add_variable(0.0, kInf);
      p.add_rotated_cone(AffineExpr::variable(t), AffineExpr::constant_value(1.0), {AffineExpr::variable(i)});
      obj.add(t, quad[i]);
    }
  }
  p.add_less_equal(obj, cap - p.objective_constant());
}

}  // namespace

Reduction range_reduction(const net::Network& net, const NodeBox& box, const std::vector<jabr::LineCut>& cuts,
                          double incumbent, std::span<const VarRef> vars, const conic::Options& solver) {
  Reduction red;
  red.box = box;
  if (box.empty()) {
    red.empty = true;
    return red;
  }
  for (const auto& v : vars) {
    const auto model = node_relaxation(net, red.box, cuts);
    auto prog = model.program;
    if (std::isfinite(incumbent)) add_objective_cap(prog, incumbent);
    const int k = model_var(model, v);
    auto [lo, hi] = interval(red.box, v);
    for (double sense : {1.0, -1.0}) {
      prog.clear_objective();
      prog.set_objective_linear(k, sense);
      const auto sol = conic::solve(prog, solver);
      ++red.solves;
      if (sol.status == conic::Status::infeasible) {
        red.empty = true;
        return red;
      }
      if (!sol.optimal()) continue;
      if (sense > 0) {
        lo = std::max(lo, sol.x[k] - 1e-7);
      } else {
        hi = std::min(hi, sol.x[k] + 1e-7);
      }
    }
    if (lo > hi) {
      red.empty = true;
      return red;
    }
    set_interval(red.box, v, {lo, hi});
  }
  return red;
}

BranchDecision branch(const net::Network& net, const NodeBox& box, const jabr::JabrModel& model,
                      std::span<const double> x, double tol, double min_width) {
  (void)net;
  BranchDecision dec;
  const auto ex = jabr::check_exactness(model, x, tol);
  std::vector<int> order;
  for (std::size_t l = 0; l < ex.line_residual.size(); ++l) {
    if (ex.line_residual[l] > tol) order.push_back(static_cast<int>(l));
  }
  if (order.empty()) return dec;
  dec.violated = true;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return ex.line_residual[a] > ex.line_residual[b]; });

  for (int l : order) {
    const int i = model.line_from[l], j = model.line_to[l];
    const double xi = x[model.cii[i]], xj = x[model.cii[j]];
    const double c = x[model.cij[l]], s = x[model.sij[l]];
    const auto [li, ui] = box.cii[i];
    const auto [lj, uj] = box.cii[j];
    const auto& lb = box.lines[l];
    const double wi = ui - li, wj = uj - lj;
    // error of each piece of the outer approximation at the relaxation point
    const double mcc = std::max(lj * xi + li * xj - li * lj, uj * xi + ui * xj - ui * uj);
    const double ew = std::max(0.0, xi * xj - mcc);
    const double ec = std::max(0.0, (c - lb.cmin) * (lb.cmax - c));
    const double es = std::max(0.0, (s - lb.smin) * (lb.smax - s));
    struct Cand {
      VarRef v;
      double score;
      double at;
    };
    std::vector<Cand> cand{
        {{VarRef::Kind::cii, i}, wi + wj > 0.0 ? ew * wi / (wi + wj) : 0.0, xi},
        {{VarRef::Kind::cii, j}, wi + wj > 0.0 ? ew * wj / (wi + wj) : 0.0, xj},
        {{VarRef::Kind::cij, l}, ec, c},
        {{VarRef::Kind::sij, l}, es, s},
    };
    const Cand* best = nullptr;
    for (const auto& cd : cand) {
      const auto [lo, hi] = interval(box, cd.v);
      if (hi - lo <= min_width) continue;
      if (!best || cd.score > best->score) best = &cd;
    }
    if (!best) continue;
    const auto [lo, hi] = interval(box, best->v);
    const double w = hi - lo;
    dec.var = best->v;
    dec.at = std::clamp(best->at, lo + 0.2 * w, hi - 0.2 * w);
    NodeBox left = box, right = box;
    set_interval(left, dec.var, {lo, dec.at});
    set_interval(right, dec.var, {dec.at, hi});
    dec.children = std::make_pair(std::move(left), std::move(right));
    return dec;
  }
  return dec;
}

const char* to_string(Status s) {
  switch (s) {
    case Status::global_optimal: return "global-optimal";
    case Status::infeasible: return "infeasible";
    case Status::gap_limit: return "gap-limit";
    case Status::time_limit: return "time-limit";
  }
  return "?";
}

namespace {

struct Node {
  long id = 0;
  int depth = 0;
  double lb = -kInf;
  NodeBox box;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.lb != b.lb) return a.lb > b.lb;
    return a.id > b.id;
  }
};

enum class Outcome { infeasible, pruned, exact, branched, closed };

struct Processed {
  Outcome outcome = Outcome::pruned;
  double lb = -kInf;
  std::optional<jabr::OpfSolution> candidate;
  std::vector<NodeBox> children;
  std::vector<std::string> warnings;
  int solves = 0;
};

double cutoff(double ub, double gap) { return ub - gap * std::max(1e-9, std::abs(ub)); }

Processed process(const net::Network& net, const Node& node, const std::vector<jabr::LineCut>& cuts, double ub,
                  const Options& opts) {
  Processed out;
  NodeBox box = node.box;
  auto model = node_relaxation(net, box, cuts);
  auto sol = conic::solve(model.program, opts.solver);
  ++out.solves;
  if (sol.status == conic::Status::infeasible) {
    out.outcome = Outcome::infeasible;
    return out;
  }
  bool solved = sol.optimal();
  out.lb = solved ? std::max(node.lb, sol.objective) : node.lb;
  if (!solved) out.warnings.push_back(fmt::format("node {}: relaxation status {}", node.id, conic::to_string(sol.status)));
  if (out.lb >= cutoff(ub, opts.gap)) {
    out.outcome = Outcome::pruned;
    return out;
  }

  if (solved && opts.obbt && node.depth <= opts.obbt_depth && opts.obbt_vars > 0) {
    const auto ex = jabr::check_exactness(model, sol.x, opts.exact_tol);
    if (!ex.exact && ex.worst_line >= 0) {
      std::vector<VarRef> vars{{VarRef::Kind::cii, model.line_from[ex.worst_line]},
                               {VarRef::Kind::cii, model.line_to[ex.worst_line]}};
      std::stable_sort(vars.begin(), vars.end(), [&](const VarRef& a, const VarRef& b) {
        const auto ia = interval(box, a), ib = interval(box, b);
        return ia.second - ia.first > ib.second - ib.first;
      });
      vars.resize(std::min<std::size_t>(vars.size(), static_cast<std::size_t>(opts.obbt_vars)));
      const auto red = range_reduction(net, box, cuts, ub, vars, opts.solver);
      out.solves += red.solves;
      if (red.empty) {
        out.outcome = Outcome::infeasible;
        return out;
      }
      if (!(red.box == box)) {
        box = red.box;
        model = node_relaxation(net, box, cuts);
        auto again = conic::solve(model.program, opts.solver);
        ++out.solves;
        if (again.status == conic::Status::infeasible) {
          out.outcome = Outcome::infeasible;
          return out;
        }
        if (again.optimal()) {
          sol = std::move(again);
          out.lb = std::max(out.lb, sol.objective);
          if (out.lb >= cutoff(ub, opts.gap)) {
            out.outcome = Outcome::pruned;
            return out;
          }
        }
      }
    }
  }

  if (solved) {
    out.candidate = local_polish(net, model, sol.x);
    const auto ex = jabr::check_exactness(model, sol.x, opts.exact_tol);
    if (ex.exact && out.candidate && out.candidate->objective <= out.lb + opts.gap * std::max(1.0, std::abs(out.lb))) {
      out.outcome = Outcome::exact;
      return out;
    }
    const auto dec = branch(net, box, model, sol.x, opts.exact_tol, opts.min_width);
    if (dec.children) {
      out.outcome = Outcome::branched;
      out.children = {dec.children->first, dec.children->second};
      return out;
    }
  }
  // no usable relaxation point or nothing left to split on the violated lines:
  // bisect the widest interval
  VarRef widest;
  double w = 0.0;
  for (std::size_t i = 0; i < box.cii.size(); ++i) {
    const VarRef v{VarRef::Kind::cii, static_cast<int>(i)};
    const auto iv = interval(box, v);
    if (iv.second - iv.first > w) {
      w = iv.second - iv.first;
      widest = v;
    }
  }
  for (std::size_t l = 0; l < box.lines.size(); ++l) {
    for (auto k : {VarRef::Kind::cij, VarRef::Kind::sij}) {
      const VarRef v{k, static_cast<int>(l)};
      const auto iv = interval(box, v);
      if (iv.second - iv.first > w) {
        w = iv.second - iv.first;
        widest = v;
      }
    }
  }
  if (w <= opts.min_width) {
    out.outcome = Outcome::closed;
    return out;
  }
  const auto [lo, hi] = interval(box, widest);
  NodeBox left = box, right = box;
  set_interval(left, widest, {lo, 0.5 * (lo + hi)});
  set_interval(right, widest, {0.5 * (lo + hi), hi});
  out.outcome = Outcome::branched;
  out.children = {std::move(left), std::move(right)};
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

BnbResult solve_global(const net::Network& net, const Options& opts) {
  net::require_radial_model(net);
  const auto t0 = std::chrono::steady_clock::now();
  BnbResult res;

  const auto plain = jabr::solve_relaxation(net, {}, opts.solver);
  if (plain.status == conic::Status::infeasible) {
    res.status = Status::infeasible;
    res.total_seconds = res.preprocess_seconds = seconds_since(t0);
    return res;
  }
  if (plain.status == conic::Status::optimal) res.socp_value = plain.objective;

  std::vector<jabr::LineCut> cuts;
  NodeBox root = root_box(net);
  if (opts.use_bounds || opts.use_cuts) {
    try {
      auto alg = tighten::run_algorithm1(net, {.solver = opts.solver});
      if (opts.use_bounds) root = root_box(net, &alg.bounds);
      if (opts.use_cuts) cuts = tighten::line_cuts(alg.cuts);
      res.cuts = static_cast<int>(cuts.size());
      for (auto& w : alg.warnings) res.warnings.push_back(std::move(w));
    } catch (const InfeasibleError&) {
      res.status = Status::infeasible;
      res.total_seconds = res.preprocess_seconds = seconds_since(t0);
      return res;
    }
  }
  res.preprocess_seconds = seconds_since(t0);
  const auto t1 = std::chrono::steady_clock::now();

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  long next_id = 0;
  open.push({next_id++, 0, -kInf, root});
  double closed_lb = kInf;  // smallest bound among nodes that could not be split
  bool timed_out = false, node_limit = false;
  const int workers = std::max(1, opts.workers);

  auto accept = [&](const jabr::OpfSolution& cand) {
    if (cand.objective >= res.upper) return;
    if (!jabr::evaluate_opf_point(net, cand.point).feasible(1e-6)) return;
    res.upper = cand.objective;
    res.incumbent = cand;
  };
  auto global_lower = [&] {
    double lb = std::min(res.upper, closed_lb);
    if (!open.empty()) lb = std::min(lb, open.top().lb);
    return lb;
  };
  auto record = [&] {
    const double lb = std::max(res.trace.empty() ? -kInf : res.trace.back().lower, global_lower());
    res.trace.push_back({res.nodes, seconds_since(t0), lb, res.upper});
  };

  while (!open.empty()) {
    if (seconds_since(t0) > opts.time_limit) {
      timed_out = true;
      break;
    }
    if (res.nodes >= opts.max_nodes) {
      node_limit = true;
      break;
    }
    if (std::isfinite(res.upper) && res.upper - global_lower() <= opts.gap * std::max(1e-9, std::abs(res.upper))) {
      break;
    }
    std::vector<Node> batch;
    while (!open.empty() && static_cast<int>(batch.size()) < workers) {
      Node n = open.top();
      open.pop();
      if (n.lb >= cutoff(res.upper, opts.gap)) continue;
      batch.push_back(std::move(n));
    }
    if (batch.empty()) continue;
    std::vector<Processed> done(batch.size());
    const double ub = res.upper;
    if (batch.size() == 1) {
      done[0] = process(net, batch[0], cuts, ub, opts);
    } else {
      std::vector<std::future<Processed>> fut;
      for (const auto& n : batch) fut.push_back(std::async(std::launch::async, process, std::cref(net), std::cref(n),
                                                           std::cref(cuts), ub, std::cref(opts)));
      for (std::size_t k = 0; k < batch.size(); ++k) done[k] = fut[k].get();
    }
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const auto& n = batch[k];
      auto& pr = done[k];
      ++res.nodes;
      if (n.id == 0) {
        res.root_lower = pr.outcome == Outcome::infeasible ? kInf : pr.lb;
        if (pr.outcome == Outcome::infeasible) {
          res.status = Status::infeasible;
        }
      }
      for (auto& w : pr.warnings) res.warnings.push_back(std::move(w));
      if (pr.candidate) accept(*pr.candidate);
      if (pr.outcome == Outcome::closed) {
        closed_lb = std::min(closed_lb, pr.lb);
      }
      if (pr.outcome == Outcome::branched) {
        for (auto& child : pr.children) open.push({next_id++, n.depth + 1, pr.lb, std::move(child)});
      }
    }
    record();
  }

  res.search_seconds = seconds_since(t1);
  res.total_seconds = seconds_since(t0);
  res.lower = std::max(res.trace.empty() ? -kInf : res.trace.back().lower, global_lower());
  if (!res.incumbent) {
    res.lower = open.empty() ? kInf : res.lower;
    if (timed_out) {
      res.status = Status::time_limit;
    } else if (node_limit) {
      res.status = Status::gap_limit;
    } else {
      // the tree is exhausted: every node was infeasible or shrank below min_width
      res.status = Status::infeasible;
    }
    return res;
  }
  res.lower = std::min(res.lower, res.upper);
  res.gap = res.upper != 0.0 ? 1.0 - res.lower / res.upper : res.upper - res.lower;
  if (std::isfinite(res.root_lower) && res.upper != 0.0) res.root_gap_pct = 100.0 * (1.0 - res.root_lower / res.upper);
  if (res.upper - res.lower <= opts.gap * std::max(1e-9, std::abs(res.upper)) + 1e-12) {
    res.status = Status::global_optimal;
  } else {
    res.status = timed_out ? Status::time_limit : Status::gap_limit;
  }
  return res;
}

nlohmann::json to_json(const BnbResult& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::json j;
  j["status"] = to_string(r.status);
  j["objective"] = num(r.upper);
  j["lower_bound"] = num(r.lower);
  j["gap"] = num(r.gap);
  j["nodes"] = r.nodes;
  j["socp_value"] = num(r.socp_value);
  j["root_lower_bound"] = num(r.root_lower);
  j["RG"] = num(r.root_gap_pct);
  j["PT"] = r.preprocess_seconds;
  j["BT"] = r.search_seconds;
  j["TT"] = r.total_seconds;
  j["cuts"] = r.cuts;
  auto& tr = j["bounds_trace"] = nlohmann::json::array();
  for (const auto& t : r.trace) tr.push_back({{"nodes", t.nodes}, {"seconds", t.seconds}, {"lower", num(t.lower)}, {"upper", num(t.upper)}});
  if (r.incumbent) {
    const auto& p = r.incumbent->point;
    j["solution"] = {{"vm", p.vm}, {"va", p.va}, {"pg", p.pg}, {"qg", p.qg}};
  }
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace radopf::bnb
