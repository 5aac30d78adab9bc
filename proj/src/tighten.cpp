#include "radopf/tighten.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <future>

#include <fmt/format.h>

#include "radopf/errors.hpp"

namespace radopf::tighten {

Ring ring(const net::Network& net, std::size_t line) {
  const auto& a = net.buses.at(net.from_index(line));
  const auto& b = net.buses.at(net.to_index(line));
  return {a.vmin * b.vmin, a.vmax * b.vmax};
}

namespace {

struct LineResult {
  jabr::LineBox box;
  int solves = 0;
};

// min c, max c, min s, max s of one line over the relaxation with the given
// boxes and cuts.
LineResult bound_line(const net::Network& net, std::size_t line, const jabr::RelaxationOptions& ropts,
                      const BoundOptions& opts, std::vector<std::string>* warnings) {
  const auto model = jabr::build_model(net, ropts);
  const std::array<int, 4> var{model.cij[line], model.cij[line], model.sij[line], model.sij[line]};
  const std::array<double, 4> sense{1.0, -1.0, 1.0, -1.0};

  auto run = [&](int k) {
    auto prog = model.program;
    prog.clear_objective();
    prog.set_objective_linear(var[k], sense[k]);
    return conic::solve(prog, opts.solver);
  };
  std::array<conic::ConicSolution, 4> sol;
  if (opts.parallel) {
    std::array<std::future<conic::ConicSolution>, 4> fut;
    for (int k = 0; k < 4; ++k) fut[k] = std::async(std::launch::async, run, k);
    for (int k = 0; k < 4; ++k) sol[k] = fut[k].get();
  } else {
    for (int k = 0; k < 4; ++k) sol[k] = run(k);
  }

  LineResult out;
  out.solves = 4;
  auto& b = out.box;
  b.cmin = model.program.lower(var[0]);
  b.cmax = model.program.upper(var[1]);
  b.smin = model.program.lower(var[2]);
  b.smax = model.program.upper(var[3]);
  std::array<double*, 4> slot{&b.cmin, &b.cmax, &b.smin, &b.smax};
  for (int k = 0; k < 4; ++k) {
    if (sol[k].status == conic::Status::infeasible) {
      throw InfeasibleError(fmt::format("relaxation infeasible while bounding line {}", line));
    }
    if (!sol[k].optimal()) {
      if (warnings) {
        warnings->push_back(fmt::format("line {}: bound solve ended with status {}, keeping previous bound", line,
                                        conic::to_string(sol[k].status)));
      }
      continue;
    }
    const double v = sol[k].x[var[k]];
    // relax outward, never past the bound the model already had
    if (sense[k] > 0) {
      *slot[k] = std::max(*slot[k], v - opts.outward);
    } else {
      *slot[k] = std::min(*slot[k], v + opts.outward);
    }
  }
  return out;
}

jabr::LineBox intersect(const jabr::LineBox& a, const jabr::LineBox& b) {
  return {std::max(a.cmin, b.cmin), std::min(a.cmax, b.cmax), std::max(a.smin, b.smin), std::min(a.smax, b.smax)};
}

}  // namespace

VarBounds compute_bounds(const net::Network& net, const BoundOptions& opts, std::vector<std::string>* warnings) {
  net::require_radial_model(net);
  const std::size_t nl = net.lines.size();
  VarBounds boxes(nl);
  jabr::RelaxationOptions ropts;
  ropts.line_boxes = boxes;
  if (opts.method == Method::socp) {
    for (std::size_t l = 0; l < nl; ++l) {
      boxes[l] = intersect(boxes[l], bound_line(net, l, ropts, opts, warnings).box);
      ropts.line_boxes = boxes;
    }
    return boxes;
  }
  for (int round = 0; round < std::max(1, opts.rounds); ++round) {
    VarBounds next(nl);
    for (std::size_t l = 0; l < nl; ++l) next[l] = intersect(boxes[l], bound_line(net, l, ropts, opts, warnings).box);
    boxes = std::move(next);
    ropts.line_boxes = boxes;
  }
  return boxes;
}

std::optional<Cut> generate_cut(const jabr::LineBox& box, const Ring& r, int line,
                                std::vector<std::string>* warnings) {
  const double R = r.rmin;
  if (box.cmin <= 0.0) {
    if (warnings) warnings->push_back(fmt::format("line {}: lower bound on c is {:.6g} <= 0, no cut", line, box.cmin));
    return std::nullopt;
  }
  if (box.cmin >= R) return std::nullopt;

  const double nlo = std::hypot(box.cmin, box.smin);
  const double nhi = std::hypot(box.cmin, box.smax);
  Cut cut;
  cut.line = line;
  if (nlo < R && nhi < R) {
    cut.case_label = 1;
    cut.y1 = box.smax;
    cut.y2 = box.smin;
    cut.x1 = std::sqrt(R * R - cut.y1 * cut.y1);
    cut.x2 = std::sqrt(R * R - cut.y2 * cut.y2);
  } else if (nlo < R) {
    cut.case_label = 2;
    cut.x1 = box.cmin;
    cut.y1 = std::sqrt(R * R - box.cmin * box.cmin);
    cut.y2 = box.smin;
    cut.x2 = std::sqrt(R * R - box.smin * box.smin);
  } else if (nhi < R) {
    cut.case_label = 3;
    cut.y1 = box.smax;
    cut.x1 = std::sqrt(R * R - box.smax * box.smax);
    cut.x2 = box.cmin;
    cut.y2 = -std::sqrt(R * R - box.cmin * box.cmin);
  } else {
    return std::nullopt;  // both corners outside the circle: only c >= cmin
  }
  cut.a_c = cut.y1 - cut.y2;
  cut.a_s = -(cut.x1 - cut.x2);
  cut.rhs = cut.x2 * cut.y1 - cut.x1 * cut.y2;
  if (cut.a_c == 0.0 && cut.a_s == 0.0) return std::nullopt;
  return cut;
}

Algorithm1Result run_algorithm1(const net::Network& net, const BoundOptions& opts) {
  net::require_radial_model(net);
  const auto t0 = std::chrono::steady_clock::now();
  Algorithm1Result res;
  const std::size_t nl = net.lines.size();
  res.bounds.assign(nl, jabr::LineBox{});
  jabr::RelaxationOptions ropts;
  ropts.line_boxes = res.bounds;
  for (std::size_t l = 0; l < nl; ++l) {
    const auto lr = bound_line(net, l, ropts, opts, &res.warnings);
    res.solves += lr.solves;
    res.bounds[l] = intersect(res.bounds[l], lr.box);
    ropts.line_boxes = res.bounds;
    if (auto cut = generate_cut(res.bounds[l], ring(net, l), static_cast<int>(l), &res.warnings)) {
      res.cuts.push_back(*cut);
      ropts.cuts.push_back(cut->as_line_cut());
    }
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

std::vector<jabr::LineCut> line_cuts(const std::vector<Cut>& cuts) {
  std::vector<jabr::LineCut> out;
  out.reserve(cuts.size());
  for (const auto& c : cuts) out.push_back(c.as_line_cut());
  return out;
}

void write_cuts_csv(std::ostream& out, const std::vector<Cut>& cuts) {
  out << "line,a_c,a_s,rhs,case\n";
  for (const auto& c : cuts) out << fmt::format("{},{:.17g},{:.17g},{:.17g},{}\n", c.line, c.a_c, c.a_s, c.rhs, c.case_label);
}

}  // namespace radopf::tighten
