#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "radopf/conic.hpp"
#include "radopf/jabr.hpp"
#include "radopf/netmodel.hpp"

namespace radopf::tighten {

/// One box per line, in line order.
using VarBounds = std::vector<jabr::LineBox>;

/// rmin = Vmin_i Vmin_j, rmax = Vmax_i Vmax_j.
struct Ring {
  double rmin = 0.0;
  double rmax = 0.0;
};
Ring ring(const net::Network& net, std::size_t line);

/// a_c c_ij + a_s s_ij >= rhs, the chord through (x1, y1) and (x2, y2).
struct Cut {
  int line = 0;
  double a_c = 0.0;
  double a_s = 0.0;
  double rhs = 0.0;
  int case_label = 0;
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  jabr::LineCut as_line_cut() const { return {line, a_c, a_s, rhs}; }
  double slack(double c, double s) const { return a_c * c + a_s * s - rhs; }
  bool operator==(const Cut&) const = default;
};

enum class Method { socp, fixed_rounds };

struct BoundOptions {
  /// socp: one sequential pass, each line's box joins the set used for the
  /// next line. fixed_rounds: every line is bounded against the boxes of the
  /// previous round, `rounds` times.
  Method method = Method::socp;
  int rounds = 2;
  double outward = 1e-7;
  conic::Options solver = [] {
    conic::Options o;
    o.gap_tol = 1e-8;
    return o;
  }();
  /// Run the four solves of a line concurrently.
  bool parallel = true;
};

/// Throws InfeasibleError when the relaxation has no feasible point.
VarBounds compute_bounds(const net::Network& net, const BoundOptions& opts = {},
                         std::vector<std::string>* warnings = nullptr);

/// Secant cut for one line; nothing when cmin >= rmin or cmin <= 0 (the latter
/// adds a warning).
std::optional<Cut> generate_cut(const jabr::LineBox& box, const Ring& r, int line = 0,
                                std::vector<std::string>* warnings = nullptr);

struct Algorithm1Result {
  VarBounds bounds;
  std::vector<Cut> cuts;
  std::vector<std::string> warnings;
  int solves = 0;
  double seconds = 0.0;
};

/// Lines in input order: bound the line over the current set, intersect with
/// its box, add its cut if any.
Algorithm1Result run_algorithm1(const net::Network& net, const BoundOptions& opts = {});

std::vector<jabr::LineCut> line_cuts(const std::vector<Cut>& cuts);

/// CSV: line,a_c,a_s,rhs,case
void write_cuts_csv(std::ostream& out, const std::vector<Cut>& cuts);

}  // namespace radopf::tighten
