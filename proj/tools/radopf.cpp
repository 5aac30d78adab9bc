#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "radopf/bnb.hpp"
#include "radopf/errors.hpp"
#include "radopf/jabr.hpp"
#include "radopf/library.hpp"
#include "radopf/netmodel.hpp"
#include "radopf/tighten.hpp"
#include "radopf/twobus.hpp"

using namespace radopf;
namespace fs = std::filesystem;

namespace {

enum Exit { ok = 0, opf_infeasible = 2, unsolved = 3, usage = 64, data_error = 65 };

struct CaseArgs {
  std::string path;
  double gamma = 1.0;
  std::string scale = "both";
};

void add_case_options(CLI::App* cmd, CaseArgs& a) {
  cmd->add_option("--case", a.path, "MATPOWER .m or .json case file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--gamma", a.gamma, "load scaling factor");
  cmd->add_option("--scale", a.scale, "loads scaled by gamma")
      ->check(CLI::IsMember({"both", "active", "reactive"}));
}

net::LoadMask mask(const std::string& scale) {
  return {.active = scale != "reactive", .reactive = scale != "active"};
}

bool verbose = false;

net::Network read(const std::string& path) {
  std::vector<std::string> warnings;
  auto n = net::load_case(path, &warnings);
  if (verbose) {
    for (const auto& w : warnings) fmt::print(stderr, "warning: {}\n", w);
  }
  return n;
}

net::Network scaled(const net::Network& n, const CaseArgs& a, double gamma) {
  return gamma == 1.0 ? n : net::scale_load(n, gamma, mask(a.scale));
}

net::Network load(const CaseArgs& a, double gamma) { return scaled(read(a.path), a, gamma); }

std::string num(double v) { return std::isfinite(v) ? fmt::format("{:.10g}", v) : std::string{}; }

struct SolveFlags {
  double gap = 1e-4;
  double time_limit = 60.0;
  bool no_cuts = false;
  bool no_obbt = false;
  int workers = 1;

  bnb::Options options() const {
    bnb::Options o;
    o.gap = gap;
    o.time_limit = time_limit;
    o.use_cuts = o.use_bounds = !no_cuts;
    o.obbt = !no_obbt;
    o.workers = workers;
    return o;
  }
};

void add_solve_options(CLI::App* cmd, SolveFlags& f) {
  cmd->add_option("--gap", f.gap, "relative optimality gap")->check(CLI::NonNegativeNumber);
  cmd->add_option("--time-limit", f.time_limit, "seconds")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--no-cuts", f.no_cuts, "skip bound tightening and cuts");
  cmd->add_flag("--no-obbt", f.no_obbt, "skip range reduction");
  cmd->add_option("--workers", f.workers, "parallel node solves")->check(CLI::PositiveNumber);
}

int exit_code(bnb::Status s) {
  switch (s) {
    case bnb::Status::global_optimal: return ok;
    case bnb::Status::infeasible: return opf_infeasible;
    default: return unsolved;
  }
}

// clamped at zero: an exact relaxation can land a hair above the verified point
double gap_pct(double relax, double global) {
  if (!std::isfinite(relax) || !std::isfinite(global) || global == 0.0) return conic::kInf;
  return std::max(0.0, 100.0 * (1.0 - relax / global));
}

// One CSV row shared by relax and sweep.
struct Row {
  std::string instance;
  double gamma = 1.0;
  jabr::RelaxationResult relax;
  std::optional<bnb::BnbResult> global;
};

void header(std::ostream& out, bool global) {
  out << "instance,gamma,socp_status,socp_value,exact,max_residual";
  if (global) out << ",global_status,global_value,gap_pct,nodes";
  out << '\n';
}

void print_row(std::ostream& out, const Row& r) {
  const bool solved = r.relax.status == conic::Status::optimal;
  fmt::print(out, "{},{},{},{},{},{}", r.instance, num(r.gamma), conic::to_string(r.relax.status),
             solved ? num(r.relax.objective) : "", solved ? (r.relax.exactness.exact ? "yes" : "no") : "",
             solved ? num(r.relax.exactness.max_residual) : "");
  if (r.global) {
    const auto& g = *r.global;
    const bool opt = g.status == bnb::Status::global_optimal;
    fmt::print(out, ",{},{},{},{}", bnb::to_string(g.status), opt ? num(g.upper) : "",
               opt && solved ? num(gap_pct(r.relax.objective, g.upper)) : "", g.nodes);
  }
  out << '\n';
}

Row evaluate(const net::Network& base, const CaseArgs& a, double gamma, const std::optional<SolveFlags>& global) {
  const auto net = scaled(base, a, gamma);
  Row r;
  r.instance = net.name;
  r.gamma = gamma;
  r.relax = jabr::solve_relaxation(net);
  if (global) r.global = bnb::solve_global(net, global->options());
  return r;
}

int relax_exit(const Row& r) {
  if (r.global) return exit_code(r.global->status);
  if (r.relax.status == conic::Status::infeasible) return opf_infeasible;
  return r.relax.status == conic::Status::optimal ? ok : unsolved;
}

std::vector<long> parse_seeds(const std::string& spec) {
  std::vector<long> seeds;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(std::stol(part));
    } else {
      const long a = std::stol(part.substr(0, dash)), b = std::stol(part.substr(dash + 1));
      for (long s = a; s <= b; ++s) seeds.push_back(s);
    }
  }
  return seeds;
}

// "pg:0" -> model column of that variable
int model_var(const jabr::JabrModel& m, const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("variable", "expected kind:index, got " + spec);
  const std::string kind = spec.substr(0, colon);
  const std::size_t k = std::stoul(spec.substr(colon + 1));
  const std::vector<int>* v = kind == "pg"    ? &m.pg
                              : kind == "qg"  ? &m.qg
                              : kind == "cii" ? &m.cii
                              : kind == "cij" ? &m.cij
                              : kind == "sij" ? &m.sij
                                              : nullptr;
  if (!v || k >= v->size()) throw CLI::ValidationError("variable", "unknown variable " + spec);
  return (*v)[k];
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  if (!f) throw ValidationError("cannot write " + p.string());
  f << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radial OPF relaxations, cuts and global solves"};
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", verbose, "print parser warnings");

  CaseArgs relax_case;
  bool relax_global = false;
  SolveFlags relax_flags;
  auto* relax = app.add_subcommand("relax", "SOCP relaxation value and exactness");
  add_case_options(relax, relax_case);
  relax->add_flag("--global", relax_global, "also run the global solver");
  add_solve_options(relax, relax_flags);

  CaseArgs sweep_case;
  double from = 0.8, to = 1.2, step = 0.01;
  bool sweep_global = false;
  SolveFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "relax over a range of load factors, CSV");
  add_case_options(sweep, sweep_case);
  sweep->add_option("--from", from);
  sweep->add_option("--to", to);
  sweep->add_option("--step", step)->check(CLI::PositiveNumber);
  sweep->add_flag("--global", sweep_global, "also run the global solver");
  add_solve_options(sweep, sweep_flags);

  std::string instance_path, classify_case;
  auto* classify = app.add_subcommand("classify2bus", "closed-form exactness verdict for a two-bus instance");
  classify->add_option("instance", instance_path, "instance JSON")->check(CLI::ExistingFile);
  classify->add_option("--case", classify_case, "two-bus network file")->check(CLI::ExistingFile);
  classify->require_option(1);

  CaseArgs solve_case;
  SolveFlags solve_flags;
  std::string report_path;
  auto* solve = app.add_subcommand("solve", "global solve, JSON report");
  add_case_options(solve, solve_case);
  add_solve_options(solve, solve_flags);
  solve->add_option("--report", report_path, "also write the report here");

  CaseArgs tighten_case;
  std::string method = "socp", bounds_path;
  int rounds = 2;
  auto* tight = app.add_subcommand("tighten", "line bounds and cuts, CSV");
  add_case_options(tight, tighten_case);
  tight->add_option("--method", method)->check(CLI::IsMember({"socp", "fixed"}));
  tight->add_option("--rounds", rounds, "rounds for --method fixed")->check(CLI::PositiveNumber);
  tight->add_option("--bounds", bounds_path, "write line bounds CSV here");

  std::vector<std::string> lib_cases;
  std::string seed_spec = "0-59", out_dir = "library";
  double lib_time = 60.0, min_gap = 0.0, lib_gamma = 1.0;
  bool lib_all = false, lib_no_solve = false;
  int lib_workers = 1;
  auto* genlib = app.add_subcommand("genlib", "radial instances from meshed cases, with manifest");
  genlib->add_option("--case", lib_cases, "meshed case files")->required()->check(CLI::ExistingFile);
  genlib->add_option("--seeds,--seed", seed_spec, "e.g. 0-59 or 3,7,20-25");
  genlib->add_option("--gamma", lib_gamma, "uniform load factor applied after the perturbation");
  genlib->add_option("--out", out_dir, "output directory");
  genlib->add_option("--time-limit", lib_time, "seconds per global solve")->check(CLI::NonNegativeNumber);
  genlib->add_option("--workers", lib_workers)->check(CLI::PositiveNumber);
  genlib->add_option("--min-gap", min_gap, "keep instances whose gap in % is at least this");
  genlib->add_flag("--all", lib_all, "keep exact and infeasible instances too");
  genlib->add_flag("--no-solve", lib_no_solve, "skip the global solve");

  std::string plot_instance, plot_dir = ".", xvar = "pg:0", yvar = "qg:0";
  double resolution = 0.005;
  int directions = 360;
  CaseArgs plot_case;
  auto* plot = app.add_subcommand("plotdata", "CSV data for feasible-region plots");
  plot->add_option("--instance", plot_instance, "two-bus instance JSON: (c11, c22) projections")
      ->check(CLI::ExistingFile);
  plot->add_option("--case", plot_case.path, "network: SOCP projection onto --x/--y")->check(CLI::ExistingFile);
  plot->add_option("--gamma", plot_case.gamma);
  plot->add_option("--scale", plot_case.scale)->check(CLI::IsMember({"both", "active", "reactive"}));
  plot->add_option("--x", xvar, "pg:k, qg:k, cii:k, cij:k or sij:k");
  plot->add_option("--y", yvar);
  plot->add_option("--directions", directions)->check(CLI::PositiveNumber);
  plot->add_option("--resolution", resolution)->check(CLI::PositiveNumber);
  plot->add_option("--out", plot_dir, "output directory");
  plot->require_option(1, 0);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  try {
    if (*relax) {
      const auto r = evaluate(read(relax_case.path), relax_case, relax_case.gamma,
                              relax_global ? std::optional(relax_flags) : std::nullopt);
      header(std::cout, relax_global);
      print_row(std::cout, r);
      return relax_exit(r);
    }

    if (*sweep) {
      const auto base = read(sweep_case.path);
      header(std::cout, sweep_global);
      for (long k = 0;; ++k) {
        // round to 1e-9 so that sweep rows match relax rows for the same decimal
        const double g = std::round((from + k * step) * 1e9) / 1e9;
        if (g > to + 1e-12) break;
        print_row(std::cout, evaluate(base, sweep_case, g, sweep_global ? std::optional(sweep_flags) : std::nullopt));
      }
      return ok;
    }

    if (*classify) {
      twobus::TwoBusInstance inst;
      if (!instance_path.empty()) {
        std::ifstream f(instance_path);
        nlohmann::json j;
        try {
          f >> j;
        } catch (const nlohmann::json::exception& e) {
          throw ParseError(0, e.what());
        }
        inst = twobus::instance_from_json(j);
      } else {
        inst = twobus::from_network(read(classify_case));
      }
      const auto c = twobus::classify(inst);
      std::cout << twobus::to_json(c).dump(2) << '\n';
      if (c.verdict == twobus::Verdict::opf_infeasible || c.verdict == twobus::Verdict::both_infeasible) {
        return opf_infeasible;
      }
      return ok;
    }

    if (*solve) {
      const auto net = load(solve_case, solve_case.gamma);
      const auto relax_r = jabr::solve_relaxation(net);
      const auto r = bnb::solve_global(net, solve_flags.options());
      auto j = bnb::to_json(r);
      j["instance"] = net.name;
      j["gamma"] = solve_case.gamma;
      j["exact"] = relax_r.status == conic::Status::optimal && relax_r.exactness.exact;
      const double gp = gap_pct(r.socp_value, r.status == bnb::Status::global_optimal ? r.upper : conic::kInf);
      j["gap_pct"] = std::isfinite(gp) ? nlohmann::json(gp) : nlohmann::json(nullptr);
      std::cout << j.dump(2) << '\n';
      if (!report_path.empty()) write_file(report_path, j.dump(2) + "\n");
      for (const auto& w : r.warnings) fmt::print(stderr, "warning: {}\n", w);
      return exit_code(r.status);
    }

    if (*tight) {
      const auto net = load(tighten_case, tighten_case.gamma);
      tighten::BoundOptions o;
      o.method = method == "socp" ? tighten::Method::socp : tighten::Method::fixed_rounds;
      o.rounds = rounds;
      tighten::Algorithm1Result res;
      try {
        res = tighten::run_algorithm1(net, o);
      } catch (const InfeasibleError& e) {
        fmt::print(stderr, "infeasible: {}\n", e.what());
        return opf_infeasible;
      }
      for (const auto& w : res.warnings) fmt::print(stderr, "warning: {}\n", w);
      tighten::write_cuts_csv(std::cout, res.cuts);
      if (!bounds_path.empty()) {
        std::ostringstream b;
        b << "line,cmin,cmax,smin,smax\n";
        for (std::size_t l = 0; l < res.bounds.size(); ++l) {
          const auto& x = res.bounds[l];
          fmt::print(b, "{},{:.17g},{:.17g},{:.17g},{:.17g}\n", l, x.cmin, x.cmax, x.smin, x.smax);
        }
        write_file(bounds_path, b.str());
      }
      return ok;
    }

    if (*genlib) {
      fs::create_directories(out_dir);
      std::ostringstream manifest;
      manifest << "name,source,seed,gamma,buses,lines,socp_status,socp,global_status,global,gap_pct,nodes,cuts,"
                  "root_gap_pct\n";
      const auto seeds = parse_seeds(seed_spec);
      for (const auto& path : lib_cases) {
        const auto meshed = read(path);
        for (const long seed : seeds) {
          auto n = library::perturbed_tree(meshed, static_cast<std::uint64_t>(seed));
          if (lib_gamma != 1.0) n = net::scale_load(n, lib_gamma);
          const auto rel = jabr::solve_relaxation(n);
          const bool rel_ok = rel.status == conic::Status::optimal;
          std::optional<bnb::BnbResult> g;
          if (!lib_no_solve && rel_ok) {
            auto o = bnb::Options{};
            o.time_limit = lib_time;
            o.workers = lib_workers;
            g = bnb::solve_global(n, o);
          }
          const bool optimal = g && g->status == bnb::Status::global_optimal;
          const double gp = optimal ? gap_pct(rel.objective, g->upper) : conic::kInf;
          bool keep = lib_all;
          if (!keep && rel_ok && !rel.exactness.exact) {
            keep = lib_no_solve || (g && g->status != bnb::Status::infeasible && (!optimal || gp >= min_gap));
          }
          fmt::print(stderr, "{} socp {} {}\n", n.name, conic::to_string(rel.status),
                     g ? bnb::to_string(g->status) : "-");
          if (!keep) continue;
          write_file(fs::path(out_dir) / (n.name + ".m"), net::write_case(n));
          fmt::print(manifest, "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", n.name,
                     fs::path(path).filename().string(), seed, num(lib_gamma), n.buses.size(), n.lines.size(), conic::to_string(rel.status),
                     rel_ok ? num(rel.objective) : "", g ? bnb::to_string(g->status) : "",
                     optimal ? num(g->upper) : "", optimal ? num(gp) : "", g ? std::to_string(g->nodes) : "",
                     g ? std::to_string(g->cuts) : "", g && optimal ? num(g->root_gap_pct) : "");
        }
      }
      write_file(fs::path(out_dir) / "manifest.csv", manifest.str());
      return ok;
    }

    if (*plot) {
      fs::create_directories(plot_dir);
      if (!plot_instance.empty()) {
        std::ifstream f(plot_instance);
        nlohmann::json j;
        try {
          f >> j;
        } catch (const nlohmann::json::exception& e) {
          throw ParseError(0, e.what());
        }
        const auto s = twobus::sample_regions(twobus::instance_from_json(j), resolution);
        write_file(fs::path(plot_dir) / "hyperbola.csv", s.hyperbola);
        write_file(fs::path(plot_dir) / "region.csv", s.region);
        write_file(fs::path(plot_dir) / "points.csv", s.points);
        return ok;
      }
      // boundary of the relaxation's projection, one support point per direction
      const auto net = load(plot_case, plot_case.gamma);
      auto m = jabr::build_model(net);
      const int xi = model_var(m, xvar), yi = model_var(m, yvar);
      const bool power = xvar.rfind("pg", 0) == 0 || xvar.rfind("qg", 0) == 0;
      const bool power_y = yvar.rfind("pg", 0) == 0 || yvar.rfind("qg", 0) == 0;
      std::ostringstream out;
      out << "direction,x,y\n";
      for (int k = 0; k < directions; ++k) {
        const double a = 2.0 * M_PI * k / directions;
        m.program.clear_objective();
        m.program.set_objective_linear(xi, -std::cos(a));
        m.program.add_objective_linear(yi, -std::sin(a));
        const auto sol = conic::solve(m.program);
        if (!sol.optimal()) continue;
        fmt::print(out, "{:.6f},{:.10g},{:.10g}\n", a, sol.x[xi] * (power ? net.base_mva : 1.0),
                   sol.x[yi] * (power_y ? net.base_mva : 1.0));
      }
      write_file(fs::path(plot_dir) / "projection.csv", out.str());
      return ok;
    }
  } catch (const ParseError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return data_error;
  } catch (const ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return data_error;
  } catch (const ModelError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return data_error;
  } catch (const CLI::ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return usage;
  }
  return ok;
}
