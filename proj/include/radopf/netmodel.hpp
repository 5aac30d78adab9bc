#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace radopf::net {

/// Bus data in per-unit. `gsh`/`bsh` are the shunt conductance/susceptance.
struct Bus {
  int id = 0;
  double vmin = 0.9;
  double vmax = 1.1;
  double pd = 0.0;
  double qd = 0.0;
  double gsh = 0.0;
  double bsh = 0.0;

  bool operator==(const Bus&) const = default;
};

/// Polynomial production cost c2*p^2 + c1*p + c0 with p in per-unit.
struct CostFunction {
  double c2 = 0.0;
  double c1 = 0.0;
  double c0 = 0.0;

  bool is_linear() const noexcept { return c2 == 0.0; }
  double operator()(double p) const noexcept { return (c2 * p + c1) * p + c0; }

  bool operator==(const CostFunction&) const = default;
};

struct Generator {
  int bus = 0;  ///< bus id
  double pmin = 0.0;
  double pmax = 0.0;
  double qmin = 0.0;
  double qmax = 0.0;
  CostFunction cost;

  bool operator==(const Generator&) const = default;
};

/// A series branch. `charging`, `tap` and `shift_deg` are carried only so that
/// radial solves can reject branches the model cannot represent.
struct Line {
  int from = 0;  ///< bus id
  int to = 0;    ///< bus id
  double r = 0.0;
  double x = 0.0;
  double charging = 0.0;
  double tap = 1.0;
  double shift_deg = 0.0;

  /// Off-diagonal nodal admittance entries Y_ij = G_ij + i B_ij, i.e. the
  /// negated series admittance -1/(r + ix).
  double g() const noexcept { return -r / (r * r + x * x); }
  double b() const noexcept { return x / (r * r + x * x); }

  bool operator==(const Line&) const = default;
};

struct Network {
  std::string name = "case";
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Line> lines;

  /// Position of the bus with the given id; throws ValidationError if absent.
  int index(int bus_id) const;
  int from_index(std::size_t line) const { return index(lines[line].from); }
  int to_index(std::size_t line) const { return index(lines[line].to); }

  /// Generators attached to each bus, by bus position.
  std::vector<std::vector<int>> generators_by_bus() const;

  bool operator==(const Network&) const = default;
};

/// Aggregate generation limits at a bus; all zero when no generator is attached.
struct GenBounds {
  double pmin = 0.0;
  double pmax = 0.0;
  double qmin = 0.0;
  double qmax = 0.0;
};
GenBounds bus_generation_bounds(const Network& net, int bus_position);

/// Parse the supported MATPOWER subset (baseMVA, bus, gen, branch, gencost with
/// polynomial cost of degree <= 2). Values are converted to per-unit and cost
/// coefficients rescaled to $/p.u.^k. Unknown fields are skipped and reported
/// through `warnings` when given.
Network parse_case(std::string_view text, std::string name = "case",
                   std::vector<std::string>* warnings = nullptr);

/// Write a MATPOWER-style case that parse_case reads back to the same network.
std::string write_case(const Network& net);

nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

/// Load `.json` or MATPOWER `.m` text from disk, dispatching on the extension.
Network load_case(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

/// Checks bounds, impedances, id references and connectivity.
void validate(const Network& net);

bool is_connected(const Network& net);
bool is_radial(const Network& net);

/// Throws ModelError unless the network is radial and free of charging, taps
/// and phase shift.
void require_radial_model(const Network& net);

struct Admittance {
  Eigen::MatrixXd G;
  Eigen::MatrixXd B;
};
Admittance admittance(const Network& net);

/// Randomised Kruskal: shuffle the branch order with `seed`, keep branches that
/// join two components. Kept branches retain their original relative order.
Network spanning_tree(const Network& net, std::uint64_t seed);

struct LoadMask {
  bool active = true;
  bool reactive = true;
};
Network scale_load(const Network& net, double gamma, LoadMask mask = {});

/// Drop line charging, taps and phase shifts so the network fits the radial model.
Network strip_unsupported(const Network& net);

}  // namespace radopf::net
