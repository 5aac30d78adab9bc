#include "radopf/netmodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "radopf/errors.hpp"

namespace radopf::net {

int Network::index(int bus_id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == bus_id) return static_cast<int>(i);
  }
  throw ValidationError(fmt::format("unknown bus id {}", bus_id));
}

std::vector<std::vector<int>> Network::generators_by_bus() const {
  std::vector<std::vector<int>> out(buses.size());
  for (std::size_t g = 0; g < generators.size(); ++g) {
    out[index(generators[g].bus)].push_back(static_cast<int>(g));
  }
  return out;
}

GenBounds bus_generation_bounds(const Network& net, int bus_position) {
  GenBounds b;
  for (const auto& g : net.generators) {
    if (net.index(g.bus) != bus_position) continue;
    b.pmin += g.pmin;
    b.pmax += g.pmax;
    b.qmin += g.qmin;
    b.qmax += g.qmax;
  }
  return b;
}

namespace {

struct Matrix {
  int first_line = 0;
  std::vector<std::vector<double>> rows;
  std::vector<int> row_lines;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view strip_comment(std::string_view s) {
  auto pos = s.find('%');
  if (pos != std::string_view::npos) s = s.substr(0, pos);
  return s;
}

double parse_number(std::string_view tok, int line) {
  tok = trim(tok);
  if (tok == "Inf" || tok == "inf") return std::numeric_limits<double>::infinity();
  if (tok == "-Inf" || tok == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(line, fmt::format("not a number: '{}'", tok));
  }
  return v;
}

// Split a matrix body line into rows at ';', numbers at whitespace or ','.
void append_matrix_text(Matrix& m, std::string_view body, int line, std::vector<double>& pending) {
  std::size_t start = 0;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    const bool end = i == body.size();
    const char ch = end ? ' ' : body[i];
    if (ch == ';' || std::isspace(static_cast<unsigned char>(ch)) || ch == ',') {
      if (i > start) pending.push_back(parse_number(body.substr(start, i - start), line));
      start = i + 1;
      if (ch == ';' && !pending.empty()) {
        m.rows.push_back(std::move(pending));
        m.row_lines.push_back(line);
        pending.clear();
      }
    }
  }
  // a row may also be terminated by the end of the text line
  if (!pending.empty()) {
    m.rows.push_back(std::move(pending));
    m.row_lines.push_back(line);
    pending.clear();
  }
}

void require_columns(const Matrix& m, std::size_t r, std::size_t n, const char* table) {
  if (m.rows[r].size() < n) {
    throw ParseError(m.row_lines[r], fmt::format("{} row has {} columns, expected at least {}", table,
                                                 m.rows[r].size(), n));
  }
}

}  // namespace

Network parse_case(std::string_view text, std::string name, std::vector<std::string>* warnings) {
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };

  std::map<std::string, Matrix> matrices;
  std::optional<double> base_mva;

  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  Matrix* open = nullptr;
  std::vector<double> pending;
  bool skipping_cell = false;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view ln = trim(strip_comment(raw));
    if (ln.empty()) continue;

    if (skipping_cell) {
      if (ln.find('}') != std::string_view::npos) skipping_cell = false;
      continue;
    }

    if (open) {
      auto close = ln.find(']');
      std::string_view body = close == std::string_view::npos ? ln : ln.substr(0, close);
      append_matrix_text(*open, body, line_no, pending);
      if (close != std::string_view::npos) open = nullptr;
      continue;
    }

    if (ln.starts_with("function")) continue;
    if (!ln.starts_with("mpc.")) {
      throw ParseError(line_no, fmt::format("unexpected statement '{}'", ln));
    }
    auto eq = ln.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "missing '=' in assignment");
    std::string field{trim(ln.substr(4, eq - 4))};
    std::string_view rhs = trim(ln.substr(eq + 1));

    if (!rhs.empty() && rhs.front() == '[') {
      auto& m = matrices[field];
      m = Matrix{};
      m.first_line = line_no;
      rhs.remove_prefix(1);
      auto close = rhs.find(']');
      std::string_view body = close == std::string_view::npos ? rhs : rhs.substr(0, close);
      append_matrix_text(m, body, line_no, pending);
      if (close == std::string_view::npos) open = &m;
      if (field != "bus" && field != "gen" && field != "branch" && field != "gencost") {
        warn(fmt::format("line {}: ignoring unsupported field mpc.{}", line_no, field));
      }
    } else if (!rhs.empty() && rhs.front() == '{') {
      warn(fmt::format("line {}: ignoring unsupported field mpc.{}", line_no, field));
      if (rhs.find('}') == std::string_view::npos) skipping_cell = true;
    } else if (field == "baseMVA") {
      if (rhs.ends_with(';')) rhs.remove_suffix(1);
      base_mva = parse_number(rhs, line_no);
      if (!(*base_mva > 0.0)) throw ParseError(line_no, "baseMVA must be positive");
    } else {
      warn(fmt::format("line {}: ignoring unsupported field mpc.{}", line_no, field));
    }
  }
  if (open) throw ParseError(line_no, "unterminated matrix");

  for (const char* required : {"bus", "gen", "branch"}) {
    if (!matrices.contains(required)) {
      throw ParseError(line_no, fmt::format("missing table mpc.{}", required));
    }
  }

  Network net;
  net.name = std::move(name);
  net.base_mva = base_mva.value_or(100.0);
  const double base = net.base_mva;

  const auto& bus = matrices["bus"];
  for (std::size_t r = 0; r < bus.rows.size(); ++r) {
    require_columns(bus, r, 13, "bus");
    const auto& row = bus.rows[r];
    if (row[1] == 4) continue;  // isolated
    Bus b;
    b.id = static_cast<int>(row[0]);
    b.pd = row[2] / base;
    b.qd = row[3] / base;
    b.gsh = row[4] / base;
    b.bsh = row[5] / base;
    b.vmax = row[11];
    b.vmin = row[12];
    net.buses.push_back(b);
  }

  const auto& gen = matrices["gen"];
  std::vector<std::size_t> gen_rows;
  for (std::size_t r = 0; r < gen.rows.size(); ++r) {
    require_columns(gen, r, 10, "gen");
    const auto& row = gen.rows[r];
    if (row[7] <= 0) continue;  // out of service
    Generator g;
    g.bus = static_cast<int>(row[0]);
    g.qmax = row[3] / base;
    g.qmin = row[4] / base;
    g.pmax = row[8] / base;
    g.pmin = row[9] / base;
    net.generators.push_back(g);
    gen_rows.push_back(r);
  }

  if (matrices.contains("gencost")) {
    const auto& gc = matrices["gencost"];
    if (gc.rows.size() < gen.rows.size()) {
      throw ParseError(gc.first_line, fmt::format("gencost has {} rows for {} generators", gc.rows.size(),
                                                  gen.rows.size()));
    }
    for (std::size_t k = 0; k < gen_rows.size(); ++k) {
      const std::size_t r = gen_rows[k];
      require_columns(gc, r, 4, "gencost");
      const auto& row = gc.rows[r];
      if (row[0] != 2) throw ParseError(gc.row_lines[r], "only polynomial gencost (model 2) is supported");
      const int n = static_cast<int>(row[3]);
      if (n < 1 || n > 3) throw ParseError(gc.row_lines[r], "polynomial cost degree must be at most 2");
      require_columns(gc, r, 4 + n, "gencost");
      CostFunction c;
      // coefficients are listed highest order first
      for (int k2 = 0; k2 < n; ++k2) {
        const int power = n - 1 - k2;
        const double v = row[4 + k2];
        if (power == 2) c.c2 = v * base * base;
        if (power == 1) c.c1 = v * base;
        if (power == 0) c.c0 = v;
      }
      net.generators[k].cost = c;
    }
  } else {
    warn("no mpc.gencost table; generators have zero cost");
  }

  const auto& br = matrices["branch"];
  for (std::size_t r = 0; r < br.rows.size(); ++r) {
    require_columns(br, r, 11, "branch");
    const auto& row = br.rows[r];
    if (row[10] <= 0) continue;
    Line l;
    l.from = static_cast<int>(row[0]);
    l.to = static_cast<int>(row[1]);
    l.r = row[2];
    l.x = row[3];
    l.charging = row[4];
    l.tap = row[8] == 0.0 ? 1.0 : row[8];
    l.shift_deg = row[9];
    if (l.r * l.r + l.x * l.x <= 0.0) throw ParseError(br.row_lines[r], "branch with zero impedance");
    net.lines.push_back(l);
  }

  validate(net);
  return net;
}

std::string write_case(const Network& net) {
  const double base = net.base_mva;
  std::string out;
  out += fmt::format("function mpc = {}\nmpc.version = '2';\nmpc.baseMVA = {:.17g};\n\n", net.name, base);
  out += "%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n";
  std::vector<bool> has_gen(net.buses.size(), false);
  for (const auto& g : net.generators) has_gen[net.index(g.bus)] = true;
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto& b = net.buses[i];
    const int type = i == 0 ? 3 : (has_gen[i] ? 2 : 1);
    out += fmt::format("\t{}\t{}\t{:.17g}\t{:.17g}\t{:.17g}\t{:.17g}\t1\t1\t0\t0\t1\t{:.17g}\t{:.17g};\n", b.id, type,
                       b.pd * base, b.qd * base, b.gsh * base, b.bsh * base, b.vmax, b.vmin);
  }
  out += "];\n\n%% generator data\n";
  out += "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n";
  for (const auto& g : net.generators) {
    out += fmt::format("\t{}\t0\t0\t{:.17g}\t{:.17g}\t1\t{:.17g}\t1\t{:.17g}\t{:.17g};\n", g.bus, g.qmax * base,
                       g.qmin * base, base, g.pmax * base, g.pmin * base);
  }
  out += "];\n\n%% branch data\n";
  out += "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = [\n";
  for (const auto& l : net.lines) {
    out += fmt::format("\t{}\t{}\t{:.17g}\t{:.17g}\t{:.17g}\t0\t0\t0\t{:.17g}\t{:.17g}\t1\t-360\t360;\n", l.from, l.to,
                       l.r, l.x, l.charging, l.tap == 1.0 ? 0.0 : l.tap, l.shift_deg);
  }
  out += "];\n\n%% generator cost data\n%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0\nmpc.gencost = [\n";
  for (const auto& g : net.generators) {
    out += fmt::format("\t2\t0\t0\t3\t{:.17g}\t{:.17g}\t{:.17g};\n", g.cost.c2 / (base * base), g.cost.c1 / base,
                       g.cost.c0);
  }
  out += "];\n";
  return out;
}

nlohmann::json to_json(const Network& net) {
  using nlohmann::json;
  json j;
  j["name"] = net.name;
  j["base_mva"] = net.base_mva;
  j["buses"] = json::array();
  for (const auto& b : net.buses) {
    j["buses"].push_back({{"id", b.id},
                          {"vmin", b.vmin},
                          {"vmax", b.vmax},
                          {"pd", b.pd},
                          {"qd", b.qd},
                          {"gsh", b.gsh},
                          {"bsh", b.bsh}});
  }
  j["generators"] = json::array();
  for (const auto& g : net.generators) {
    j["generators"].push_back({{"bus", g.bus},
                               {"pmin", g.pmin},
                               {"pmax", g.pmax},
                               {"qmin", g.qmin},
                               {"qmax", g.qmax},
                               {"cost", {{"c2", g.cost.c2}, {"c1", g.cost.c1}, {"c0", g.cost.c0}}}});
  }
  j["lines"] = json::array();
  for (const auto& l : net.lines) {
    json lj = {{"from", l.from}, {"to", l.to}, {"r", l.r}, {"x", l.x}, {"g", l.g()}, {"b", l.b()}};
    if (l.charging != 0.0) lj["charging"] = l.charging;
    if (l.tap != 1.0) lj["tap"] = l.tap;
    if (l.shift_deg != 0.0) lj["shift_deg"] = l.shift_deg;
    j["lines"].push_back(lj);
  }
  return j;
}

Network network_from_json(const nlohmann::json& j) {
  Network net;
  try {
    net.name = j.value("name", "case");
    net.base_mva = j.value("base_mva", 100.0);
    for (const auto& bj : j.at("buses")) {
      Bus b;
      b.id = bj.at("id").get<int>();
      b.vmin = bj.at("vmin").get<double>();
      b.vmax = bj.at("vmax").get<double>();
      b.pd = bj.value("pd", 0.0);
      b.qd = bj.value("qd", 0.0);
      b.gsh = bj.value("gsh", 0.0);
      b.bsh = bj.value("bsh", 0.0);
      net.buses.push_back(b);
    }
    for (const auto& gj : j.at("generators")) {
      Generator g;
      g.bus = gj.at("bus").get<int>();
      g.pmin = gj.at("pmin").get<double>();
      g.pmax = gj.at("pmax").get<double>();
      g.qmin = gj.at("qmin").get<double>();
      g.qmax = gj.at("qmax").get<double>();
      if (gj.contains("cost")) {
        const auto& cj = gj["cost"];
        g.cost = {cj.value("c2", 0.0), cj.value("c1", 0.0), cj.value("c0", 0.0)};
      }
      net.generators.push_back(g);
    }
    for (const auto& lj : j.at("lines")) {
      Line l;
      l.from = lj.at("from").get<int>();
      l.to = lj.at("to").get<int>();
      l.r = lj.at("r").get<double>();
      l.x = lj.at("x").get<double>();
      l.charging = lj.value("charging", 0.0);
      l.tap = lj.value("tap", 1.0);
      l.shift_deg = lj.value("shift_deg", 0.0);
      net.lines.push_back(l);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("network JSON: ") + e.what());
  }
  validate(net);
  return net;
}

Network load_case(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  if (path.extension() == ".json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(0, e.what());
    }
    if (!j.contains("name")) j["name"] = path.stem().string();
    return network_from_json(j);
  }
  return parse_case(ss.str(), path.stem().string(), warnings);
}

namespace {

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

}  // namespace

bool is_connected(const Network& net) {
  if (net.buses.empty()) return false;
  DisjointSets ds(net.buses.size());
  std::size_t merged = 0;
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    if (ds.unite(net.from_index(l), net.to_index(l))) ++merged;
  }
  return merged + 1 == net.buses.size();
}

bool is_radial(const Network& net) {
  return net.lines.size() + 1 == net.buses.size() && is_connected(net);
}

void validate(const Network& net) {
  if (net.buses.empty()) throw ValidationError("network has no buses");
  if (!(net.base_mva > 0.0)) throw ValidationError("base_mva must be positive");
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto& b = net.buses[i];
    for (std::size_t k = 0; k < i; ++k) {
      if (net.buses[k].id == b.id) throw ValidationError(fmt::format("duplicate bus id {}", b.id));
    }
    if (!(b.vmin > 0.0) || !(b.vmin <= b.vmax)) {
      throw ValidationError(fmt::format("bus {}: need 0 < vmin <= vmax", b.id));
    }
    if (!std::isfinite(b.pd) || !std::isfinite(b.qd)) throw ValidationError(fmt::format("bus {}: load not finite", b.id));
  }
  for (const auto& g : net.generators) {
    net.index(g.bus);
    if (g.pmin > g.pmax || g.qmin > g.qmax) {
      throw ValidationError(fmt::format("generator at bus {}: lower bound above upper bound", g.bus));
    }
    if (g.cost.c2 < 0.0) throw ValidationError(fmt::format("generator at bus {}: nonconvex cost", g.bus));
  }
  for (const auto& l : net.lines) {
    net.index(l.from);
    net.index(l.to);
    if (l.from == l.to) throw ValidationError(fmt::format("line {}-{} is a self loop", l.from, l.to));
    if (!(l.r * l.r + l.x * l.x > 0.0)) throw ValidationError(fmt::format("line {}-{}: zero impedance", l.from, l.to));
  }
  if (!is_connected(net)) throw ValidationError("network is not connected");
}

void require_radial_model(const Network& net) {
  if (!is_radial(net)) {
    throw ModelError(fmt::format("network '{}' is not radial ({} buses, {} lines)", net.name, net.buses.size(),
                                 net.lines.size()));
  }
  for (const auto& l : net.lines) {
    if (l.charging != 0.0 || l.tap != 1.0 || l.shift_deg != 0.0) {
      throw ModelError(fmt::format("line {}-{} has charging, tap or phase shift", l.from, l.to));
    }
  }
}

Admittance admittance(const Network& net) {
  const auto n = static_cast<Eigen::Index>(net.buses.size());
  Admittance y{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const int i = net.from_index(l);
    const int j = net.to_index(l);
    const double g = net.lines[l].g();
    const double b = net.lines[l].b();
    y.G(i, j) += g;
    y.G(j, i) += g;
    y.B(i, j) += b;
    y.B(j, i) += b;
    y.G(i, i) -= g;
    y.G(j, j) -= g;
    y.B(i, i) -= b;
    y.B(j, j) -= b;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    y.G(i, i) += net.buses[i].gsh;
    y.B(i, i) += net.buses[i].bsh;
  }
  return y;
}

Network spanning_tree(const Network& net, std::uint64_t seed) {
  if (!is_connected(net)) throw ValidationError("spanning_tree: network is not connected");
  std::vector<std::size_t> order(net.lines.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  DisjointSets ds(net.buses.size());
  std::vector<bool> keep(net.lines.size(), false);
  for (auto l : order) keep[l] = ds.unite(net.from_index(l), net.to_index(l));

  Network out = net;
  out.lines.clear();
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    if (keep[l]) out.lines.push_back(net.lines[l]);
  }
  return out;
}

Network scale_load(const Network& net, double gamma, LoadMask mask) {
  if (!(gamma > 0.0)) throw ValidationError("load scale must be positive");
  Network out = net;
  for (auto& b : out.buses) {
    if (mask.active) b.pd *= gamma;
    if (mask.reactive) b.qd *= gamma;
  }
  return out;
}

Network strip_unsupported(const Network& net) {
  Network out = net;
  for (auto& l : out.lines) {
    l.charging = 0.0;
    l.tap = 1.0;
    l.shift_deg = 0.0;
  }
  return out;
}

}  // namespace radopf::net
