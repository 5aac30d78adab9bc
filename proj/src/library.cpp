#include "radopf/library.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace radopf::library {

net::Network perturbed_tree(const net::Network& meshed, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto n = net::strip_unsupported(net::spanning_tree(meshed, seed));
  const int mode = static_cast<int>(seed % 3);
  for (auto& b : n.buses) {
    const double f = 0.5 + 1.5 * u(rng);
    b.pd *= f;
    b.qd = (mode >= 1 && u(rng) < 0.5) ? -b.qd * f * 2.0 : b.qd * f;
  }
  for (auto& g : n.generators) {
    if (u(rng) < 0.5) g.pmin += g.pmax * 0.3 * u(rng);
    if (mode == 2 && u(rng) < 0.5) g.qmin = std::min(g.qmax, 0.1 * u(rng) * g.qmax);
  }
  n.name = meshed.name + "_t" + std::to_string(seed);
  return n;
}

}  // namespace radopf::library
