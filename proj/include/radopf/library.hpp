#pragma once

#include <cstdint>

#include "radopf/netmodel.hpp"

namespace radopf::library {

/// Radial test instance from a meshed case: random spanning tree with
/// unsupported branch data removed, then loads and generator lower limits
/// perturbed by `seed`. Seeds with seed % 3 == 1 or 2 may flip reactive loads
/// to injections; seed % 3 == 2 may also raise qmin.
net::Network perturbed_tree(const net::Network& meshed, std::uint64_t seed);

}  // namespace radopf::library
