#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fastslow/lie_geometry.hpp"

namespace fastslow {

/// A reproducible collection of simulated states with uniform weights and
/// RNG provenance.
struct Ensemble {
  std::vector<GroupElement> states;
  std::uint64_t master_seed = 0;
  std::string config_digest;
};

}  // namespace fastslow
