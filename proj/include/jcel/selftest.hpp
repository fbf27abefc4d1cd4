#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace jcel {

/// Outcome of one randomized invariant check.
struct PropertyResult {
    std::string name;
    bool passed = false;
    double worst = 0.0;      // largest observed error
    double tolerance = 0.0;
    int cases = 0;
    std::string detail;
};

PropertyResult check_dft_shift(std::uint64_t seed);
PropertyResult check_bessel_roundtrip(std::uint64_t seed);
PropertyResult check_hungarian_exhaustive(std::uint64_t seed);
PropertyResult check_fusion_grid(std::uint64_t seed);
PropertyResult check_ep_block_solve(std::uint64_t seed);
PropertyResult check_delta_jacobian(std::uint64_t seed);

/// All six checks in the order above.
std::vector<PropertyResult> run_selftest(std::uint64_t seed = 1);

}  // namespace jcel
