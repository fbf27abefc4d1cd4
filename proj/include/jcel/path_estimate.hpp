#pragma once

#include <limits>
#include <vector>

#include "jcel/types.hpp"

namespace jcel {

/// Posterior summary of one extracted path on the (k, m) channel.
struct PathEstimate {
    double delay_mean = 0.0;  // seconds
    double delay_var = std::numeric_limits<double>::infinity();  // seconds^2
    Complex gain_mean;
    double gain_var = 0.0;  // per complex gain
    int user = 0;
    int waveguide = 0;
    int slot = 0;
    bool heuristic_var = false;  // variances come from a proxy, not a posterior
};

using PathList = std::vector<PathEstimate>;

}  // namespace jcel
