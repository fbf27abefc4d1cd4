#pragma once

#include <vector>

#include "jcel/path_estimate.hpp"
#include "jcel/types.hpp"

namespace jcel {

/// Overcomplete delay dictionary, atom n (0-based) = exp(-j 2 pi L_CP n l / (L N_d)).
struct DelayDictionary {
    MatrixXcd atoms;  // L x N_d
    VectorXd grid;    // delays in seconds
    int num_subcarriers = 0;
    int cp_length = 0;
    double sample_period = 0.0;
    bool underdetermined = false;  // N_d < L

    int size() const { return static_cast<int>(atoms.cols()); }
    double step() const { return cp_length * sample_period / size(); }
};

DelayDictionary build_dictionary(int num_subcarriers, int cp_length, int num_atoms, double sample_period);

struct OmpResult {
    PathList paths;
    std::vector<int> support;            // selected atom indices in selection order
    std::vector<double> residual_norms;  // after each round
    std::vector<VectorXcd> round_gains;  // LS gains of every round, kept for inspection
    bool rank_deficient = false;
};

/// Greedy sparse fit of `h` (length L) with `sparsity` atoms. Gains are the LS
/// solution on the final support. Variances are filled from the residual-power
/// proxy and flagged as heuristic.
OmpResult omp_extract_detailed(const VectorXcd& h, const DelayDictionary& dict, int sparsity);
PathList omp_extract(const VectorXcd& h, const DelayDictionary& dict, int sparsity);

/// CRLB on the delay of a single complex tone with amplitude |gain| observed on L
/// subcarriers in white noise of variance noise_var per complex sample.
double single_tone_delay_crlb(Complex gain, double noise_var, int num_subcarriers, double sample_period);

}  // namespace jcel
