#pragma once

#include <cstdint>
#include <filesystem>

#include "jcel/rng.hpp"
#include "jcel/types.hpp"

namespace jcel {

/// Zadoff-Chu sequence, entry n = exp(-j*pi*u*n*(n+1)/N). Throws ParameterError
/// unless 1 <= root < length, length odd and gcd(root, length) == 1.
VectorXcd zc_sequence(int root, int length);

inline constexpr int kZcLength = 31;

struct PilotMatrix {
    MatrixXcd entries;  // K x P
    double power = 1.0;  // per-symbol power, watts
};

/// Top-left K x P block (shifted by the offsets) of the 31 x 31 matrix whose
/// u-th row is the root-u ZC sequence, scaled by sqrt(tx_power).
PilotMatrix pilot_matrix(int num_users, int num_frames, double tx_power, int row_offset = 0, int col_offset = 0);

struct ObservationDims {
    int waveguides = 0;   // M
    int users = 0;        // K
    int frames = 0;       // P
    int subcarriers = 0;  // L

    int channel_size() const { return waveguides * users * subcarriers; }
    int observation_size() const { return waveguides * frames * subcarriers; }
    bool operator==(const ObservationDims&) const = default;
};

struct FreqObservation {
    ChannelTensor y;  // L matrices of size M x P
    PilotMatrix pilots;
    double noise_var = 0.0;  // per complex entry, watts
    std::uint64_t seed = 0;

    ObservationDims dims() const;
    void validate() const;
};

/// Y[l] = H[l] X + N[l] with circular Gaussian N of variance noise_var per entry.
FreqObservation simulate_rx(const ChannelTensor& h, const PilotMatrix& pilots, double noise_var, Rng& rng);

/// Real-valued form y = M h + n of the stacked model, with
/// M_complex = I_L kron (X^T kron I_M). The dense operator is never formed
/// unless explicitly requested.
struct RealStack {
    VectorXd y;
    MatrixXcd pilots;
    ObservationDims dims;
    double noise_var_real = 0.0;

    /// Real stack of M_complex * h_complex, for a real-stacked channel h.
    VectorXd apply(const VectorXd& h) const;
    /// Real stack of M_complex^H * y_complex.
    VectorXd apply_adjoint(const VectorXd& y_real) const;
    MatrixXd dense_operator() const;
};

RealStack stack_real(const FreqObservation& obs);

/// Vec([T[0], ..., T[L-1]]) split into [real; imag].
VectorXd stack_tensor(const ChannelTensor& t);
ChannelTensor unstack_tensor(const VectorXd& stacked, int rows, int cols, int subcarriers);

struct ChannelSlice {
    VectorXcd values;  // length L
    double variance = 0.0;  // per complex entry
};

/// Channel of user k towards waveguide m across subcarriers (0-based indices);
/// `real_var` is the per-real-coordinate variance of the stack.
ChannelSlice unstack_channel(const VectorXd& h_real, double real_var, const ObservationDims& dims, int k, int m);

/// Real-stack positions of the (k, m, l) channel entry.
inline int channel_real_index(const ObservationDims& d, int k, int m, int l) {
    return d.waveguides * d.users * l + k * d.waveguides + m;
}

// Binary observation files: fixed header (magic, dims, seed, noise variance)
// followed by the pilot matrix and the L received matrices, column-major,
// little-endian doubles as (re, im) pairs.
void write_observation(const std::filesystem::path& path, const FreqObservation& obs);
FreqObservation read_observation(const std::filesystem::path& path);
void dump_observation_csv(const std::filesystem::path& path, const FreqObservation& obs);

}  // namespace jcel
