#include "jcel/waveform.hpp"

#include <numeric>

namespace jcel {

VectorXcd zc_sequence(int root, int length) {
    if (length < 1 || length % 2 == 0) throw ParameterError("zc_sequence: length must be odd");
    if (root < 1 || root >= length) throw ParameterError("zc_sequence: root out of range");
    if (std::gcd(root, length) != 1) throw ParameterError("zc_sequence: root not coprime with length");
    VectorXcd seq(length);
    for (int n = 0; n < length; ++n) {
        // n(n+1) is even, so reduce the exponent modulo 2N exactly in integers.
        const long long e = (static_cast<long long>(root) * n * (n + 1)) % (2LL * length);
        seq(n) = std::polar(1.0, -kPi * static_cast<double>(e) / length);
    }
    return seq;
}

PilotMatrix pilot_matrix(int num_users, int num_frames, double tx_power, int row_offset, int col_offset) {
    if (num_users < 1 || num_frames < 1) throw ParameterError("pilot_matrix: K and P must be positive");
    if (row_offset < 0 || col_offset < 0 || num_users + row_offset > kZcLength ||
        num_frames + col_offset > kZcLength)
        throw ParameterError("pilot_matrix: K and P (plus offsets) must not exceed 31");
    if (!(tx_power > 0.0)) throw ParameterError("pilot_matrix: power must be positive");
    MatrixXcd basis(kZcLength, kZcLength);
    for (int u = 1; u <= kZcLength - 1; ++u) basis.row(u - 1) = zc_sequence(u, kZcLength).transpose();
    // Root 31 is not coprime with 31; its row degenerates to all-ones.
    basis.row(kZcLength - 1).setOnes();
    return {std::sqrt(tx_power) * basis.block(row_offset, col_offset, num_users, num_frames), tx_power};
}

ObservationDims FreqObservation::dims() const {
    if (y.empty()) return {};
    return {static_cast<int>(y.front().rows()), static_cast<int>(pilots.entries.rows()),
            static_cast<int>(pilots.entries.cols()), static_cast<int>(y.size())};
}

void FreqObservation::validate() const {
    if (!(noise_var > 0.0)) throw ParameterError("observation: noise variance must be positive");
    if (y.empty()) throw ParameterError("observation: no subcarriers");
    const auto d = dims();
    for (const auto& yl : y)
        if (yl.rows() != d.waveguides || yl.cols() != d.frames)
            throw ParameterError("observation: inconsistent tensor dimensions");
}

FreqObservation simulate_rx(const ChannelTensor& h, const PilotMatrix& pilots, double noise_var, Rng& rng) {
    if (noise_var < 0.0) throw ParameterError("simulate_rx: negative noise variance");
    if (h.empty()) throw ParameterError("simulate_rx: empty channel");
    FreqObservation obs;
    obs.pilots = pilots;
    obs.noise_var = noise_var;
    obs.y.reserve(h.size());
    for (const auto& hl : h) {
        if (hl.cols() != pilots.entries.rows() || hl.rows() != h.front().rows())
            throw ParameterError("simulate_rx: channel and pilot shapes disagree");
        MatrixXcd yl = hl * pilots.entries;
        if (noise_var > 0.0)
            for (Eigen::Index c = 0; c < yl.cols(); ++c)
                for (Eigen::Index r = 0; r < yl.rows(); ++r) yl(r, c) += rng.complex_normal(noise_var);
        obs.y.push_back(std::move(yl));
    }
    return obs;
}

VectorXd stack_tensor(const ChannelTensor& t) {
    if (t.empty()) return {};
    const Eigen::Index block = t.front().size();
    const Eigen::Index n = block * static_cast<Eigen::Index>(t.size());
    VectorXd out(2 * n);
    for (std::size_t l = 0; l < t.size(); ++l) {
        const Eigen::Map<const VectorXcd> v(t[l].data(), block);
        out.segment(l * block, block) = v.real();
        out.segment(n + l * block, block) = v.imag();
    }
    return out;
}

ChannelTensor unstack_tensor(const VectorXd& stacked, int rows, int cols, int subcarriers) {
    const Eigen::Index block = static_cast<Eigen::Index>(rows) * cols;
    const Eigen::Index n = block * subcarriers;
    if (stacked.size() != 2 * n) throw ParameterError("unstack_tensor: size mismatch");
    ChannelTensor t(subcarriers, MatrixXcd(rows, cols));
    for (int l = 0; l < subcarriers; ++l) {
        Eigen::Map<VectorXcd> v(t[l].data(), block);
        v.real() = stacked.segment(l * block, block);
        v.imag() = stacked.segment(n + l * block, block);
    }
    return t;
}

RealStack stack_real(const FreqObservation& obs) {
    obs.validate();
    RealStack s;
    s.y = stack_tensor(obs.y);
    s.pilots = obs.pilots.entries;
    s.dims = obs.dims();
    s.noise_var_real = obs.noise_var / 2.0;
    return s;
}

VectorXd RealStack::apply(const VectorXd& h) const {
    const auto t = unstack_tensor(h, dims.waveguides, dims.users, dims.subcarriers);
    ChannelTensor out;
    out.reserve(t.size());
    for (const auto& hl : t) out.push_back(hl * pilots);
    return stack_tensor(out);
}

VectorXd RealStack::apply_adjoint(const VectorXd& y_real) const {
    const auto t = unstack_tensor(y_real, dims.waveguides, dims.frames, dims.subcarriers);
    ChannelTensor out;
    out.reserve(t.size());
    // (conj(X) kron I_M) Vec(Y) = Vec(Y X^H)
    for (const auto& yl : t) out.push_back(yl * pilots.adjoint());
    return stack_tensor(out);
}

MatrixXd RealStack::dense_operator() const {
    const int M = dims.waveguides, K = dims.users, P = dims.frames, L = dims.subcarriers;
    MatrixXcd op = MatrixXcd::Zero(static_cast<Eigen::Index>(M) * P * L, static_cast<Eigen::Index>(M) * K * L);
    for (int l = 0; l < L; ++l)
        for (int p = 0; p < P; ++p)
            for (int k = 0; k < K; ++k)
                for (int m = 0; m < M; ++m)
                    op(static_cast<Eigen::Index>(l) * M * P + p * M + m,
                       static_cast<Eigen::Index>(l) * M * K + k * M + m) = pilots(k, p);
    const Eigen::Index r = op.rows(), c = op.cols();
    MatrixXd real(2 * r, 2 * c);
    real.topLeftCorner(r, c) = op.real();
    real.topRightCorner(r, c) = -op.imag();
    real.bottomLeftCorner(r, c) = op.imag();
    real.bottomRightCorner(r, c) = op.real();
    return real;
}

ChannelSlice unstack_channel(const VectorXd& h_real, double real_var, const ObservationDims& dims, int k, int m) {
    if (k < 0 || k >= dims.users || m < 0 || m >= dims.waveguides)
        throw ParameterError("unstack_channel: (k, m) out of range");
    if (h_real.size() != 2 * dims.channel_size()) throw ParameterError("unstack_channel: size mismatch");
    const int n = dims.channel_size();
    ChannelSlice slice;
    slice.values.resize(dims.subcarriers);
    for (int l = 0; l < dims.subcarriers; ++l) {
        const int v = channel_real_index(dims, k, m, l);
        slice.values(l) = {h_real(v), h_real(v + n)};
    }
    slice.variance = 2.0 * real_var;
    return slice;
}

}  // namespace jcel
