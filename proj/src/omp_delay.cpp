#include "jcel/omp_delay.hpp"

#include <algorithm>
#include <limits>

namespace jcel {

DelayDictionary build_dictionary(int num_subcarriers, int cp_length, int num_atoms, double sample_period) {
    if (num_subcarriers < 1 || cp_length < 1 || num_atoms < 1 || !(sample_period > 0.0))
        throw ParameterError("build_dictionary: sizes and sample period must be positive");
    DelayDictionary d;
    d.num_subcarriers = num_subcarriers;
    d.cp_length = cp_length;
    d.sample_period = sample_period;
    d.underdetermined = num_atoms < num_subcarriers;
    d.atoms.resize(num_subcarriers, num_atoms);
    d.grid.resize(num_atoms);
    const double denom = static_cast<double>(num_subcarriers) * num_atoms;
    for (int n = 0; n < num_atoms; ++n) {
        d.grid(n) = n * cp_length * sample_period / num_atoms;
        for (int l = 0; l < num_subcarriers; ++l) {
            // Reduce the integer phase index first so large grids stay exact.
            const long long e = (static_cast<long long>(cp_length) * n * l) % static_cast<long long>(denom);
            d.atoms(l, n) = std::polar(1.0, -kTwoPi * static_cast<double>(e) / denom);
        }
    }
    return d;
}

double single_tone_delay_crlb(Complex gain, double noise_var, int num_subcarriers, double sample_period) {
    const double L = num_subcarriers;
    const double spread = L * (L * L - 1.0) / 12.0;
    const double amp2 = std::norm(gain);
    if (!(amp2 > 0.0) || spread <= 0.0) return std::numeric_limits<double>::infinity();
    const double theta_var = noise_var / (2.0 * amp2 * spread);
    const double scale = L * sample_period / kTwoPi;
    return scale * scale * theta_var;
}

OmpResult omp_extract_detailed(const VectorXcd& h, const DelayDictionary& dict, int sparsity) {
    if (sparsity < 1) throw ParameterError("omp_extract: sparsity must be positive");
    if (h.size() != dict.num_subcarriers) throw ParameterError("omp_extract: length mismatch with dictionary");
    const int L = dict.num_subcarriers;

    OmpResult out;
    VectorXcd residual = h;
    std::vector<bool> used(dict.size(), false);
    VectorXcd gains;
    for (int round = 0; round < sparsity && round < dict.size(); ++round) {
        const VectorXcd corr = dict.atoms.adjoint() * residual;
        int best = -1;
        double best_val = -1.0;
        for (int n = 0; n < dict.size(); ++n) {
            if (used[n]) continue;
            const double v = std::abs(corr(n));
            if (v > best_val) {
                best_val = v;
                best = n;
            }
        }
        out.support.push_back(best);
        used[best] = true;

        MatrixXcd sub(L, out.support.size());
        for (std::size_t i = 0; i < out.support.size(); ++i) sub.col(i) = dict.atoms.col(out.support[i]);
        Eigen::ColPivHouseholderQR<MatrixXcd> qr(sub);
        if (qr.rank() < static_cast<Eigen::Index>(out.support.size())) {
            out.support.pop_back();
            out.rank_deficient = true;
            break;
        }
        gains = qr.solve(h);
        residual = h - sub * gains;
        out.round_gains.push_back(gains);
        out.residual_norms.push_back(residual.norm());
    }

    const int found = static_cast<int>(out.support.size());
    const double proxy = std::max(residual.squaredNorm() / (static_cast<double>(L) * sparsity),
                                  1e-30 * std::max(h.squaredNorm() / L, 1e-300));
    for (int t = 0; t < found; ++t) {
        PathEstimate p;
        p.slot = t;
        p.delay_mean = dict.grid(out.support[t]);
        p.gain_mean = gains(t);
        p.gain_var = proxy;
        p.delay_var = single_tone_delay_crlb(p.gain_mean, proxy, L, dict.sample_period);
        p.heuristic_var = true;
        out.paths.push_back(p);
    }
    return out;
}

PathList omp_extract(const VectorXcd& h, const DelayDictionary& dict, int sparsity) {
    return omp_extract_detailed(h, dict, sparsity).paths;
}

}  // namespace jcel
