#pragma once

#include <optional>
#include <vector>

#include "jcel/scene.hpp"
#include "jcel/types.hpp"

namespace jcel {

/// Which unknown a FIM row belongs to.
struct FimParam {
    enum class Kind { gain_re, gain_im, x, y };
    Kind kind = Kind::gain_re;
    int user = 0;
    int waveguide = -1;
    int pa = -1;
};

/// Parameter order: Re z (paths in composite order), Im z, x_1..x_K, y_1..y_K.
std::vector<FimParam> fim_parameters(const Scene& scene);

/// d vec(H[l]) / d zeta, complex MK x (2 K N_all + 2 K), row k M + m.
MatrixXcd jacobian_h(const Scene& scene, int l);
MatrixXcd jacobian_h(const Scene& scene, std::span<const PathParams> paths, int l);

struct FimResult {
    MatrixXd fim;
    std::vector<FimParam> index;
    VectorXd truth;  // parameter values at which the FIM was evaluated
    std::vector<MatrixXcd> jacobians;  // per subcarrier, for channel bounds
    double channel_energy = 0.0;       // sum_l ||H[l]||_F^2
};

/// I(zeta) = 2 / sigma^2 sum_l Re[J_l^H (conj(X) X^T kron I_M) J_l].
FimResult fim(const Scene& scene, const MatrixXcd& pilots, double noise_var);

struct CrlbBounds {
    VectorXd diag;                 // bounds of the requested parameters, in subset order
    std::vector<int> subset;
    bool rank_deficient = false;
    int rank = 0;
    VectorXd position_per_user;    // var(x_k) + var(y_k); NaN when not requested
    double position_total = 0.0;   // sum over users
    double gain_total = 0.0;       // sum of Re and Im bounds over paths
    double channel_total = 0.0;    // sum_l tr(J_l C J_l^H)
    // Normalized (NMSE-style) companions.
    double position_nmse = 0.0;
    double gain_nmse = 0.0;
    double channel_nmse = 0.0;
};

/// Bounds from the inverse FIM. Parameters outside `subset` are nuisance and
/// marginalized unless `others_known` is set. A singular FIM falls back to the
/// pseudo-inverse of the equilibrated matrix and sets `rank_deficient`.
CrlbBounds crlb_bounds(const FimResult& f, std::optional<std::vector<int>> subset = std::nullopt,
                       bool others_known = false);

/// Delay CRLB of a single tone z exp(-j 2 pi tau l / (L T)), l = 0..L-1, with gain
/// unknown, from the 3 x 3 FIM over (Re z, Im z, tau).
double tone_delay_crlb(Complex gain, double delay, double noise_var, int num_subcarriers, double sample_period);

/// Inverse of a symmetric PSD matrix after diagonal equilibration; eigenvalues
/// below `rel_tol` times the largest are dropped.
MatrixXd equilibrated_pinv(const MatrixXd& a, double rel_tol, int* rank);

}  // namespace jcel
