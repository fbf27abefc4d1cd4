#pragma once

#include <optional>
#include <vector>

#include "jcel/ep.hpp"
#include "jcel/path_estimate.hpp"
#include "jcel/scene.hpp"
#include "jcel/types.hpp"

namespace jcel {

struct PositionEstimate {
    Vec2 mean = Vec2::Zero();
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();  // seconds^-2 weighted
    bool converged = false;
    bool diverged = false;
    int iterations = 0;

    Eigen::Matrix2d covariance() const { return info.inverse(); }
};

/// perm[m][slot] = PA index assigned to the estimated delay in `slot`.
struct Assignment {
    std::vector<std::vector<int>> perm;
    double total_cost = 0.0;
};

/// Minimum-cost perfect matching of a square cost matrix; result[row] = column.
std::vector<int> hungarian(const MatrixXd& cost);

/// Per waveguide, matches estimated delays to predicted ones under the cost
/// log(1 + |tau_est - tau_pred|^2 / delta).
Assignment match_delays(const std::vector<VectorXd>& estimated, const std::vector<VectorXd>& predicted, double delta);

struct DelayLinearization {
    double a = 0.0;  // d tau / d x
    double b = 0.0;  // d tau / d y
    double c = 0.0;  // tau(x0, y0) - a x0 - b y0
};

double predicted_delay(const Vec3& anchor, const Vec2& point, double intrinsic);
DelayLinearization linearize_delay(const Vec3& anchor, const Vec2& point, double intrinsic);

struct DelayMeasurement {
    double delay = 0.0;
    double var = 1.0;
    DelayLinearization lin;
};

/// Information-form fusion of linearized delay measurements. Throws GeometryError
/// when the information matrix is singular.
PositionEstimate fuse_position(const std::vector<DelayMeasurement>& measurements);

/// Delays of one waveguide whose errors are jointly Gaussian with covariance
/// `cov` (slot order of `measurements`); the per-measurement variances are ignored.
struct CorrelatedDelays {
    std::vector<DelayMeasurement> measurements;
    MatrixXd cov;
};
PositionEstimate fuse_position(const std::vector<CorrelatedDelays>& groups);

struct LocalizeOptions {
    double delta = 1e-18;  // seconds^2, (T/10)^2 for T = 10 ns
    double tol = 1e-4;     // meters
    int max_iter = 50;
    bool equal_weights = false;
    Region region;
    /// Per waveguide, joint covariance of the slot-ordered delay estimates.
    /// Empty selects independent per-path variances.
    std::vector<MatrixXd> delay_cov;
};

struct LocalizeResult {
    PositionEstimate position;
    Assignment assignment;
};

/// Anchor geometry of one scene: PA positions and calibrated intrinsic delays.
struct AnchorSet {
    std::vector<std::vector<Vec3>> positions;  // [m][n]
    std::vector<std::vector<double>> intrinsic;
};
AnchorSet anchor_set(const Scene& scene);

/// Alternates delay matching, linearization and fusion from `init`.
/// `paths[m]` are the delay estimates of one user on waveguide m.
LocalizeResult localize_newton(const std::vector<PathList>& paths, const AnchorSet& anchors, const Vec2& init,
                               const LocalizeOptions& opt);

/// Channel of one user as a function of its parameters. With a position the
/// parameters are [Re z; Im z; x; y] (paths ordered by (m, n)); without one
/// they are [Re z; Im z; tau], each path keeping its own delay.
class UserChannelMap {
public:
    UserChannelMap(const Scene& scene, const AnchorSet& anchors, std::vector<PathList> paths,
                   std::optional<PositionEstimate> position);

    bool position_based() const { return position_.has_value(); }
    int num_params() const { return static_cast<int>(params_.size()); }
    const VectorXd& params() const { return params_; }
    const MatrixXd& covariance() const { return cov_; }

    /// M x L channel of the user.
    MatrixXcd evaluate(const VectorXd& p) const;
    /// Complex Jacobian, row l * M + m.
    MatrixXcd jacobian(const VectorXd& p) const;

private:
    struct PathRef {
        int m = 0;
        Vec3 anchor = Vec3::Zero();
        double intrinsic = 0.0;
    };
    std::vector<PathRef> refs_;
    std::optional<PositionEstimate> position_;
    VectorXd params_;
    MatrixXd cov_;
    int num_waveguides_ = 0;
    int num_subcarriers_ = 0;
    double sample_period_ = 0.0;
};

/// Re-solves the gains of PA-ordered `paths[m]` by least squares on `slices[m]`
/// with the delays implied by `position`; gain_var becomes the diagonal of
/// noise_var (A^H A)^-1. Waveguides whose delay matrix is rank deficient are left as is.
void refit_gains(std::vector<PathList>& paths, const std::vector<VectorXcd>& slices, double noise_var,
                 const AnchorSet& anchors, const Vec2& position, double sample_period);

/// g_h(zeta) over all users, as a real-stacked channel, and the delta-method
/// variance tr(J Sigma J^T) / (2 K M L).
GaussMsg delta_method_channel(const std::vector<UserChannelMap>& users, int num_waveguides, int num_subcarriers);

}  // namespace jcel
