#pragma once

#include <vector>

#include "jcel/path_estimate.hpp"
#include "jcel/types.hpp"
#include "jcel/vonmises.hpp"

namespace jcel {

/// Messages of one superimposed-sinusoid model H = sum_n z_n a(theta_n) + w,
/// with a(theta)_l = exp(j theta l), l = 0 .. L-1.
struct SinusoidPath {
    VectorXcd s_back;       // extrinsic mean towards the observation node
    double s_back_var = 1.0;
    VMMsg theta_lik;        // likelihood message f -> theta
    VMMsg theta;            // posterior of theta
    Complex z;              // posterior gain mean
    double z_var = 1.0;
    bool valid = false;
};

struct SinusoidMsgState {
    std::vector<SinusoidPath> paths;
    int valid_count() const;
};

struct BpviOptions {
    int cp_length = 16;
    double sample_period = 10e-9;
    int max_iterations = 100;
    double theta_tol = 1e-8;
    double prior_kappa = 1e-2;     // zeta
    double gain_prior_scale = 1e6;  // xi^2 relative to mean |H|^2
    double merge_threshold = -1.0;  // epsilon_theta, negative selects 2 pi / (4 L)
    bool merge = true;
    bool literal_kappa_variance = false;  // delay variance proportional to kappa instead of 1/kappa
    double var_floor = 1e-12;
    double var_cap = 1e8;
};

struct BpviFlags {
    int flat_objective = 0;
    int clamped = 0;
    int merges = 0;
    int reseeds = 0;
    int kappa_capped = 0;
};

struct ForwardMsg {
    VectorXcd mean;
    double var = 0.0;
};

/// theta search interval [-2 pi L_CP / L, 0], i.e. delays in [0, L_CP T].
struct ThetaDomain {
    double lo = -kPi;
    double hi = 0.0;
    bool contains(double theta, double slack = 1e-12) const { return theta >= lo - slack && theta <= hi + slack; }
};
ThetaDomain theta_domain(int num_subcarriers, int cp_length);

ComplexVector<double> steering(double theta, int length);

SinusoidMsgState bpvi_init(const VectorXcd& h, double noise_var, int num_paths, const BpviOptions& opt);

ForwardMsg forward_msg(const SinusoidMsgState& state, const VectorXcd& h, double noise_var, int n);

struct ThetaUpdate {
    VMMsg likelihood;
    VMMsg posterior;
    bool flat = false;  // objective had no usable curvature; previous message kept
};

/// Local VM approximation of the phase message around the best aligned phase.
/// `previous` is returned untouched when the curvature is unusable.
ThetaUpdate theta_update(const ForwardMsg& fwd, Complex z, double prior_kappa, const ThetaDomain& domain,
                         const VMMsg& previous_lik, const VMMsg& previous_post);

struct GainUpdate {
    Complex z;
    double var = 0.0;
};
GainUpdate z_update(const ForwardMsg& fwd, const VMMsg& theta, double gain_prior_var);

struct SinusoidExtrinsic {
    VectorXcd mean;
    double var = 0.0;
    bool clamped = false;
};
SinusoidExtrinsic s_posterior_extrinsic(const VMMsg& theta, const GainUpdate& gain, const ForwardMsg& fwd,
                                        const VarianceLimits& limits = {});

/// Fuses lines closer than `threshold` (wrapped phase distance). Freed slots are
/// marked invalid; the count of valid lines never grows here.
int merge_artifacts(SinusoidMsgState& state, double threshold);

/// Re-detects every invalid slot from the residual left by the valid lines,
/// skipping phases within `exclusion` of a retained line.
int reseed_free_slots(SinusoidMsgState& state, const VectorXcd& h, double noise_var, double exclusion,
                      const BpviOptions& opt);

struct BpviResult {
    PathList paths;
    SinusoidMsgState state;
    int iterations = 0;
    bool converged = false;
    BpviFlags flags;
};

/// Delay block of the inverse Fisher information of the superposition model at
/// the given estimates (slot order). Falls back to diag(delay_var) when the
/// information is singular.
MatrixXd joint_delay_covariance(const PathList& paths, double noise_var, int num_subcarriers, double sample_period);

/// `warm_start`, when it matches the path count and length, replaces the
/// matched-filter initialization so sweeps continue from an earlier state.
BpviResult bpvi_extract_detailed(const VectorXcd& h, double noise_var, int num_paths, const BpviOptions& opt,
                                 const SinusoidMsgState* warm_start = nullptr);
PathList bpvi_extract(const VectorXcd& h, double noise_var, int num_paths, const BpviOptions& opt);

/// Delay mean and variance implied by a phase posterior.
PathEstimate theta_to_delay(const VMMsg& theta, int num_subcarriers, double sample_period, const ThetaDomain& domain,
                            bool literal_kappa_variance = false);

}  // namespace jcel
