#pragma once

#include "jcel/types.hpp"
#include "jcel/waveform.hpp"

namespace jcel {

/// Isotropic Gaussian message N(mean, var * I) over the real-stacked channel.
struct GaussMsg {
    VectorXd mean;
    double var = 1.0;
};

GaussMsg ep_init(const ObservationDims& dims);

struct LinearUpdate {
    GaussMsg posterior;  // mean mu_q, var sigma_q^2 (trace average over the real dimension)
    GaussMsg extrinsic;  // message towards the denoiser
    bool clamped = false;
};

/// LMMSE step of EP. Uses the I_L kron (Gram kron I_M) structure of M^T M, so
/// only one K x K Hermitian system is factored per call.
LinearUpdate ep_linear(const GaussMsg& prior, const RealStack& stack, const VarianceLimits& limits = {});

/// gamma * fresh + (1 - gamma) * old on both mean and variance; 0 < gamma <= 1.
GaussMsg ep_damp(const GaussMsg& fresh, const GaussMsg& old, double gamma);

struct CombineResult {
    GaussMsg prior;
    bool clamped = false;
};

/// Divides the denoiser output by the incoming extrinsic message. When the
/// denoiser gained no information (var_out >= var_in) the division is undefined;
/// the result then falls back to the denoiser output at the variance cap.
CombineResult ep_combine(const GaussMsg& denoised, const GaussMsg& extrinsic, const VarianceLimits& limits = {});

/// Gaussian division of two isotropic messages, shared by the EP and BP-VI
/// message updates. Returns the quotient and whether it had to be clamped.
struct GaussDivision {
    double var = 0.0;
    double numerator_weight = 0.0;    // multiplies the numerator mean
    double denominator_weight = 0.0;  // multiplies the denominator mean (subtracted)
    bool clamped = false;
};
GaussDivision gauss_divide(double numerator_var, double denominator_var, const VarianceLimits& limits);

}  // namespace jcel
