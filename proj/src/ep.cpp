#include "jcel/ep.hpp"

#include <algorithm>

namespace jcel {

GaussMsg ep_init(const ObservationDims& dims) { return {VectorXd::Zero(2 * dims.channel_size()), 1.0}; }

GaussDivision gauss_divide(double numerator_var, double denominator_var, const VarianceLimits& limits) {
    const double precision = 1.0 / numerator_var - 1.0 / denominator_var;
    GaussDivision d;
    if (!(precision > 0.0) || !std::isfinite(precision)) {
        // No information left after division: pass the numerator through, uninformative.
        d.var = limits.cap;
        d.numerator_weight = 1.0;
        d.denominator_weight = 0.0;
        d.clamped = true;
        return d;
    }
    // The mean uses the exact quotient; only the reported variance is bounded.
    const double var = 1.0 / precision;
    d.numerator_weight = var / numerator_var;
    d.denominator_weight = var / denominator_var;
    d.var = std::clamp(var, limits.floor, limits.cap);
    d.clamped = d.var != var;
    return d;
}

LinearUpdate ep_linear(const GaussMsg& prior, const RealStack& stack, const VarianceLimits& limits) {
    if (!(prior.var > 0.0)) throw ParameterError("ep_linear: prior variance must be positive");
    const auto& d = stack.dims;
    if (prior.mean.size() != 2 * d.channel_size()) throw ParameterError("ep_linear: prior size mismatch");

    const double a = 1.0 / stack.noise_var_real;
    const double b = 1.0 / prior.var;
    const MatrixXcd& X = stack.pilots;
    const MatrixXcd gram = X.conjugate() * X.transpose();
    const MatrixXcd system = a * gram + b * MatrixXcd::Identity(d.users, d.users);
    const MatrixXcd cov = system.llt().solve(MatrixXcd::Identity(d.users, d.users));

    const auto y = unstack_tensor(stack.y, d.waveguides, d.frames, d.subcarriers);
    const auto h_prior = unstack_tensor(prior.mean, d.waveguides, d.users, d.subcarriers);
    ChannelTensor mu(d.subcarriers);
    const MatrixXcd cov_t = cov.transpose();
    const MatrixXcd matched = X.adjoint();
    for (int l = 0; l < d.subcarriers; ++l) mu[l] = (a * y[l] * matched + b * h_prior[l]) * cov_t;

    LinearUpdate out;
    out.posterior.mean = stack_tensor(mu);
    // Real-dimension trace average: tr(Sigma_q) = 2 L M Re tr(C) over 2 M K L coordinates.
    out.posterior.var = cov.trace().real() / d.users;

    const auto div = gauss_divide(out.posterior.var, prior.var, limits);
    out.extrinsic.var = div.var;
    out.extrinsic.mean = div.numerator_weight * out.posterior.mean - div.denominator_weight * prior.mean;
    out.clamped = div.clamped;
    return out;
}

GaussMsg ep_damp(const GaussMsg& fresh, const GaussMsg& old, double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ParameterError("ep_damp: damping factor must lie in (0, 1]");
    if (fresh.mean.size() != old.mean.size()) throw ParameterError("ep_damp: size mismatch");
    return {gamma * fresh.mean + (1.0 - gamma) * old.mean, gamma * fresh.var + (1.0 - gamma) * old.var};
}

CombineResult ep_combine(const GaussMsg& denoised, const GaussMsg& extrinsic, const VarianceLimits& limits) {
    if (!(denoised.var > 0.0) || !(extrinsic.var > 0.0))
        throw ParameterError("ep_combine: variances must be positive");
    const auto div = gauss_divide(denoised.var, extrinsic.var, limits);
    CombineResult out;
    out.prior.var = div.var;
    out.prior.mean = div.numerator_weight * denoised.mean - div.denominator_weight * extrinsic.mean;
    out.clamped = div.clamped;
    return out;
}

}  // namespace jcel
