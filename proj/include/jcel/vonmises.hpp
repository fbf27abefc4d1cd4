#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include "jcel/types.hpp"

namespace jcel {

inline constexpr double kKappaCap = 1e8;

template <typename Scalar>
struct BasicVMMsg {
    Scalar mean_dir = 0;  // radians, (-pi, pi]
    Scalar kappa = 0;
};

using VMMsg = BasicVMMsg<double>;

template <typename Scalar>
Scalar wrap_angle(Scalar a) {
    const Scalar two_pi = Scalar(kTwoPi);
    a = std::remainder(a, two_pi);
    if (a <= -Scalar(kPi)) a += two_pi;
    return a;
}

namespace detail {

// Hankel expansion of I_n(x) with the common factor e^x / sqrt(2 pi x) removed.
template <typename Scalar>
Scalar hankel_series(int n, Scalar x) {
    const Scalar mu = Scalar(4) * n * n;
    Scalar term = 1, sum = 1;
    for (int k = 1; k < 60; ++k) {
        const Scalar next = -term * (mu - Scalar(2 * k - 1) * (2 * k - 1)) / (Scalar(8) * k * x);
        if (std::abs(next) >= std::abs(term)) break;
        term = next;
        sum += term;
        if (std::abs(term) < std::numeric_limits<Scalar>::epsilon() * std::abs(sum)) break;
    }
    return sum;
}

}  // namespace detail

/// Ratios I_n(x) / I_0(x) for n = 0 .. count-1.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> bessel_ratios(Scalar x, int count) {
    if (!(x >= 0)) throw ParameterError("bessel_ratios: argument must be nonnegative");
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> r = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(count);
    if (count == 0) return r;
    r(0) = 1;
    if (x == 0 || count == 1) return r;

    const Scalar top = Scalar(4) * (count - 1) * (count - 1);
    if (x > Scalar(1e4) && top < x) {
        const Scalar s0 = detail::hankel_series(0, x);
        for (int n = 1; n < count; ++n) r(n) = detail::hankel_series(n, x) / s0;
        return r;
    }

    // Backward recurrence on rho_n = I_n / I_{n-1} = 1 / (2n/x + rho_{n+1}).
    const Scalar digits = std::log(Scalar(1e17));
    const int start = std::max(2 * count, count + static_cast<int>(std::ceil(std::sqrt(2 * x * digits))) + 16);
    Scalar rho = 0;
    for (int n = start; n >= count; --n) rho = Scalar(1) / (Scalar(2 * n) / x + rho);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rhos(count);
    for (int n = count - 1; n >= 1; --n) {
        rho = Scalar(1) / (Scalar(2 * n) / x + rho);
        rhos(n) = rho;
    }
    for (int n = 1; n < count; ++n) r(n) = r(n - 1) * rhos(n);
    return r;
}

/// I_1(kappa) / I_0(kappa).
template <typename Scalar>
Scalar bessel_ratio(Scalar kappa) {
    if (!(kappa >= 0)) throw ParameterError("bessel_ratio: kappa must be nonnegative");
    return bessel_ratios(kappa, 2)(1);
}

/// Inverse of bessel_ratio by safeguarded Newton. Results above kKappaCap are capped.
template <typename Scalar>
Scalar bessel_ratio_inv(Scalar r) {
    if (!(r >= 0)) throw ParameterError("bessel_ratio_inv: ratio must be nonnegative");
    if (r >= 1) throw SaturationError("bessel_ratio_inv: ratio must be below 1");
    if (r == 0) return 0;
    const Scalar cap = Scalar(kKappaCap);
    if (bessel_ratio(cap) <= r) return cap;

    Scalar lo = 0, hi = cap;
    Scalar kappa = std::min(r * (2 - r * r) / (1 - r * r), cap);
    for (int it = 0; it < 200; ++it) {
        const Scalar f = bessel_ratio(kappa);
        const Scalar err = f - r;
        if (std::abs(err) <= Scalar(1e-15)) break;
        if (err > 0)
            hi = kappa;
        else
            lo = kappa;
        const Scalar slope = 1 - f / kappa - f * f;
        Scalar next = kappa - err / slope;
        if (!(slope > 0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - kappa) <= Scalar(1e-15) * kappa) {
            kappa = next;
            break;
        }
        kappa = next;
    }
    return kappa;
}

/// E[exp(j theta l)] for theta ~ VM(mean_dir, kappa), l = 0 .. L-1.
template <typename Scalar>
ComplexVector<Scalar> vm_moments(const BasicVMMsg<Scalar>& msg, int length) {
    if (length < 1) throw ParameterError("vm_moments: length must be positive");
    const auto ratios = bessel_ratios(std::min(msg.kappa, Scalar(kKappaCap)), length);
    ComplexVector<Scalar> a(length);
    for (int l = 0; l < length; ++l) a(l) = std::polar(ratios(l), msg.mean_dir * Scalar(l));
    return a;
}

/// Product of two VM densities (up to normalization).
template <typename Scalar>
BasicVMMsg<Scalar> vm_multiply(const BasicVMMsg<Scalar>& a, const BasicVMMsg<Scalar>& b) {
    const std::complex<Scalar> eta = std::polar(a.kappa, a.mean_dir) + std::polar(b.kappa, b.mean_dir);
    BasicVMMsg<Scalar> out;
    out.kappa = std::min(std::abs(eta), Scalar(kKappaCap));
    out.mean_dir = out.kappa > 0 ? wrap_angle(std::arg(eta)) : Scalar(0);
    return out;
}

}  // namespace jcel
