#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace jcel {

using Complex = std::complex<double>;

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

template <typename Scalar>
using ComplexVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// One M x K (or M x P) matrix per subcarrier, subcarriers 0-based.
using ChannelTensor = std::vector<MatrixXcd>;

class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CpViolationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SaturationError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bounds applied to every Gaussian division result.
struct VarianceLimits {
    double floor = 1e-12;
    double cap = 1e8;
};

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }

}  // namespace jcel
