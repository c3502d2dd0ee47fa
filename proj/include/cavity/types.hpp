#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace cavity {

using Complex = std::complex<double>;
using Vec2 = Eigen::Vector2d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Root of the library's exception hierarchy. Every error thrown by cavity
/// derives from this, so callers can catch numerical failures in one place.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the region where a representation or function is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Evaluation at (or numerically at) a kernel singularity.
class SingularityError : public Error {
public:
    using Error::Error;
};

/// Coincident or badly nested curves.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Star-shape radial function not strictly positive.
class InvalidShapeError : public Error {
public:
    using Error::Error;
};

/// Candidate curve leaves the annulus between the auxiliary circles.
class InfeasibleShapeError : public Error {
public:
    using Error::Error;
};

/// Boundary integral system too close to singular; k^2 is probably near an
/// interior Dirichlet eigenvalue of the cavity.
class EigenvalueProximityError : public Error {
public:
    using Error::Error;
};

/// Morozov target cannot be matched (target larger than the data norm).
class DiscrepancyError : public Error {
public:
    using Error::Error;
};

/// Wavenumber, noise level and decoupling tolerance.
struct WaveParams {
    double k = 1.0;
    double delta = 0.0;
    double epsilon = 1e-16;

    void validate() const {
        if (!(k > 0.0)) throw DomainError("wavenumber must be positive");
        if (!(delta >= 0.0 && delta < 1.0)) throw DomainError("noise level must lie in [0, 1)");
        if (!(epsilon >= 0.0)) throw DomainError("epsilon must be nonnegative");
    }
};

inline Vec2 polar(double radius, double angle) {
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

}  // namespace cavity
