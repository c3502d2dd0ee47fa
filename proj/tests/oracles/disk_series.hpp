#pragma once

// Separation-of-variables solution for a point source inside a sound-soft
// disk centred at the origin. Bessel values come from libstdc++, not from the
// library under test.

#include <cmath>
#include <complex>

#include <Eigen/Dense>

namespace oracle {

using cplx = std::complex<double>;

inline cplx hankel1(int n, double t) { return {std::cyl_bessel_j(double(n), t), std::cyl_neumann(double(n), t)}; }

/// Scattered field u^s(x) = -(i/4) sum_n H_n(ka)/J_n(ka) J_n(k|z|) J_n(k|x|) e^{in(theta - theta_z)}.
inline cplx disk_scattered(const Eigen::Vector2d& x, const Eigen::Vector2d& z, double k, double a) {
    const double rx = x.norm();
    const double rz = z.norm();
    const double dtheta = std::atan2(x.y(), x.x()) - std::atan2(z.y(), z.x());
    const int terms = static_cast<int>(k * a) + 80;
    cplx sum(0.0);
    for (int n = 0; n <= terms; ++n) {
        const double jz = rz == 0.0 ? (n == 0 ? 1.0 : 0.0) : std::cyl_bessel_j(double(n), k * rz);
        const double jx = rx == 0.0 ? (n == 0 ? 1.0 : 0.0) : std::cyl_bessel_j(double(n), k * rx);
        if (jz == 0.0 || jx == 0.0) continue;
        const cplx term = hankel1(n, k * a) / std::cyl_bessel_j(double(n), k * a) * jz * jx;
        sum += (n == 0 ? 1.0 : 2.0 * std::cos(n * dtheta)) * term;
    }
    return cplx(0.0, -0.25) * sum;
}

inline cplx disk_total(const Eigen::Vector2d& x, const Eigen::Vector2d& z, double k, double a) {
    return cplx(0.0, 0.25) * hankel1(0, k * (x - z).norm()) + disk_scattered(x, z, k, a);
}

}  // namespace oracle
