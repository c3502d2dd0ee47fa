#pragma once

// Bessel and Hankel functions of integer order for real positive argument,
// the 2D Helmholtz fundamental solution, and Bessel-zero counting.
//
// J_0, J_1, Y_0, Y_1 on (0, 25) come from Miller's backward recurrence
// normalised by J_0 + 2 sum J_2k = 1, with Y_0 and Y_1 from the Neumann
// series over the same recurrence values. For t >= 25 the Hankel asymptotic
// expansion is used; its smallest term there is far below double precision.

#include <cmath>
#include <vector>

#include "cavity/types.hpp"

namespace cavity::specfun {

inline constexpr double kEulerGamma = 0.57721566490153286060651209008240243;
inline constexpr double kAsymptoticSwitch = 25.0;

struct BesselJY01 {
    double j0;
    double j1;
    double y0;
    double y1;
};

namespace detail {

inline int miller_start(double t, int order = 0) {
    const double m = std::max(t, static_cast<double>(order));
    int n = static_cast<int>(m + 12.0 * std::cbrt(m) + 24.0);
    return n + (n & 1);  // even
}

inline BesselJY01 jy01_recurrence(double t) {
    const int top = miller_start(t);
    constexpr double kBig = 1e200;

    double f_next = 0.0;  // f_{n+1}
    double f_cur = 1e-30;  // f_n, n = top (even)
    double norm = 2.0 * f_cur;
    double s0 = ((top / 2) % 2 == 0 ? 1.0 : -1.0) * f_cur / (top / 2);
    double s1 = 0.0;
    const double two_over_t = 2.0 / t;

    for (int n = top; n >= 1; --n) {
        double f_prev = n * two_over_t * f_cur - f_next;  // f_{n-1}
        const int m = n - 1;
        if (m >= 1) {
            const int kk = (m + 1) / 2;
            const double sign = (kk % 2 == 0) ? 1.0 : -1.0;
            if (m & 1) {
                // m = 2k - 1: term (-1)^k (f_{2k-1} - f_{2k+1}) / k, f_{2k+1} = f_next
                s1 += sign * (f_prev - f_next) / kk;
            } else {
                norm += 2.0 * f_prev;
                s0 += sign * f_prev / kk;
            }
        }
        f_next = f_cur;
        f_cur = f_prev;
        if (std::abs(f_cur) > kBig) {
            const double scale = 1.0 / kBig;
            f_cur *= scale;
            f_next *= scale;
            norm *= scale;
            s0 *= scale;
            s1 *= scale;
        }
    }
    // f_cur = f_0, f_next = f_1
    norm += f_cur;
    const double j0 = f_cur / norm;
    const double j1 = f_next / norm;
    const double log_term = std::log(0.5 * t) + kEulerGamma;
    const double y0 = (2.0 / kPi) * log_term * j0 - (4.0 / kPi) * s0 / norm;
    const double y1 = (2.0 / kPi) * log_term * j1 - (2.0 / kPi) * j0 / t + (2.0 / kPi) * s1 / norm;
    return {j0, j1, y0, y1};
}

/// Hankel expansion: H_nu(t) = sqrt(2/(pi t)) (P + iQ) exp(i(t - nu pi/2 - pi/4)).
inline Complex hankel_asymptotic(int nu, double t) {
    const double mu = 4.0 * nu * nu;
    double p = 1.0;
    double q = 0.0;
    double term = 1.0;
    double last = 1.0;
    for (int k = 1; k < 200; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= (mu - odd * odd) / (k * 8.0 * t);
        const double a = std::abs(term);
        if (a > last) break;  // divergent tail of the asymptotic series
        last = a;
        const int quarter = (k / 2) % 2;
        if (k & 1) {
            q += (quarter == 0 ? 1.0 : -1.0) * term;
        } else {
            p += (quarter == 0 ? 1.0 : -1.0) * term;
        }
        if (a < 1e-18) break;
    }
    // exp(i t) times a constant phase keeps libm's exact reduction of t.
    const double shift = -(0.5 * nu + 0.25) * kPi;
    const Complex phase = Complex(std::cos(t), std::sin(t)) * Complex(std::cos(shift), std::sin(shift));
    return std::sqrt(2.0 / (kPi * t)) * Complex(p, q) * phase;
}

}  // namespace detail

/// J_0, J_1, Y_0, Y_1 at t > 0.
inline BesselJY01 bessel_jy01(double t) {
    if (!(t > 0.0)) throw DomainError("Bessel functions of the second kind are singular at t <= 0");
    if (t < kAsymptoticSwitch) return detail::jy01_recurrence(t);
    const Complex h0 = detail::hankel_asymptotic(0, t);
    const Complex h1 = detail::hankel_asymptotic(1, t);
    return {h0.real(), h1.real(), h0.imag(), h1.imag()};
}

/// H_0^(1)(t) = J_0(t) + i Y_0(t).
inline Complex hankel1_0(double t) {
    const auto b = bessel_jy01(t);
    return {b.j0, b.y0};
}

/// H_1^(1)(t) = J_1(t) + i Y_1(t).
inline Complex hankel1_1(double t) {
    const auto b = bessel_jy01(t);
    return {b.j1, b.y1};
}

/// J_n(t) for integer n >= 0 and t >= 0 by backward recurrence.
inline double bessel_jn(int n, double t) {
    if (n < 0) throw DomainError("bessel_jn: negative order");
    if (t < 0.0) throw DomainError("bessel_jn: negative argument");
    if (t == 0.0) return n == 0 ? 1.0 : 0.0;
    if (t >= kAsymptoticSwitch && n <= 1) {
        return detail::hankel_asymptotic(n, t).real();
    }
    const int top = detail::miller_start(t, n);
    constexpr double kBig = 1e200;
    double f_next = 0.0;
    double f_cur = 1e-30;
    double norm = 2.0 * f_cur;
    double result = (top == n) ? f_cur : 0.0;
    const double two_over_t = 2.0 / t;
    for (int k = top; k >= 1; --k) {
        const double f_prev = k * two_over_t * f_cur - f_next;
        const int m = k - 1;
        if (m >= 2 && (m & 1) == 0) norm += 2.0 * f_prev;
        if (m == n) result = f_prev;
        f_next = f_cur;
        f_cur = f_prev;
        if (std::abs(f_cur) > kBig) {
            f_cur /= kBig;
            f_next /= kBig;
            norm /= kBig;
            result /= kBig;
        }
    }
    norm += f_cur;
    return result / norm;
}

/// Outgoing fundamental solution of the 2D Helmholtz equation, (i/4) H_0^(1)(k|x - z|).
inline Complex fundamental_solution(const Vec2& x, const Vec2& z, double k) {
    const double r = (x - z).norm();
    if (r == 0.0) throw SingularityError("fundamental solution evaluated at its source point");
    return Complex(0.0, 0.25) * hankel1_0(k * r);
}

/// Positive zeros of J_n strictly below `upper`, ascending.
inline std::vector<double> bessel_zeros(int n, double upper) {
    if (!(upper > 0.0)) throw DomainError("bessel_zeros: upper bound must be positive");
    std::vector<double> zeros;
    // No positive zero of J_n lies below n; J_n(n) > 0 for n >= 1.
    double a = (n == 0) ? 0.0 : static_cast<double>(n);
    if (a >= upper) return zeros;
    double fa = bessel_jn(n, a);
    constexpr double kStep = 0.1;
    while (a < upper) {
        const double b = std::min(a + kStep, upper);
        const double fb = bessel_jn(n, b);
        if (fb == 0.0) {
            if (b < upper) zeros.push_back(b);
        } else if (fa != 0.0 && (fa < 0.0) != (fb < 0.0)) {
            double lo = a;
            double hi = b;
            double flo = fa;
            for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double fm = bessel_jn(n, mid);
                if (fm == 0.0) {
                    lo = hi = mid;
                    break;
                }
                if ((fm < 0.0) == (flo < 0.0)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            const double zero = 0.5 * (lo + hi);
            if (zero < upper) zeros.push_back(zero);
        }
        a = b;
        fa = fb;
    }
    return zeros;
}

/// Source-count threshold for cavity uniqueness: zeros of J_0 below kR count
/// once, zeros of J_n (n != 0) below kR count twice (J_n and J_{-n}).
inline int count_n0(double k, double radius) {
    if (!(k > 0.0) || !(radius > 0.0)) throw DomainError("count_n0: k and R must be positive");
    const double kr = k * radius;
    int total = static_cast<int>(bessel_zeros(0, kr).size());
    for (int n = 1;; ++n) {
        const auto zeros = bessel_zeros(n, kr);
        if (zeros.empty()) break;  // first zeros increase with n
        total += 2 * static_cast<int>(zeros.size());
    }
    return total;
}

}  // namespace cavity::specfun
