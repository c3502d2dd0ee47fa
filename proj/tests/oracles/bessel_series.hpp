#pragma once

// Test-only reference values for J_n and Y_0, Y_1 from their ascending power
// series in 100-digit arithmetic. Independent of the recurrence/asymptotic
// code paths in cavity::specfun.

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using big = boost::multiprecision::cpp_bin_float_100;

inline big euler_gamma() {
    return big("0.5772156649015328606065120900824024310421593359399235988057672348848677267776646709369470632917467495");
}

inline big pi() { return boost::math::constants::pi<big>(); }

/// J_n(t) = sum_m (-1)^m (t/2)^(2m+n) / (m! (m+n)!)
inline big series_jn(int n, double t_in) {
    const big t = t_in;
    const big half = t / 2;
    big term = 1;
    for (int i = 1; i <= n; ++i) term *= half / i;
    big sum = term;
    const big h2 = half * half;
    for (int m = 1; m < 2000; ++m) {
        term *= -h2 / (big(m) * (m + n));
        sum += term;
        if (abs(term) < big("1e-60") * abs(sum) && m > t_in) break;
    }
    return sum;
}

/// Y_0(t) = (2/pi) [ (ln(t/2) + gamma) J_0(t) + sum_{m>=1} (-1)^(m+1) H_m (t/2)^(2m) / (m!)^2 ]
inline big series_y0(double t_in) {
    const big t = t_in;
    const big h2 = (t / 2) * (t / 2);
    big term = 1;
    big harmonic = 0;
    big sum = 0;
    for (int m = 1; m < 2000; ++m) {
        term *= -h2 / (big(m) * m);
        harmonic += big(1) / m;
        const big add = -term * harmonic;
        sum += add;
        if (abs(add) < big("1e-60") && m > t_in) break;
    }
    return 2 / pi() * ((log(t / 2) + euler_gamma()) * series_jn(0, t_in) + sum);
}

/// Y_1(t) = -(2/(pi t)) + (2/pi) ln(t/2) J_1(t)
///          - (1/pi) sum_{m>=0} (-1)^m (psi(m+1) + psi(m+2)) (t/2)^(2m+1) / (m! (m+1)!)
inline big series_y1(double t_in) {
    const big t = t_in;
    const big half = t / 2;
    const big h2 = half * half;
    big term = half;  // m = 0
    // psi(m+1) = -gamma + H_m
    big hm = 0;
    big hm1 = 1;
    big sum = term * (2 * -euler_gamma() + hm + hm1);
    for (int m = 1; m < 2000; ++m) {
        term *= -h2 / (big(m) * (m + 1));
        hm += big(1) / m;
        hm1 += big(1) / (m + 1);
        const big add = term * (2 * -euler_gamma() + hm + hm1);
        sum += add;
        if (abs(add) < big("1e-60") && m > t_in) break;
    }
    return -2 / (pi() * t) + 2 / pi() * log(half) * series_jn(1, t_in) - sum / pi();
}

}  // namespace oracle
