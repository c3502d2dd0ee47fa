#pragma once

// Synthetic data: interior sound-soft scattering of a point source.
//
// The scattered field is a double-layer potential over the cavity boundary,
//   u^s(x) = int dPhi(x,y)/dnu(y) psi(y) ds(y),
// whose interior trace gives (-1/2 I + K) psi = -u^i on the boundary. The
// logarithmic part of the kernel is integrated with the Kussmaul-Martensen
// weights R_j(t); the rest with the trapezoidal rule.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "cavity/geometry.hpp"
#include "cavity/specfun.hpp"
#include "cavity/types.hpp"

namespace cavity::forward {

using geometry::ParametricCurve;

namespace detail {

/// Kussmaul-Martensen weight for int ln(4 sin^2((t - tau)/2)) f(tau) dtau at
/// 2m equispaced nodes, as a function of diff = t - t_j.
inline double km_weight(std::size_t n_nodes, double diff) {
    const std::size_t m = n_nodes / 2;
    double s = 0.0;
    for (std::size_t j = 1; j < m; ++j) s += std::cos(static_cast<double>(j) * diff) / static_cast<double>(j);
    const double md = static_cast<double>(m);
    return -(kPi / md) * 2.0 * s - (kPi / (md * md)) * std::cos(md * diff);
}

/// Double-layer kernel pieces at parameter pair (t, tau): the full kernel
/// (ik/4) H_1(kr) n(tau).(x(t) - x(tau)) / r with unnormalised n = (dy, -dx),
/// and the coefficient of ln(4 sin^2((t - tau)/2)).
struct KernelSplit {
    Complex full;
    double log_coefficient;
};

inline KernelSplit double_layer_split(const Vec2& x, const Vec2& y, const Vec2& dy, double k) {
    const Vec2 diff = x - y;
    const double r = diff.norm();
    const double nd = dy.y() * diff.x() - dy.x() * diff.y();
    const auto b = specfun::bessel_jy01(k * r);
    const Complex h1(b.j1, b.y1);
    return {Complex(0.0, 0.25 * k) * h1 * nd / r, -(k / (4.0 * kPi)) * b.j1 * nd / r};
}

/// Limit of the double-layer kernel on the diagonal (curvature term).
inline double double_layer_diagonal(const Vec2& dx, const Vec2& ddx) {
    return (dx.y() * ddx.x() - dx.x() * ddx.y()) / (4.0 * kPi * dx.squaredNorm());
}

/// Fourier coefficients (numpy ordering) of equispaced samples.
inline std::vector<Complex> dft(const Eigen::VectorXcd& samples) {
    Eigen::FFT<double> fft;
    std::vector<Complex> in(samples.data(), samples.data() + samples.size());
    std::vector<Complex> out;
    fft.fwd(out, in);
    return out;
}

/// Trigonometric interpolant of n equispaced samples at parameter t (n even).
inline Complex trig_interpolate(const std::vector<Complex>& coeffs, double t) {
    const std::size_t n = coeffs.size();
    const std::size_t half = n / 2;
    Complex s = coeffs[0];
    const Complex step = std::polar(1.0, t);
    Complex e = step;
    for (std::size_t m = 1; m < half; ++m) {
        s += coeffs[m] * e + coeffs[n - m] * std::conj(e);
        e *= step;
    }
    s += coeffs[half] * std::cos(static_cast<double>(half) * t);
    return s / static_cast<double>(n);
}

/// Zero-padded spectral upsampling by an integer factor (n even).
inline Eigen::VectorXcd upsample(const std::vector<Complex>& coeffs, std::size_t factor) {
    const std::size_t n = coeffs.size();
    const std::size_t m = n * factor;
    const std::size_t half = n / 2;
    std::vector<Complex> padded(m, Complex(0.0));
    for (std::size_t i = 0; i < half; ++i) padded[i] = coeffs[i];
    for (std::size_t i = 1; i < half; ++i) padded[m - i] = coeffs[n - i];
    padded[half] += 0.5 * coeffs[half];
    padded[m - half] += 0.5 * coeffs[half];
    Eigen::FFT<double> fft;
    std::vector<Complex> out;
    fft.inv(out, padded);
    Eigen::VectorXcd v(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) v(static_cast<Eigen::Index>(i)) = out[i] * static_cast<double>(factor);
    return v;
}

/// Trapezoidal double-layer potential at an off-curve point.
inline Complex double_layer_trapezoid(const ParametricCurve& curve, const Eigen::VectorXcd& density, const Vec2& x,
                                      double k) {
    const double h = kTwoPi / static_cast<double>(curve.size());
    Complex sum(0.0);
    for (std::size_t j = 0; j < curve.size(); ++j) {
        const Vec2 diff = x - curve.points()[j];
        const double r = diff.norm();
        const Vec2& dy = curve.d_points()[j];
        const double nd = dy.y() * diff.x() - dy.x() * diff.y();
        sum += specfun::hankel1_1(k * r) * (nd / r) * density(static_cast<Eigen::Index>(j));
    }
    return Complex(0.0, 0.25 * k) * h * sum;
}

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussRule {
    std::vector<double> x;
    std::vector<double> w;
};

inline GaussRule gauss_legendre(int n) {
    GaussRule g{std::vector<double>(static_cast<std::size_t>(n)), std::vector<double>(static_cast<std::size_t>(n))};
    for (int i = 0; i < n; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        g.x[static_cast<std::size_t>(i)] = x;
        g.w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return g;
}

}  // namespace detail

/// Distance from a point to a parameterised curve and the closest parameter.
struct ClosestPoint {
    double t;
    double distance;
};

inline ClosestPoint closest_point(const ParametricCurve& curve, const Vec2& p) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const double d = (curve.points()[i] - p).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    double t = curve.t()[best];
    if (!curve.has_parameterization()) return {t, std::sqrt(best_d)};
    const double h = kTwoPi / static_cast<double>(curve.size());
    for (int it = 0; it < 30; ++it) {
        const auto s = curve.evaluate(t);
        const Vec2 d = s.x - p;
        const double g1 = d.dot(s.dx);
        const double g2 = s.dx.squaredNorm() + d.dot(s.ddx);
        double step = g2 > 0.0 ? -g1 / g2 : -std::copysign(h, g1);
        step = std::clamp(step, -h, h);
        t += step;
        if (std::abs(step) < 1e-15) break;
    }
    return {t, (curve.evaluate(t).x - p).norm()};
}

/// Solved forward problem for one point source. Immutable after creation.
class BoundarySolution {
public:
    BoundarySolution(ParametricCurve cavity, Vec2 source, double k, Eigen::VectorXcd density)
        : cavity_(std::move(cavity)), source_(std::move(source)), k_(k), density_(std::move(density)),
          coeffs_(detail::dft(density_)) {}

    const ParametricCurve& cavity() const { return cavity_; }
    const Vec2& source() const { return source_; }
    double wavenumber() const { return k_; }
    const Eigen::VectorXcd& density() const { return density_; }

    Complex incident(const Vec2& x) const {
        if ((x - source_).norm() < 1e-8) throw SingularityError("field evaluated at the point source");
        return specfun::fundamental_solution(x, source_, k_);
    }

    /// Interior trace of u^s at boundary parameter t (Nystrom interpolation).
    Complex boundary_trace(double t) const {
        const std::size_t n = cavity_.size();
        const auto s = cavity_.evaluate(t);
        const double h = kTwoPi / static_cast<double>(n);
        Complex sum = -0.5 * detail::trig_interpolate(coeffs_, t);
        for (std::size_t j = 0; j < n; ++j) {
            const double diff = t - cavity_.t()[j];
            const double sin_half = std::sin(0.5 * diff);
            const Complex psi = density_(static_cast<Eigen::Index>(j));
            if (std::abs(sin_half) < 1e-13) {
                sum += h * detail::double_layer_diagonal(cavity_.d_points()[j], cavity_.dd_points()[j]) * psi;
                continue;
            }
            const auto split = detail::double_layer_split(s.x, cavity_.points()[j], cavity_.d_points()[j], k_);
            const double log_term = std::log(4.0 * sin_half * sin_half);
            const Complex smooth = split.full - split.log_coefficient * log_term;
            sum += (detail::km_weight(n, diff) * split.log_coefficient + h * smooth) * psi;
        }
        return sum;
    }

    /// Scattered field at one point inside the cavity (or its boundary trace).
    Complex scattered(const Vec2& x) const {
        std::map<std::size_t, Level> cache;
        return scattered_cached(x, cache);
    }

    Complex total(const Vec2& x) const { return incident(x) + scattered(x); }

    /// Batch evaluation sharing the upsampled boundary data.
    Eigen::VectorXcd scattered(std::span<const Vec2> points) const {
        std::map<std::size_t, Level> cache;
        Eigen::VectorXcd out(static_cast<Eigen::Index>(points.size()));
        for (std::size_t i = 0; i < points.size(); ++i) out(static_cast<Eigen::Index>(i)) = scattered_cached(points[i], cache);
        return out;
    }

private:
    struct Level {
        ParametricCurve curve;
        Eigen::VectorXcd density;
    };

    static constexpr double kOnBoundary = 1e-10;
    static constexpr double kResolution = 4.5;  // distance / node spacing for exp(-2 pi 4.5) accuracy
    static constexpr std::size_t kMaxFactor = 16;
    static constexpr int kGaussOrder = 16;

    Complex scattered_cached(const Vec2& x, std::map<std::size_t, Level>& cache) const {
        double max_spacing = 0.0;
        for (double w : cavity_.weights()) max_spacing = std::max(max_spacing, w);
        const ClosestPoint cp = closest_point(cavity_, x);
        if (cp.distance < kOnBoundary && cavity_.has_parameterization()) return boundary_trace(cp.t);
        std::size_t factor = 1;
        if (cavity_.has_parameterization()) {
            while (cp.distance < kResolution * max_spacing / static_cast<double>(factor)) {
                factor *= 2;
                if (factor > kMaxFactor) return graded_quadrature(x, cp);
            }
        }
        if (factor == 1) return detail::double_layer_trapezoid(cavity_, density_, x, k_);
        auto it = cache.find(factor);
        if (it == cache.end()) {
            it = cache.emplace(factor, Level{cavity_.resampled(cavity_.size() * factor), detail::upsample(coeffs_, factor)})
                     .first;
        }
        return detail::double_layer_trapezoid(it->second.curve, it->second.density, x, k_);
    }

    // Composite Gauss-Legendre in the parameter, panels doubling in width away
    // from the closest boundary point; the innermost panel has the size of
    // the distance so the near-singular peak is resolved.
    Complex graded_quadrature(const Vec2& x, const ClosestPoint& cp) const {
        static const detail::GaussRule rule = detail::gauss_legendre(kGaussOrder);
        const double speed = cavity_.evaluate(cp.t).dx.norm();
        const double s0 = std::min(kPi, cp.distance / speed);
        std::vector<std::pair<double, double>> panels = {{-s0, s0}};
        for (double s = s0; s < kPi;) {
            const double next = std::min(kPi, 2.0 * s);
            panels.emplace_back(s, next);
            panels.emplace_back(-next, -s);
            s = next;
        }
        Complex sum(0.0);
        for (const auto& [lo, hi] : panels) {
            const double half = 0.5 * (hi - lo);
            const double mid = 0.5 * (hi + lo);
            for (std::size_t q = 0; q < rule.x.size(); ++q) {
                const double tau = cp.t + mid + half * rule.x[q];
                const auto s = cavity_.evaluate(tau);
                const Vec2 diff = x - s.x;
                const double r = diff.norm();
                const double nd = s.dx.y() * diff.x() - s.dx.x() * diff.y();
                sum += half * rule.w[q] * specfun::hankel1_1(k_ * r) * (nd / r) * detail::trig_interpolate(coeffs_, tau);
            }
        }
        return Complex(0.0, 0.25 * k_) * sum;
    }

    ParametricCurve cavity_;
    Vec2 source_;
    double k_;
    Eigen::VectorXcd density_;
    std::vector<Complex> coeffs_;
};

/// Factorised Nystrom system for one cavity and wavenumber; solves for any
/// number of interior sources.
class ForwardSolver {
public:
    ForwardSolver(ParametricCurve cavity, double k, double max_condition = 1e12) : cavity_(std::move(cavity)), k_(k) {
        if (!(k > 0.0)) throw DomainError("wavenumber must be positive");
        const std::size_t n = cavity_.size();
        if (n % 2 != 0) throw GeometryError("Nystrom discretisation needs an even node count");
        std::vector<double> km(n);
        for (std::size_t d = 0; d < n; ++d) km[d] = detail::km_weight(n, cavity_.t()[d]);
        const double h = kTwoPi / static_cast<double>(n);
        const auto ni = static_cast<Eigen::Index>(n);
        Eigen::MatrixXcd a(ni, ni);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                Complex entry;
                if (i == j) {
                    entry = -0.5 + h * detail::double_layer_diagonal(cavity_.d_points()[j], cavity_.dd_points()[j]);
                } else {
                    const auto split =
                        detail::double_layer_split(cavity_.points()[i], cavity_.points()[j], cavity_.d_points()[j], k_);
                    const double sin_half = std::sin(0.5 * (cavity_.t()[i] - cavity_.t()[j]));
                    const Complex smooth = split.full - split.log_coefficient * std::log(4.0 * sin_half * sin_half);
                    const std::size_t d = i > j ? i - j : j - i;
                    entry = km[d] * split.log_coefficient + h * smooth;
                }
                a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = entry;
            }
        }
        lu_.compute(a);
        const double rcond = lu_.rcond();
        condition_ = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
        if (!(condition_ <= max_condition)) {
            throw EigenvalueProximityError("forward system is nearly singular (condition estimate " +
                                           std::to_string(condition_) +
                                           "); k^2 is close to a Dirichlet eigenvalue of the cavity, try another k");
        }
    }

    const ParametricCurve& cavity() const { return cavity_; }
    double wavenumber() const { return k_; }
    double condition_estimate() const { return condition_; }

    BoundarySolution solve(const Vec2& source) const {
        if (!cavity_.contains(source)) throw DomainError("point source must lie strictly inside the cavity");
        const auto n = static_cast<Eigen::Index>(cavity_.size());
        Eigen::VectorXcd rhs(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vec2& x = cavity_.points()[static_cast<std::size_t>(i)];
            if ((x - source).norm() < 1e-8) throw SingularityError("point source on the cavity boundary");
            rhs(i) = -specfun::fundamental_solution(x, source, k_);
        }
        return BoundarySolution(cavity_, source, k_, lu_.solve(rhs));
    }

private:
    ParametricCurve cavity_;
    double k_;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
    double condition_ = 0.0;
};

inline BoundarySolution solve_forward(const ParametricCurve& cavity, const Vec2& source, double k) {
    return ForwardSolver(cavity, k).solve(source);
}

/// u = u^i + u^s at every node of `curve`.
inline Eigen::VectorXcd eval_total_field(const BoundarySolution& sol, const ParametricCurve& curve) {
    for (const auto& p : curve.points()) {
        if ((p - sol.source()).norm() < 1e-8) throw SingularityError("measurement curve passes through the source");
    }
    Eigen::VectorXcd u = sol.scattered(std::span<const Vec2>(curve.points()));
    for (std::size_t i = 0; i < curve.size(); ++i) u(static_cast<Eigen::Index>(i)) += sol.incident(curve.points()[i]);
    return u;
}

/// Total-field samples on the two measurement curves, one entry per source.
struct MeasurementSet {
    ParametricCurve gamma1;
    ParametricCurve gamma2;
    std::vector<Eigen::VectorXcd> u1;
    std::vector<Eigen::VectorXcd> u2;
    double delta = 0.0;

    std::size_t source_count() const { return u1.size(); }

    /// (u_{j,1}, u_{j,2}) stacked into one vector.
    Eigen::VectorXcd stacked(std::size_t j) const {
        Eigen::VectorXcd v(u1[j].size() + u2[j].size());
        v << u1[j], u2[j];
        return v;
    }

    void validate() const {
        if (u1.size() != u2.size()) throw GeometryError("measurement set: per-curve source counts differ");
        for (std::size_t j = 0; j < u1.size(); ++j) {
            if (static_cast<std::size_t>(u1[j].size()) != gamma1.size() ||
                static_cast<std::size_t>(u2[j].size()) != gamma2.size()) {
                throw GeometryError("measurement set: sample count does not match curve nodes");
            }
            if (!u1[j].allFinite() || !u2[j].allFinite()) throw DomainError("measurement set: non-finite sample");
        }
    }
};

inline MeasurementSet simulate_measurements(const ForwardSolver& solver, std::span<const Vec2> sources,
                                            const ParametricCurve& gamma1, const ParametricCurve& gamma2) {
    MeasurementSet m{gamma1, gamma2, {}, {}, 0.0};
    for (const auto& z : sources) {
        const BoundarySolution sol = solver.solve(z);
        m.u1.push_back(eval_total_field(sol, gamma1));
        m.u2.push_back(eval_total_field(sol, gamma2));
    }
    return m;
}

/// Whether the random pair (gamma1, gamma2) is drawn per sample or once per
/// source data vector.
enum class NoiseMode { PerSample, PerVector };

/// u^delta = u + g1 delta |u| exp(i pi g2), g1, g2 ~ U[-1, 1].
inline MeasurementSet add_noise(const MeasurementSet& data, double delta, std::uint64_t seed,
                                NoiseMode mode = NoiseMode::PerSample) {
    if (!(delta >= 0.0 && delta < 1.0)) throw DomainError("noise level must lie in [0, 1)");
    MeasurementSet out = data;
    out.delta = delta;
    if (delta == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    auto perturb = [&](Complex u, double g1, double g2) { return u + g1 * delta * std::abs(u) * std::polar(1.0, kPi * g2); };
    for (std::size_t j = 0; j < out.source_count(); ++j) {
        if (mode == NoiseMode::PerVector) {
            const double g1 = uniform(rng);
            const double g2 = uniform(rng);
            for (auto* v : {&out.u1[j], &out.u2[j]}) {
                for (auto& u : *v) u = perturb(u, g1, g2);
            }
        } else {
            for (auto* v : {&out.u1[j], &out.u2[j]}) {
                for (auto& u : *v) {
                    const double g1 = uniform(rng);
                    const double g2 = uniform(rng);
                    u = perturb(u, g1, g2);
                }
            }
        }
    }
    return out;
}

}  // namespace cavity::forward
