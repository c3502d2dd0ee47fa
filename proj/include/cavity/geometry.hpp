#pragma once

// Closed parametric curves discretised at equispaced parameter values with
// trapezoidal weights, plus the shape families used by the experiments.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cavity/types.hpp"

namespace cavity::geometry {

/// Position, first and second derivative of a curve at one parameter value.
struct CurveSample {
    Vec2 x;
    Vec2 dx;
    Vec2 ddx;
};

using Parameterization = std::function<CurveSample(double)>;

/// A 2pi-periodic curve sampled at n equispaced parameter values.
///
/// Normals are outward for counterclockwise curves: (dy, -dx) / |dx|.
/// Weights are the trapezoidal arc-length weights (2pi/n) |dx/dt|, so that
/// sum_i f(x_i) w_i approximates the line integral of f.
class ParametricCurve {
public:
    ParametricCurve() = default;

    ParametricCurve(Parameterization param, std::size_t n_nodes) : param_(std::move(param)) {
        if (n_nodes < 4) throw GeometryError("a curve needs at least 4 nodes");
        t_.resize(n_nodes);
        points_.resize(n_nodes);
        d_points_.resize(n_nodes);
        dd_points_.resize(n_nodes);
        normals_.resize(n_nodes);
        weights_.resize(n_nodes);
        const double h = kTwoPi / static_cast<double>(n_nodes);
        for (std::size_t i = 0; i < n_nodes; ++i) {
            t_[i] = h * static_cast<double>(i);
            const CurveSample s = param_(t_[i]);
            const double speed = s.dx.norm();
            if (!(speed > 0.0)) throw GeometryError("irregular parameterization: |dx/dt| = 0");
            points_[i] = s.x;
            d_points_[i] = s.dx;
            dd_points_[i] = s.ddx;
            normals_[i] = Vec2(s.dx.y(), -s.dx.x()) / speed;
            weights_[i] = h * speed;
        }
    }

    /// Node data without an underlying parameterization (e.g. read from CSV).
    static ParametricCurve from_samples(std::vector<double> t, std::vector<Vec2> points, std::vector<Vec2> normals,
                                        std::vector<double> weights) {
        const std::size_t n = t.size();
        if (points.size() != n || normals.size() != n || weights.size() != n) {
            throw GeometryError("curve sample arrays differ in length");
        }
        ParametricCurve c;
        c.t_ = std::move(t);
        c.points_ = std::move(points);
        c.normals_ = std::move(normals);
        c.weights_ = std::move(weights);
        const double h = kTwoPi / static_cast<double>(n);
        c.d_points_.resize(n);
        c.dd_points_.assign(n, Vec2::Zero());
        for (std::size_t i = 0; i < n; ++i) {
            const double speed = c.weights_[i] / h;
            c.d_points_[i] = speed * Vec2(-c.normals_[i].y(), c.normals_[i].x());
        }
        return c;
    }

    std::size_t size() const { return t_.size(); }
    bool has_parameterization() const { return static_cast<bool>(param_); }
    const Parameterization& parameterization() const { return param_; }

    CurveSample evaluate(double t) const {
        if (!param_) throw GeometryError("curve has no parameterization");
        return param_(t);
    }

    /// Same curve at a different node count.
    ParametricCurve resampled(std::size_t n_nodes) const {
        if (!param_) throw GeometryError("curve has no parameterization to resample");
        return ParametricCurve(param_, n_nodes);
    }

    const std::vector<double>& t() const { return t_; }
    const std::vector<Vec2>& points() const { return points_; }
    const std::vector<Vec2>& d_points() const { return d_points_; }
    const std::vector<Vec2>& dd_points() const { return dd_points_; }
    const std::vector<Vec2>& normals() const { return normals_; }
    const std::vector<double>& weights() const { return weights_; }

    double length() const {
        double s = 0.0;
        for (double w : weights_) s += w;
        return s;
    }

    /// 1/2 closed integral of (x dy - y dx); positive for counterclockwise curves.
    double signed_area() const {
        const double h = kTwoPi / static_cast<double>(size());
        double a = 0.0;
        for (std::size_t i = 0; i < size(); ++i) {
            a += points_[i].x() * d_points_[i].y() - points_[i].y() * d_points_[i].x();
        }
        return 0.5 * h * a;
    }

    /// Winding-number test against the node polygon.
    bool contains(const Vec2& p) const {
        double winding = 0.0;
        const std::size_t n = size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 a = points_[i] - p;
            const Vec2 b = points_[(i + 1) % n] - p;
            winding += std::atan2(a.x() * b.y() - a.y() * b.x(), a.dot(b));
        }
        return std::abs(winding) > kPi;
    }

    double min_radius() const {
        double r = std::numeric_limits<double>::infinity();
        for (const auto& p : points_) r = std::min(r, p.norm());
        return r;
    }

    double max_radius() const {
        double r = 0.0;
        for (const auto& p : points_) r = std::max(r, p.norm());
        return r;
    }

private:
    Parameterization param_;
    std::vector<double> t_;
    std::vector<Vec2> points_;
    std::vector<Vec2> d_points_;
    std::vector<Vec2> dd_points_;
    std::vector<Vec2> normals_;
    std::vector<double> weights_;
};

/// Radial function value and its first two derivatives.
struct RadialSample {
    double r;
    double dr;
    double ddr;
};

using RadialFunction = std::function<RadialSample(double)>;

/// x(t) = r(t) (cos t, sin t).
inline Parameterization radial_parameterization(RadialFunction radial) {
    return [radial = std::move(radial)](double t) {
        const RadialSample s = radial(t);
        const Vec2 e(std::cos(t), std::sin(t));
        const Vec2 e_perp(-std::sin(t), std::cos(t));
        return CurveSample{s.r * e, s.dr * e + s.r * e_perp, (s.ddr - s.r) * e + 2.0 * s.dr * e_perp};
    };
}

inline ParametricCurve make_circle(const Vec2& center, double radius, std::size_t n_nodes) {
    if (!(radius > 0.0)) throw GeometryError("circle radius must be positive");
    if (n_nodes < 8) throw GeometryError("a circle needs at least 8 nodes");
    return ParametricCurve(
        [center, radius](double t) {
            const Vec2 e(std::cos(t), std::sin(t));
            return CurveSample{center + radius * e, radius * Vec2(-e.y(), e.x()), -radius * e};
        },
        n_nodes);
}

/// n-leaf boundary (1 + 0.2 cos nt)(cos t, sin t).
inline RadialFunction nleaf_radial(int n) {
    if (n < 1) throw GeometryError("n-leaf needs n >= 1");
    return [n](double t) {
        const double c = std::cos(n * t);
        const double s = std::sin(n * t);
        return RadialSample{1.0 + 0.2 * c, -0.2 * n * s, -0.2 * n * n * c};
    };
}

inline ParametricCurve make_nleaf(int n, std::size_t n_nodes) {
    return ParametricCurve(radial_parameterization(nleaf_radial(n)), n_nodes);
}

/// Kite (cos t + 0.65 cos 2t - 0.65, 1.5 sin t).
inline Parameterization kite_parameterization() {
    return [](double t) {
        const double c = std::cos(t), s = std::sin(t);
        const double c2 = std::cos(2.0 * t), s2 = std::sin(2.0 * t);
        return CurveSample{Vec2(c + 0.65 * c2 - 0.65, 1.5 * s), Vec2(-s - 1.3 * s2, 1.5 * c),
                           Vec2(-c - 2.6 * c2, -1.5 * s)};
    };
}

inline ParametricCurve make_kite(std::size_t n_nodes) {
    if (n_nodes < 8) throw GeometryError("a kite needs at least 8 nodes");
    return ParametricCurve(kite_parameterization(), n_nodes);
}

/// Star-like boundary with radial function
/// a0 + sum_{j=1..8} (a_j cos jt + b_j sin jt).
struct StarShape {
    static constexpr int kDegree = 8;
    static constexpr int kCoefficients = 2 * kDegree + 1;

    double a0 = 1.0;
    std::array<double, kDegree> a{};  // a[j-1] multiplies cos(jt)
    std::array<double, kDegree> b{};  // b[j-1] multiplies sin(jt)

    static StarShape circle(double radius) {
        StarShape s;
        s.a0 = radius;
        return s;
    }

    RadialSample radial(double t) const {
        RadialSample out{a0, 0.0, 0.0};
        for (int j = 1; j <= kDegree; ++j) {
            const double c = std::cos(j * t), s = std::sin(j * t);
            const double aj = a[j - 1], bj = b[j - 1];
            out.r += aj * c + bj * s;
            out.dr += j * (-aj * s + bj * c);
            out.ddr -= j * j * (aj * c + bj * s);
        }
        return out;
    }

    double radius(double t) const { return radial(t).r; }

    /// Coefficient vector ordered (a0, a1..a8, b1..b8).
    Eigen::VectorXd to_vector() const {
        Eigen::VectorXd v(kCoefficients);
        v(0) = a0;
        for (int j = 0; j < kDegree; ++j) {
            v(1 + j) = a[j];
            v(1 + kDegree + j) = b[j];
        }
        return v;
    }

    static StarShape from_vector(const Eigen::VectorXd& v) {
        if (v.size() != kCoefficients) throw InvalidShapeError("star shape needs 17 coefficients");
        StarShape s;
        s.a0 = v(0);
        for (int j = 0; j < kDegree; ++j) {
            s.a[j] = v(1 + j);
            s.b[j] = v(1 + kDegree + j);
        }
        return s;
    }

    /// Minimum of the radial function over a dense grid.
    double min_radius(int samples = 1024) const {
        double m = std::numeric_limits<double>::infinity();
        for (int i = 0; i < samples; ++i) m = std::min(m, radius(kTwoPi * i / samples));
        return m;
    }

    double max_radius(int samples = 1024) const {
        double m = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < samples; ++i) m = std::max(m, radius(kTwoPi * i / samples));
        return m;
    }
};

/// Least-squares degree-8 trigonometric fit of radii sampled at 2pi i/n.
/// Exact for trigonometric polynomials of degree <= 8 when n > 16.
inline StarShape fit_star_shape(std::span<const double> radii) {
    const std::size_t n = radii.size();
    if (n <= 2 * StarShape::kDegree) throw InvalidShapeError("need more than 16 samples to fit a star shape");
    StarShape s;
    s.a0 = 0.0;
    for (double r : radii) s.a0 += r;
    s.a0 /= static_cast<double>(n);
    for (int j = 1; j <= StarShape::kDegree; ++j) {
        double ca = 0.0, cb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
            ca += radii[i] * std::cos(j * t);
            cb += radii[i] * std::sin(j * t);
        }
        s.a[j - 1] = 2.0 * ca / static_cast<double>(n);
        s.b[j - 1] = 2.0 * cb / static_cast<double>(n);
    }
    return s;
}

inline ParametricCurve make_star(const StarShape& shape, std::size_t n_nodes) {
    ParametricCurve curve(radial_parameterization([shape](double t) { return shape.radial(t); }), n_nodes);
    for (double t : curve.t()) {
        if (!(shape.radius(t) > 0.0)) throw InvalidShapeError("star shape has a nonpositive radius");
    }
    return curve;
}

/// Interpolating cubic spline with periodic end conditions on equispaced
/// knots 2pi i/n, i = 0..n-1 (the value at 2pi repeats the value at 0).
class PeriodicCubicSpline {
public:
    PeriodicCubicSpline() = default;

    explicit PeriodicCubicSpline(std::vector<double> values) : y_(std::move(values)) {
        const int n = static_cast<int>(y_.size());
        if (n < 3) throw GeometryError("periodic spline needs at least 3 knots");
        h_ = kTwoPi / n;
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd rhs(n);
        for (int i = 0; i < n; ++i) {
            const int prev = (i + n - 1) % n;
            const int next = (i + 1) % n;
            a(i, prev) += 1.0;
            a(i, i) += 4.0;
            a(i, next) += 1.0;
            rhs(i) = 6.0 * (y_[next] - 2.0 * y_[i] + y_[prev]) / (h_ * h_);
        }
        const Eigen::VectorXd m = a.partialPivLu().solve(rhs);
        m_.assign(m.data(), m.data() + n);
    }

    std::size_t knot_count() const { return y_.size(); }
    const std::vector<double>& values() const { return y_; }

    RadialSample operator()(double t) const {
        const int n = static_cast<int>(y_.size());
        double u = std::fmod(t, kTwoPi);
        if (u < 0.0) u += kTwoPi;
        int i = static_cast<int>(u / h_);
        if (i >= n) i = n - 1;
        const int j = (i + 1) % n;
        const double left = u - h_ * i;   // t - t_i
        const double right = h_ - left;   // t_{i+1} - t
        const double mi = m_[i], mj = m_[j];
        const double s = mi * right * right * right / (6.0 * h_) + mj * left * left * left / (6.0 * h_) +
                         (y_[i] / h_ - mi * h_ / 6.0) * right + (y_[j] / h_ - mj * h_ / 6.0) * left;
        const double ds = -mi * right * right / (2.0 * h_) + mj * left * left / (2.0 * h_) -
                          (y_[i] / h_ - mi * h_ / 6.0) + (y_[j] / h_ - mj * h_ / 6.0);
        const double dds = (mi * right + mj * left) / h_;
        return {s, ds, dds};
    }

private:
    std::vector<double> y_;
    std::vector<double> m_;
    double h_ = 0.0;
};

/// Knot data of a random star-like cavity.
struct RandomShapeSpec {
    int n_knots = 8;
    std::vector<double> knot_radii;
    std::uint64_t seed = 0;
};

struct RandomShapeOptions {
    int min_knots = 8;
    int max_knots = 16;
    double min_knot_radius = 0.4;
    double max_knot_radius = 1.6;
    /// Optional acceptance band for the whole spline curve; draws falling
    /// outside it are discarded and redrawn from the same stream.
    std::optional<std::pair<double, double>> accept_band;
    int max_attempts = 10'000'000;
};

/// Radial function of a random cavity: periodic cubic spline through the knots.
class RandomShape {
public:
    explicit RandomShape(RandomShapeSpec spec) : spec_(std::move(spec)), spline_(spec_.knot_radii) {
        if (static_cast<int>(spec_.knot_radii.size()) != spec_.n_knots) {
            throw GeometryError("random shape: knot count mismatch");
        }
    }

    const RandomShapeSpec& spec() const { return spec_; }
    RadialSample radial(double t) const { return spline_(t); }
    double radius(double t) const { return spline_(t).r; }

    std::pair<double, double> radius_range(int samples = 2048) const {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int i = 0; i < samples; ++i) {
            const double r = radius(kTwoPi * i / samples);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        return {lo, hi};
    }

    /// How far the spline leaves [lo_knot, hi_knot] between the knots.
    double overshoot(double lo_knot = 0.4, double hi_knot = 1.6) const {
        const auto [lo, hi] = radius_range();
        return std::max({0.0, lo_knot - lo, hi - hi_knot});
    }

    RadialFunction radial_function() const {
        return [spline = spline_](double t) { return spline(t); };
    }

private:
    RandomShapeSpec spec_;
    PeriodicCubicSpline spline_;
};

/// Draws n_T uniformly from {min_knots..max_knots} and knot radii from
/// U[min_knot_radius, max_knot_radius]. Deterministic given the seed.
inline RandomShapeSpec draw_random_shape_spec(std::uint64_t seed, const RandomShapeOptions& opts = {}) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> knots(opts.min_knots, opts.max_knots);
    std::uniform_real_distribution<double> radius(opts.min_knot_radius, opts.max_knot_radius);
    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
        RandomShapeSpec spec;
        spec.seed = seed;
        spec.n_knots = knots(rng);
        spec.knot_radii.resize(spec.n_knots);
        for (auto& r : spec.knot_radii) r = radius(rng);
        const auto [lo, hi] = RandomShape(spec).radius_range();
        if (!(lo > 0.0)) continue;
        if (opts.accept_band && (lo < opts.accept_band->first || hi > opts.accept_band->second)) continue;
        return spec;
    }
    throw GeometryError("random shape: no admissible draw within the attempt budget");
}

inline ParametricCurve make_random_shape(const RandomShapeSpec& spec, std::size_t n_nodes = 128) {
    const RandomShape shape(spec);
    if (!(shape.radius_range().first > 0.0)) throw InvalidShapeError("random shape spline dips below zero");
    return ParametricCurve(radial_parameterization(shape.radial_function()), n_nodes);
}

/// Radial samples r(theta_i), theta_i = 2pi i/n, of a curve that is
/// star-shaped about the origin and traversed counterclockwise, found by
/// intersecting each ray with the curve.
inline std::vector<double> radial_samples_by_ray(const Parameterization& param, std::size_t n_angles = 128) {
    constexpr int kTable = 4096;
    std::vector<double> ts(kTable + 1), phis(kTable + 1);
    double offset = 0.0;
    double prev = 0.0;
    for (int i = 0; i <= kTable; ++i) {
        ts[i] = kTwoPi * i / kTable;
        const Vec2 x = param(ts[i]).x;
        double phi = std::atan2(x.y(), x.x());
        if (i > 0) {
            while (phi + offset < prev - kPi) offset += kTwoPi;
            while (phi + offset > prev + kPi) offset -= kTwoPi;
        }
        phis[i] = phi + offset;
        prev = phis[i];
    }
    if (!(phis[kTable] - phis[0] > kTwoPi - 1e-9)) throw GeometryError("curve is not star-shaped about the origin");
    auto unwrapped_angle = [&](double t, double reference) {
        const Vec2 x = param(t).x;
        double phi = std::atan2(x.y(), x.x());
        while (phi < reference - kPi) phi += kTwoPi;
        while (phi > reference + kPi) phi -= kTwoPi;
        return phi;
    };
    std::vector<double> out(n_angles);
    for (std::size_t k = 0; k < n_angles; ++k) {
        double theta = kTwoPi * static_cast<double>(k) / static_cast<double>(n_angles);
        while (theta < phis[0]) theta += kTwoPi;
        while (theta >= phis[0] + kTwoPi) theta -= kTwoPi;
        const auto it = std::lower_bound(phis.begin(), phis.end(), theta);
        const auto hi = std::clamp<std::ptrdiff_t>(std::distance(phis.begin(), it), 1, kTable);
        double lo_t = ts[hi - 1], hi_t = ts[hi];
        for (int iter = 0; iter < 80; ++iter) {
            const double mid = 0.5 * (lo_t + hi_t);
            if (unwrapped_angle(mid, theta) < theta) lo_t = mid; else hi_t = mid;
        }
        out[k] = param(0.5 * (lo_t + hi_t)).x.norm();
    }
    return out;
}

inline std::vector<double> sample_radial(const std::function<double(double)>& radius, std::size_t n = 128) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = radius(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
    return out;
}

/// ||r_true - r_rec|| / ||r_true|| in L^2[0, 2pi], trapezoidal rule on a
/// shared equispaced grid.
inline double relative_l2_error(std::span<const double> r_true, std::span<const double> r_rec) {
    if (r_true.size() != r_rec.size() || r_true.empty()) {
        throw GeometryError("radial samples must share a nonempty grid");
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < r_true.size(); ++i) {
        const double d = r_true[i] - r_rec[i];
        num += d * d;
        den += r_true[i] * r_true[i];
    }
    if (den == 0.0) throw DomainError("relative error against a zero radial function");
    return std::sqrt(num / den);
}

}  // namespace cavity::geometry
