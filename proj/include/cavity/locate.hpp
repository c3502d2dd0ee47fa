#pragma once

// Point-source localisation by direct sampling.
//
// I(y) = Re int_{Gamma_3} u^i(x) exp(-i(k|x - y| + pi/4)) ds(x) on a far
// circle Gamma_3, evaluated over a Cartesian grid. The maximiser estimates
// the source position.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cavity/decouple.hpp"
#include "cavity/geometry.hpp"
#include "cavity/types.hpp"

namespace cavity::locate {

using geometry::ParametricCurve;

/// n_x by n_y equispaced points on [x_lo, x_hi] x [y_lo, y_hi], endpoints included.
struct SamplingGrid {
    double x_lo = -1.0;
    double x_hi = 1.0;
    double y_lo = -1.0;
    double y_hi = 1.0;
    std::size_t nx = 150;
    std::size_t ny = 150;

    void validate() const {
        if (nx < 2 || ny < 2) throw DomainError("sampling grid needs at least 2 points per axis");
        if (!(x_lo < x_hi) || !(y_lo < y_hi)) throw DomainError("sampling grid box is empty");
    }
    std::size_t size() const { return nx * ny; }
    double dx() const { return (x_hi - x_lo) / static_cast<double>(nx - 1); }
    double dy() const { return (y_hi - y_lo) / static_cast<double>(ny - 1); }
    Vec2 point(std::size_t ix, std::size_t iy) const {
        return {x_lo + dx() * static_cast<double>(ix), y_lo + dy() * static_cast<double>(iy)};
    }
    /// Row-major index iy * nx + ix.
    Vec2 point(std::size_t index) const { return point(index % nx, index / nx); }
    double max_radius() const {
        return std::hypot(std::max(std::abs(x_lo), std::abs(x_hi)), std::max(std::abs(y_lo), std::abs(y_hi)));
    }
};

/// Indicator values over the grid (row-major) and the maximiser within the
/// search disk |y| <= search_radius.
struct IndicatorField {
    SamplingGrid grid;
    std::vector<double> values;
    double search_radius = std::numeric_limits<double>::infinity();
    std::size_t argmax_index = 0;

    Vec2 argmax() const { return grid.point(argmax_index); }
    double value(std::size_t ix, std::size_t iy) const { return values[iy * grid.nx + ix]; }
};

/// Default far circle: radius 15, 256 nodes.
inline ParametricCurve far_circle(double radius = 15.0, std::size_t nodes = 256) {
    return geometry::make_circle(Vec2::Zero(), radius, nodes);
}

/// I(y) for incident-field samples u on the nodes of gamma3.
inline double indicator_value(const ParametricCurve& gamma3, const Eigen::VectorXcd& u, const Vec2& y, double k) {
    Complex s(0.0);
    for (std::size_t i = 0; i < gamma3.size(); ++i) {
        const double phase = k * (gamma3.points()[i] - y).norm() + 0.25 * kPi;
        s += u(static_cast<Eigen::Index>(i)) * std::polar(gamma3.weights()[i], -phase);
    }
    return s.real();
}

/// Smallest row-major index attaining the maximum among points with |y| <= radius.
inline std::size_t grid_argmax(const SamplingGrid& grid, const std::vector<double>& values, double radius) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (grid.point(i).norm() > radius) continue;
        if (!best || values[i] > values[*best]) best = i;
    }
    if (!best) throw DomainError("no sampling point inside the search disk");
    return *best;
}

inline IndicatorField indicator_from_samples(const ParametricCurve& gamma3, const Eigen::VectorXcd& u,
                                             const SamplingGrid& grid, double k,
                                             double search_radius = std::numeric_limits<double>::infinity()) {
    grid.validate();
    if (!(k > 0.0)) throw DomainError("wavenumber must be positive");
    if (static_cast<std::size_t>(u.size()) != gamma3.size()) throw GeometryError("samples do not match Gamma3 nodes");
    if (grid.max_radius() >= gamma3.min_radius()) throw DomainError("sampling grid reaches the far circle");
    IndicatorField f{grid, std::vector<double>(grid.size()), search_radius, 0};
    for (std::size_t i = 0; i < grid.size(); ++i) f.values[i] = indicator_value(gamma3, u, grid.point(i), k);
    f.argmax_index = grid_argmax(grid, f.values, search_radius);
    return f;
}

/// Indicator of the decoupled incident field; the maximiser is searched in
/// the closed inner auxiliary disk B_1.
inline IndicatorField indicator_field(const decouple::DensityPair& dp, const SamplingGrid& grid,
                                      const ParametricCurve& gamma3, double k) {
    if (gamma3.min_radius() <= dp.aux->r1()) throw DomainError("Gamma3 must lie outside B1");
    const Eigen::VectorXcd u = decouple::eval_incident(dp, std::span<const Vec2>(gamma3.points()));
    return indicator_from_samples(gamma3, u, grid, k, dp.aux->r1());
}

/// Sub-cell peak from 1D parabolas through the 3x3 neighbourhood; falls
/// back to the grid point at the grid edge or for a flat neighbourhood.
inline Vec2 refine_peak(const IndicatorField& f) {
    const auto& g = f.grid;
    const std::size_t ix = f.argmax_index % g.nx;
    const std::size_t iy = f.argmax_index / g.nx;
    Vec2 p = f.argmax();
    auto vertex = [](double fm, double f0, double fp) {
        const double denom = fm - 2.0 * f0 + fp;
        if (!(denom < 0.0)) return 0.0;
        return std::clamp(0.5 * (fm - fp) / denom, -0.5, 0.5);
    };
    if (ix > 0 && ix + 1 < g.nx) {
        p.x() += g.dx() * vertex(f.value(ix - 1, iy), f.value(ix, iy), f.value(ix + 1, iy));
    }
    if (iy > 0 && iy + 1 < g.ny) {
        p.y() += g.dy() * vertex(f.value(ix, iy - 1), f.value(ix, iy), f.value(ix, iy + 1));
    }
    return p;
}

/// One location per indicator field: the grid argmax, optionally refined.
inline std::vector<Vec2> locate_sources(std::span<const IndicatorField> fields, bool refine = false) {
    std::vector<Vec2> out;
    out.reserve(fields.size());
    for (const auto& f : fields) out.push_back(refine ? refine_peak(f) : f.argmax());
    return out;
}

}  // namespace cavity::locate
