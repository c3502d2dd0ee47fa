#pragma once

// Splitting measured total fields into incident and scattered parts.
//
// For each source the data on Gamma_1 and Gamma_2 are fitted by two
// single-layer potentials, one on the inner auxiliary circle (incident part,
// valid outside B_1) and one on the outer circle (scattered part, valid inside
// B_2). The first-kind system is solved with Tikhonov regularisation, the
// parameter picked by the discrepancy principle.
//
// Everything is done in weighted coordinates: data rows are scaled by the
// square roots of the measurement quadrature weights and densities by those
// of the auxiliary weights, so Euclidean norms approximate L^2 norms and the
// conjugate transpose is the discrete adjoint.

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cavity/forward.hpp"
#include "cavity/geometry.hpp"
#include "cavity/specfun.hpp"
#include "cavity/types.hpp"

namespace cavity::decouple {

using geometry::ParametricCurve;

/// The circles dB_1 (radius r1) and dB_2 (radius r2) centred at the origin.
class AuxiliaryPair {
public:
    AuxiliaryPair(double r1, double r2, std::size_t n1 = 90, std::size_t n2 = 160)
        : r1_(r1), r2_(r2), inner_(make(r1, n1)), outer_(make(r2, n2)) {
        if (!(r1 < r2)) throw GeometryError("auxiliary circles: need R1 < R2");
    }

    double r1() const { return r1_; }
    double r2() const { return r2_; }
    const ParametricCurve& inner() const { return inner_; }
    const ParametricCurve& outer() const { return outer_; }

    /// B_1 inside Omega_1 inside Omega_2 inside B_2, checked on the nodes.
    void check_nesting(const ParametricCurve& gamma1, const ParametricCurve& gamma2) const {
        for (const auto& p : inner_.points()) {
            if (!gamma1.contains(p)) throw GeometryError("auxiliary B1 not inside Gamma1");
        }
        for (const auto& p : gamma1.points()) {
            if (p.norm() <= r1_) throw GeometryError("auxiliary B1 not inside Gamma1");
            if (!gamma2.contains(p)) throw GeometryError("Gamma1 not inside Gamma2");
        }
        for (const auto& p : gamma2.points()) {
            if (p.norm() >= r2_) throw GeometryError("Gamma2 not inside auxiliary B2");
        }
    }

private:
    static ParametricCurve make(double r, std::size_t n) {
        if (!(r > 0.0)) throw GeometryError("auxiliary radius must be positive");
        return geometry::make_circle(Vec2::Zero(), r, n);
    }

    double r1_;
    double r2_;
    ParametricCurve inner_;
    ParametricCurve outer_;
};

namespace detail {

inline Eigen::VectorXd sqrt_weights(const ParametricCurve& a, const ParametricCurve& b) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(a.size() + b.size()));
    Eigen::Index i = 0;
    for (double x : a.weights()) w(i++) = std::sqrt(x);
    for (double x : b.weights()) w(i++) = std::sqrt(x);
    return w;
}

/// Trapezoidal single layer sum_q Phi(x, y_q) w_q phi_q.
inline Complex single_layer(const ParametricCurve& curve, const Eigen::VectorXcd& density, const Vec2& x, double k) {
    Complex s(0.0);
    for (std::size_t q = 0; q < curve.size(); ++q) {
        s += specfun::fundamental_solution(x, curve.points()[q], k) * curve.weights()[q] *
             density(static_cast<Eigen::Index>(q));
    }
    return s;
}

}  // namespace detail

/// Weighted 2x2 block discretisation of S and its SVD.
class DiscreteOperator {
public:
    DiscreteOperator(std::shared_ptr<const AuxiliaryPair> aux, ParametricCurve gamma1, ParametricCurve gamma2, double k)
        : aux_(std::move(aux)), gamma1_(std::move(gamma1)), gamma2_(std::move(gamma2)), k_(k) {
        if (!(k > 0.0)) throw DomainError("wavenumber must be positive");
        aux_->check_nesting(gamma1_, gamma2_);
        row_scale_ = detail::sqrt_weights(gamma1_, gamma2_);
        col_scale_ = detail::sqrt_weights(aux_->inner(), aux_->outer());
        std::vector<Vec2> rows(gamma1_.points());
        rows.insert(rows.end(), gamma2_.points().begin(), gamma2_.points().end());
        std::vector<Vec2> cols(aux_->inner().points());
        cols.insert(cols.end(), aux_->outer().points().begin(), aux_->outer().points().end());
        matrix_.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t p = 0; p < rows.size(); ++p) {
            for (std::size_t q = 0; q < cols.size(); ++q) {
                if ((rows[p] - cols[q]).norm() < 1e-12) throw GeometryError("measurement and auxiliary nodes coincide");
                const auto pi = static_cast<Eigen::Index>(p);
                const auto qi = static_cast<Eigen::Index>(q);
                matrix_(pi, qi) = row_scale_(pi) * specfun::fundamental_solution(rows[p], cols[q], k_) * col_scale_(qi);
            }
        }
        svd_.compute(matrix_, Eigen::ComputeThinU | Eigen::ComputeThinV);
    }

    const std::shared_ptr<const AuxiliaryPair>& aux() const { return aux_; }
    const ParametricCurve& gamma1() const { return gamma1_; }
    const ParametricCurve& gamma2() const { return gamma2_; }
    double wavenumber() const { return k_; }
    const Eigen::MatrixXcd& matrix() const { return matrix_; }
    const Eigen::VectorXd& singular_values() const { return svd_.singularValues(); }
    Eigen::Index rows() const { return matrix_.rows(); }
    Eigen::Index cols() const { return matrix_.cols(); }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const { return matrix_ * v; }
    Eigen::VectorXcd adjoint(const Eigen::VectorXcd& g) const { return matrix_.adjoint() * g; }

    /// Nodal data (u_1, u_2) to weighted coordinates.
    Eigen::VectorXcd weight_data(const Eigen::VectorXcd& u) const { return row_scale_.cwiseProduct(u); }
    /// Weighted density back to nodal values (phi_1, phi_2).
    Eigen::VectorXcd unweight_density(const Eigen::VectorXcd& v) const { return v.cwiseQuotient(col_scale_.cast<Complex>()); }

    /// Projection of weighted data onto the left singular vectors.
    Eigen::VectorXcd project(const Eigen::VectorXcd& b) const { return svd_.matrixU().adjoint() * b; }

    /// Minimiser of |A v - b|^2 + alpha |v|^2 given c = U^H b.
    Eigen::VectorXcd tikhonov(const Eigen::VectorXcd& c, double alpha) const {
        const Eigen::VectorXd& s = svd_.singularValues();
        Eigen::VectorXcd filtered(c.size());
        for (Eigen::Index i = 0; i < c.size(); ++i) filtered(i) = c(i) * (s(i) / (s(i) * s(i) + alpha));
        return svd_.matrixV() * filtered;
    }

    /// |A v_alpha - b| from the spectral coefficients; `outside` is the part
    /// of |b| orthogonal to the range of U.
    double residual(const Eigen::VectorXcd& c, double outside, double alpha) const {
        const Eigen::VectorXd& s = svd_.singularValues();
        double r2 = outside * outside;
        for (Eigen::Index i = 0; i < c.size(); ++i) {
            const double f = alpha / (s(i) * s(i) + alpha);
            r2 += f * f * std::norm(c(i));
        }
        return std::sqrt(r2);
    }

private:
    std::shared_ptr<const AuxiliaryPair> aux_;
    ParametricCurve gamma1_;
    ParametricCurve gamma2_;
    double k_;
    Eigen::VectorXd row_scale_;
    Eigen::VectorXd col_scale_;
    Eigen::MatrixXcd matrix_;
    Eigen::BDCSVD<Eigen::MatrixXcd> svd_;
};

/// Regularised densities for one source.
struct DensityPair {
    std::shared_ptr<const AuxiliaryPair> aux;
    double k = 0.0;
    Eigen::VectorXcd phi1;  // nodal values on dB_1
    Eigen::VectorXcd phi2;  // nodal values on dB_2
    double alpha = 0.0;
    double residual = 0.0;
    double target = 0.0;
    bool below_floor = false;  // target under the alpha -> 0 residual; smallest alpha used
};

struct DecoupleOptions {
    double rho = 1.0;  // target = rho * delta * |u^delta| + epsilon
    double log10_alpha_min = -14.0;
    double log10_alpha_max = 2.0;
    int iterations = 60;
    double relative_tolerance = 1e-3;
};

/// Tikhonov solution for weighted data b with alpha from the discrepancy
/// principle |A v - b| = target.
inline DensityPair solve_discrepancy(const DiscreteOperator& op, const Eigen::VectorXcd& b, double target,
                                     const DecoupleOptions& opts = {}) {
    const double norm_b = b.norm();
    if (target > norm_b) {
        throw DiscrepancyError("discrepancy target " + std::to_string(target) + " exceeds the data norm " +
                               std::to_string(norm_b));
    }
    const Eigen::VectorXcd c = op.project(b);
    const double outside = std::sqrt(std::max(0.0, norm_b * norm_b - c.squaredNorm()));
    auto res = [&](double log_alpha) { return op.residual(c, outside, std::pow(10.0, log_alpha)); };

    double lo = opts.log10_alpha_min;
    double hi = opts.log10_alpha_max;
    double log_alpha;
    bool below_floor = false;
    if (res(lo) >= target) {
        log_alpha = lo;
        below_floor = true;
    } else if (res(hi) <= target) {
        log_alpha = hi;
    } else {
        log_alpha = 0.5 * (lo + hi);
        for (int it = 0; it < opts.iterations; ++it) {
            log_alpha = 0.5 * (lo + hi);
            const double r = res(log_alpha);
            if (std::abs(r - target) <= opts.relative_tolerance * target) break;
            if (r < target) {
                lo = log_alpha;
            } else {
                hi = log_alpha;
            }
        }
    }
    const double alpha = std::pow(10.0, log_alpha);
    const Eigen::VectorXcd phi = op.unweight_density(op.tikhonov(c, alpha));
    const auto n1 = static_cast<Eigen::Index>(op.aux()->inner().size());
    DensityPair dp;
    dp.aux = op.aux();
    dp.k = op.wavenumber();
    dp.phi1 = phi.head(n1);
    dp.phi2 = phi.tail(phi.size() - n1);
    dp.alpha = alpha;
    dp.residual = op.residual(c, outside, alpha);
    dp.target = target;
    dp.below_floor = below_floor;
    return dp;
}

/// One DensityPair per source. The target for source j is
/// rho * delta * |u_j^delta| + epsilon in the weighted L^2 norm.
inline std::vector<DensityPair> decouple(const DiscreteOperator& op, const forward::MeasurementSet& data,
                                         const WaveParams& params, const DecoupleOptions& opts = {}) {
    params.validate();
    data.validate();
    if (data.gamma1.size() != op.gamma1().size() || data.gamma2.size() != op.gamma2().size()) {
        throw GeometryError("measurement curves do not match the operator");
    }
    std::vector<DensityPair> out;
    out.reserve(data.source_count());
    for (std::size_t j = 0; j < data.source_count(); ++j) {
        const Eigen::VectorXcd b = op.weight_data(data.stacked(j));
        const double target = opts.rho * params.delta * b.norm() + params.epsilon;
        out.push_back(solve_discrepancy(op, b, target, opts));
    }
    return out;
}

/// Regularised incident field: single layer on dB_1, valid outside the closed disk B_1.
inline Complex eval_incident(const DensityPair& dp, const Vec2& x) {
    if (x.norm() <= dp.aux->r1()) throw DomainError("incident field is represented only outside B1");
    for (const auto& y : dp.aux->inner().points()) {
        if ((x - y).norm() < 1e-8) throw DomainError("evaluation point on an auxiliary node");
    }
    return detail::single_layer(dp.aux->inner(), dp.phi1, x, dp.k);
}

/// Regularised scattered field: single layer on dB_2, valid inside B_2.
inline Complex eval_scattered(const DensityPair& dp, const Vec2& x) {
    if (x.norm() >= dp.aux->r2()) throw DomainError("scattered field is represented only inside B2");
    for (const auto& y : dp.aux->outer().points()) {
        if ((x - y).norm() < 1e-8) throw DomainError("evaluation point on an auxiliary node");
    }
    return detail::single_layer(dp.aux->outer(), dp.phi2, x, dp.k);
}

inline Eigen::VectorXcd eval_incident(const DensityPair& dp, std::span<const Vec2> points) {
    Eigen::VectorXcd v(static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) v(static_cast<Eigen::Index>(i)) = eval_incident(dp, points[i]);
    return v;
}

inline Eigen::VectorXcd eval_scattered(const DensityPair& dp, std::span<const Vec2> points) {
    Eigen::VectorXcd v(static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) v(static_cast<Eigen::Index>(i)) = eval_scattered(dp, points[i]);
    return v;
}

/// Weighted L^2 norm of nodal values on a curve.
inline double l2_norm(const ParametricCurve& curve, const Eigen::VectorXcd& values) {
    double s = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) s += curve.weights()[i] * std::norm(values(static_cast<Eigen::Index>(i)));
    return std::sqrt(s);
}

}  // namespace cavity::decouple
