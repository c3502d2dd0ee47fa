#pragma once

// Cavity recovery by minimising the boundary defect
//   mu(Gamma) = sum_j |u^i_j + u^s_j|^2_{L^2(Gamma)}
// over star-like curves r(t)(cos t, sin t) with a degree-8 trigonometric
// radius, using Levenberg-Marquardt with a forward-difference Jacobian.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cavity/decouple.hpp"
#include "cavity/geometry.hpp"
#include "cavity/types.hpp"

namespace cavity::reconstruct {

using decouple::DensityPair;
using geometry::StarShape;

/// Radial bounds a <= r <= b and the node count M on candidate curves.
struct AdmissibleClass {
    double a = 0.41;
    double b = 1.49;
    std::size_t nodes = 64;

    void validate() const {
        if (!(a > 0.0 && a < b)) throw DomainError("admissible class needs 0 < a < b");
        if (nodes < 8) throw DomainError("admissible class needs at least 8 curve nodes");
    }

    /// [R1 + margin, R2 - margin].
    static AdmissibleClass inside(const decouple::AuxiliaryPair& aux, double margin = 0.01, std::size_t nodes = 64) {
        AdmissibleClass c{aux.r1() + margin, aux.r2() - margin, nodes};
        c.validate();
        return c;
    }
};

struct LmOptions {
    double lambda0 = 1e-3;
    double lambda_up = 10.0;
    double lambda_down = 10.0;
    double lambda_max = 1e10;
    int max_iterations = 200;
    double cost_tolerance = 1e-6;
    double step_tolerance = 1e-5;
    double fd_step = 1e-6;
};

enum class Termination { CostTolerance, StepTolerance, MaxIterations, Stalled };

inline std::string to_string(Termination t) {
    switch (t) {
        case Termination::CostTolerance: return "cost_tolerance";
        case Termination::StepTolerance: return "step_tolerance";
        case Termination::MaxIterations: return "max_iterations";
        case Termination::Stalled: return "stalled";
    }
    return "unknown";
}

struct ReconstructionResult {
    StarShape shape;
    AdmissibleClass admissible;
    std::vector<double> cost_history;  // cost after every accepted step, starting with the initial guess
    int iterations = 0;
    Termination termination = Termination::MaxIterations;
    std::optional<double> relative_error;

    /// Reconstructed radius: the star shape clamped into [a, b].
    double radius(double t) const { return std::clamp(shape.radius(t), admissible.a, admissible.b); }
    double final_cost() const { return cost_history.back(); }
};

/// Kernel rows Phi(x_i, y_q) w_q for curve nodes x_i against both auxiliary
/// circles, shared by all sources.
class DefectEvaluator {
public:
    DefectEvaluator(std::span<const DensityPair> densities) {
        if (densities.empty()) throw DomainError("boundary defect needs at least one source");
        aux_ = densities.front().aux;
        k_ = densities.front().k;
        const auto n1 = static_cast<Eigen::Index>(aux_->inner().size());
        const auto n2 = static_cast<Eigen::Index>(aux_->outer().size());
        phi_.resize(n1 + n2, static_cast<Eigen::Index>(densities.size()));
        for (std::size_t j = 0; j < densities.size(); ++j) {
            const auto& dp = densities[j];
            if (dp.aux != aux_ || dp.k != k_) throw DomainError("densities from different operators");
            const auto col = static_cast<Eigen::Index>(j);
            phi_.col(col).head(n1) = dp.phi1.cwiseProduct(weights(aux_->inner()));
            phi_.col(col).tail(n2) = dp.phi2.cwiseProduct(weights(aux_->outer()));
        }
        nodes_.insert(nodes_.end(), aux_->inner().points().begin(), aux_->inner().points().end());
        nodes_.insert(nodes_.end(), aux_->outer().points().begin(), aux_->outer().points().end());
    }

    const decouple::AuxiliaryPair& aux() const { return *aux_; }
    std::size_t sources() const { return static_cast<std::size_t>(phi_.cols()); }

    /// Weighted defect for radial samples r_i, r'_i at t_i = 2 pi i / M:
    /// entries sqrt(w_i) (u^i_j + u^s_j)(x_i), real and imaginary parts
    /// interleaved, sources outermost.
    Eigen::VectorXd residual(std::span<const double> r, std::span<const double> dr) const {
        const std::size_t m = r.size();
        const double h = kTwoPi / static_cast<double>(m);
        Eigen::MatrixXcd kernel(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(nodes_.size()));
        Eigen::VectorXd sqrt_w(static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < m; ++i) {
            const double t = h * static_cast<double>(i);
            const Vec2 x = polar(r[i], t);
            sqrt_w(static_cast<Eigen::Index>(i)) = std::sqrt(h * std::hypot(r[i], dr[i]));
            for (std::size_t q = 0; q < nodes_.size(); ++q) {
                kernel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) =
                    specfun::fundamental_solution(x, nodes_[q], k_);
            }
        }
        const Eigen::MatrixXcd u = kernel * phi_;  // m x N
        Eigen::VectorXd out(static_cast<Eigen::Index>(2 * m * sources()));
        Eigen::Index p = 0;
        for (Eigen::Index j = 0; j < u.cols(); ++j) {
            for (Eigen::Index i = 0; i < u.rows(); ++i) {
                const Complex v = sqrt_w(i) * u(i, j);
                out(p++) = v.real();
                out(p++) = v.imag();
            }
        }
        return out;
    }

private:
    static Eigen::VectorXcd weights(const geometry::ParametricCurve& c) {
        Eigen::VectorXcd w(static_cast<Eigen::Index>(c.size()));
        for (std::size_t i = 0; i < c.size(); ++i) w(static_cast<Eigen::Index>(i)) = c.weights()[i];
        return w;
    }

    std::shared_ptr<const decouple::AuxiliaryPair> aux_;
    double k_ = 0.0;
    Eigen::MatrixXcd phi_;
    std::vector<Vec2> nodes_;
};

namespace detail {

inline void radial_samples(const StarShape& s, std::size_t m, std::vector<double>& r, std::vector<double>& dr) {
    r.resize(m);
    dr.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto v = s.radial(kTwoPi * static_cast<double>(i) / static_cast<double>(m));
        r[i] = v.r;
        dr[i] = v.dr;
    }
}

/// Clamp into [a, b]; the clamped radius is flat where the bound is active.
inline void clamp_samples(const AdmissibleClass& cls, std::vector<double>& r, std::vector<double>& dr) {
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] < cls.a || r[i] > cls.b) {
            r[i] = std::clamp(r[i], cls.a, cls.b);
            dr[i] = 0.0;
        }
    }
}

inline Eigen::VectorXd clamped_residual(const DefectEvaluator& ev, const AdmissibleClass& cls, const Eigen::VectorXd& p) {
    std::vector<double> r, dr;
    radial_samples(StarShape::from_vector(p), cls.nodes, r, dr);
    clamp_samples(cls, r, dr);
    return ev.residual(r, dr);
}

inline Eigen::MatrixXd fd_jacobian(const DefectEvaluator& ev, const AdmissibleClass& cls, const Eigen::VectorXd& p,
                                   const Eigen::VectorXd& f0, double step) {
    Eigen::MatrixXd jac(f0.size(), p.size());
    for (Eigen::Index c = 0; c < p.size(); ++c) {
        Eigen::VectorXd q = p;
        q(c) += step;
        jac.col(c) = (clamped_residual(ev, cls, q) - f0) / step;
    }
    return jac;
}

}  // namespace detail

/// Residual vector whose squared norm is the discretised defect on the star
/// curve with M nodes. The curve must lie strictly between the auxiliary circles.
inline Eigen::VectorXd boundary_defect(const StarShape& shape, std::span<const DensityPair> densities, std::size_t m) {
    const DefectEvaluator ev(densities);
    std::vector<double> r, dr;
    detail::radial_samples(shape, m, r, dr);
    for (double v : r) {
        if (!(v > ev.aux().r1() && v < ev.aux().r2())) {
            throw InfeasibleShapeError("candidate curve leaves the annulus R1 < r < R2 (r = " + std::to_string(v) + ")");
        }
    }
    return ev.residual(r, dr);
}

inline double defect(const StarShape& shape, std::span<const DensityPair> densities, std::size_t m) {
    return boundary_defect(shape, densities, m).squaredNorm();
}

/// Max column-wise relative deviation between forward-difference Jacobians
/// at steps 1e-5 and 1e-7 (or the given pair).
inline double jacobian_check(const StarShape& shape, std::span<const DensityPair> densities, const AdmissibleClass& cls,
                             double step_a = 1e-5, double step_b = 1e-7) {
    const DefectEvaluator ev(densities);
    const Eigen::VectorXd p = shape.to_vector();
    const Eigen::VectorXd f0 = detail::clamped_residual(ev, cls, p);
    const Eigen::MatrixXd ja = detail::fd_jacobian(ev, cls, p, f0, step_a);
    const Eigen::MatrixXd jb = detail::fd_jacobian(ev, cls, p, f0, step_b);
    double worst = 0.0;
    for (Eigen::Index c = 0; c < ja.cols(); ++c) {
        const double scale = std::max(ja.col(c).norm(), jb.col(c).norm());
        if (scale == 0.0) continue;
        worst = std::max(worst, (ja.col(c) - jb.col(c)).norm() / scale);
    }
    return worst;
}

/// Relative L^2 error of the reconstruction against true radii sampled at
/// t_i = 2 pi i / n.
inline double relative_error(const ReconstructionResult& res, std::span<const double> true_radii) {
    std::vector<double> rec(true_radii.size());
    for (std::size_t i = 0; i < rec.size(); ++i) rec[i] = res.radius(kTwoPi * static_cast<double>(i) / static_cast<double>(rec.size()));
    return geometry::relative_l2_error(true_radii, rec);
}

/// Levenberg-Marquardt on the 17 trigonometric coefficients, radii clamped
/// into [a, b] inside the residual.
inline ReconstructionResult reconstruct_cavity(std::span<const DensityPair> densities, const AdmissibleClass& cls,
                                               const StarShape& init, const LmOptions& opts = {}) {
    cls.validate();
    const DefectEvaluator ev(densities);
    if (init.min_radius() < cls.a || init.max_radius() > cls.b) {
        throw InfeasibleShapeError("initial curve outside the admissible radial bounds");
    }
    ReconstructionResult res;
    res.admissible = cls;
    Eigen::VectorXd p = init.to_vector();
    Eigen::VectorXd f = detail::clamped_residual(ev, cls, p);
    double cost = f.squaredNorm();
    res.cost_history.push_back(cost);
    double lambda = opts.lambda0;
    const auto n = p.size();

    res.termination = Termination::MaxIterations;
    for (int it = 0; it < opts.max_iterations; ++it) {
        res.iterations = it + 1;
        if (cost < opts.cost_tolerance) {
            res.termination = Termination::CostTolerance;
            res.iterations = it;
            break;
        }
        const Eigen::MatrixXd jac = detail::fd_jacobian(ev, cls, p, f, opts.fd_step);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * f;
        bool accepted = false;
        bool done = false;
        while (!accepted) {
            const Eigen::MatrixXd lhs = jtj + lambda * Eigen::MatrixXd::Identity(n, n);
            const Eigen::VectorXd step = lhs.ldlt().solve(-grad);
            const Eigen::VectorXd trial = p + step;
            const Eigen::VectorXd f_trial = detail::clamped_residual(ev, cls, trial);
            const double c_trial = f_trial.squaredNorm();
            if (c_trial < cost) {
                p = trial;
                f = f_trial;
                cost = c_trial;
                res.cost_history.push_back(cost);
                lambda = std::max(lambda / opts.lambda_down, 1e-15);
                accepted = true;
                if (cost < opts.cost_tolerance) {
                    res.termination = Termination::CostTolerance;
                    done = true;
                } else if (step.norm() < opts.step_tolerance) {
                    res.termination = Termination::StepTolerance;
                    done = true;
                }
            } else {
                if (step.norm() < opts.step_tolerance) {
                    res.termination = Termination::StepTolerance;
                    done = true;
                    break;
                }
                lambda *= opts.lambda_up;
                if (lambda > opts.lambda_max) {
                    res.termination = Termination::Stalled;
                    done = true;
                    break;
                }
            }
        }
        if (done) break;
    }
    res.shape = StarShape::from_vector(p);
    return res;
}

/// Same, with the relative error against known radii attached.
inline ReconstructionResult reconstruct_cavity(std::span<const DensityPair> densities, const AdmissibleClass& cls,
                                               const StarShape& init, std::span<const double> true_radii,
                                               const LmOptions& opts = {}) {
    ReconstructionResult res = reconstruct_cavity(densities, cls, init, opts);
    res.relative_error = relative_error(res, true_radii);
    return res;
}

}  // namespace cavity::reconstruct
