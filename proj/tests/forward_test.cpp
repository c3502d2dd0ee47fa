#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cavity/forward.hpp"
#include "oracles/disk_series.hpp"

using namespace cavity;
using namespace cavity::forward;
using geometry::make_circle;
using geometry::make_kite;

namespace {

std::vector<Vec2> interior_points() {
    std::vector<Vec2> pts;
    for (double r : {0.0, 0.3, 0.6, 0.85, 0.95}) {
        for (int i = 0; i < 7; ++i) pts.push_back(polar(r, 0.4 + kTwoPi * i / 7.0));
    }
    return pts;
}

}  // namespace

TEST(DiskOracle, TotalFieldMatchesSeries) {
    const auto disk = make_circle(Vec2::Zero(), 1.0, 128);
    for (double k : {2.0, 4.0, 10.0}) {
        const ForwardSolver solver(disk, k);
        for (const Vec2& z : {Vec2(0.2, 0.1), Vec2(-0.4, 0.3)}) {
            const auto sol = solver.solve(z);
            for (const Vec2& x : interior_points()) {
                if ((x - z).norm() < 1e-3) continue;
                const Complex want = oracle::disk_total(x, z, k, 1.0);
                EXPECT_LT(std::abs(sol.total(x) - want), 1e-8) << "k=" << k << " x=" << x.transpose();
            }
        }
    }
}

TEST(DiskOracle, MeasurementCurveValues) {
    const auto disk = make_circle(Vec2::Zero(), 1.0, 128);
    const auto gamma = make_circle(Vec2::Zero(), 0.7, 128);
    const Vec2 z(0.1, -0.2);
    const auto sol = solve_forward(disk, z, 4.0);
    const Eigen::VectorXcd u = eval_total_field(sol, gamma);
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        EXPECT_LT(std::abs(u(static_cast<Eigen::Index>(i)) - oracle::disk_total(gamma.points()[i], z, 4.0, 1.0)), 1e-8);
    }
}

TEST(NearBoundary, AccurateCloseToTheWall) {
    const auto disk = make_circle(Vec2::Zero(), 1.0, 128);
    const Vec2 z(0.2, 0.1);
    const double k = 4.0;
    const auto sol = solve_forward(disk, z, k);
    for (double d : {1e-2, 1e-3, 1e-5, 1e-7}) {
        for (double angle : {0.0, 0.123, 2.0}) {
            const Vec2 x = polar(1.0 - d, angle);
            const Complex want = oracle::disk_total(x, z, k, 1.0);
            EXPECT_LT(std::abs(sol.total(x) - want), 1e-8) << d;
        }
    }
}

TEST(NearBoundary, FieldVanishesLinearlyAtTheWall) {
    // Dirichlet condition: u -> 0 on the boundary and u(d)/d tends to the
    // normal derivative as the distance d shrinks.
    const auto kite = make_kite(128);
    const auto sol = solve_forward(kite, Vec2(-0.3, 0.2), 2.0);
    for (double t : {0.1, 1.0, 2.5, 4.4}) {
        const auto s = kite.evaluate(t);
        EXPECT_LT(std::abs(sol.total(s.x)), 1e-6) << t;
        const Vec2 inward = Vec2(-s.dx.y(), s.dx.x()).normalized();
        const Complex slope2 = sol.total(s.x + 1e-5 * inward) / 1e-5;
        const Complex slope3 = sol.total(s.x + 1e-6 * inward) / 1e-6;
        EXPECT_GT(std::abs(slope2), 1e-2) << t;
        EXPECT_LT(std::abs(slope3 - slope2), 1e-3 * std::abs(slope2)) << t;
    }
}

TEST(Kite, SelfConvergence) {
    const Vec2 z(-0.4, 0.3);
    const std::vector<Vec2> probes = {Vec2(0.5, 0.0), Vec2(-1.0, 1.0), Vec2(0.0, -0.8), Vec2(-1.5, -0.9)};
    auto field = [&](std::size_t n) {
        const auto sol = solve_forward(make_kite(n), z, 3.0);
        Eigen::VectorXcd v(static_cast<Eigen::Index>(probes.size()));
        for (std::size_t i = 0; i < probes.size(); ++i) v(static_cast<Eigen::Index>(i)) = sol.total(probes[i]);
        return v;
    };
    const auto ref = field(512);
    const double e32 = (field(32) - ref).cwiseAbs().maxCoeff();
    const double e64 = (field(64) - ref).cwiseAbs().maxCoeff();
    const double e128 = (field(128) - ref).cwiseAbs().maxCoeff();
    EXPECT_LT(e64, e32 / 10.0);
    EXPECT_LT(e128, 1e-9);
}

TEST(Kite, ReciprocityOfGreenFunction) {
    // c sits 0.08 inside the upper wing, so the boundary data is sharply peaked
    const auto kite = make_kite(512);
    const ForwardSolver solver(kite, 2.5);
    const Vec2 a(-0.2, 0.4), b(0.5, -0.3), c(-1.3, 1.1);
    EXPECT_LT(std::abs(solver.solve(a).total(b) - solver.solve(b).total(a)), 1e-10);
    EXPECT_LT(std::abs(solver.solve(a).total(c) - solver.solve(c).total(a)), 1e-10);
}

TEST(Condition, DirichletEigenvalueRejected) {
    const auto disk = make_circle(Vec2::Zero(), 1.0, 128);
    const double j01 = 2.404825557695773;
    EXPECT_THROW(ForwardSolver(disk, j01), EigenvalueProximityError);
    const ForwardSolver away(disk, 2.0);
    const ForwardSolver near(disk, j01 + 1e-3);
    EXPECT_GT(near.condition_estimate(), 100.0 * away.condition_estimate());
}

TEST(Errors, InvalidInputs) {
    const auto disk = make_circle(Vec2::Zero(), 1.0, 64);
    EXPECT_THROW(ForwardSolver(disk, 0.0), DomainError);
    EXPECT_THROW(ForwardSolver(make_circle(Vec2::Zero(), 1.0, 63), 2.0), GeometryError);
    const ForwardSolver solver(disk, 2.0);
    EXPECT_THROW(solver.solve(Vec2(1.5, 0.0)), DomainError);
    const auto sol = solver.solve(Vec2(0.1, 0.1));
    EXPECT_THROW(sol.total(Vec2(0.1, 0.1)), SingularityError);
    EXPECT_THROW(sol.total(Vec2(0.1, 0.1 + 1e-9)), SingularityError);
}

class NoiseTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto disk = make_circle(Vec2::Zero(), 1.0, 64);
        const ForwardSolver solver(disk, 2.0);
        const std::vector<Vec2> sources = {Vec2(0.1, 0.0), Vec2(-0.2, 0.1), Vec2(0.0, -0.25)};
        clean = simulate_measurements(solver, sources, make_circle(Vec2::Zero(), 0.5, 128),
                                      make_circle(Vec2::Zero(), 0.7, 128));
    }
    MeasurementSet clean;
};

TEST_F(NoiseTest, ShapeAndZeroNoise) {
    clean.validate();
    EXPECT_EQ(clean.source_count(), 3u);
    EXPECT_EQ(clean.stacked(1).size(), 256);
    const auto same = add_noise(clean, 0.0, 5);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(same.u1[j], clean.u1[j]);
    EXPECT_THROW(add_noise(clean, 1.0, 5), DomainError);
    EXPECT_THROW(add_noise(clean, -0.1, 5), DomainError);
}

TEST_F(NoiseTest, PerturbationBoundedAndReproducible) {
    const double delta = 0.05;
    const auto a = add_noise(clean, delta, 42);
    const auto b = add_noise(clean, delta, 42);
    const auto c = add_noise(clean, delta, 43);
    EXPECT_EQ(a.delta, delta);
    double mean_ratio = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_EQ(a.u1[j], b.u1[j]);
        EXPECT_NE(a.u2[j], c.u2[j]);
        const Eigen::VectorXcd clean_j = clean.stacked(j);
        const Eigen::VectorXcd noisy_j = a.stacked(j);
        for (Eigen::Index i = 0; i < clean_j.size(); ++i) {
            const double ratio = std::abs(noisy_j(i) - clean_j(i)) / std::abs(clean_j(i));
            EXPECT_LE(ratio, delta * (1.0 + 1e-12));
            mean_ratio += ratio;
            ++count;
        }
        // ||u^delta - u|| <= delta ||u||
        EXPECT_LE((noisy_j - clean_j).norm(), delta * clean_j.norm() * (1.0 + 1e-12));
    }
    // |g1| ~ U[0, 1] so the mean relative perturbation is delta / 2.
    EXPECT_NEAR(mean_ratio / count, delta / 2.0, delta * 0.05);
}

TEST_F(NoiseTest, PerVectorUsesOnePairPerSource) {
    const auto a = add_noise(clean, 0.1, 7, NoiseMode::PerVector);
    for (std::size_t j = 0; j < 3; ++j) {
        const Eigen::VectorXcd clean_j = clean.stacked(j);
        const Eigen::VectorXcd noisy_j = a.stacked(j);
        const Complex factor0 = noisy_j(0) / clean_j(0);
        for (Eigen::Index i = 1; i < clean_j.size(); ++i) {
            const Complex expected = clean_j(i) + (factor0 - 1.0) * clean_j(0) / std::abs(clean_j(0)) * std::abs(clean_j(i));
            EXPECT_LT(std::abs(noisy_j(i) - expected), 1e-13);
        }
    }
}

TEST(DiskOracle, CentredSourceClosedForm) {
    const auto disk = make_circle(Vec2::Zero(), 1.0, 256);
    const double k = 2.0;
    const auto sol = solve_forward(disk, Vec2::Zero(), k);
    const Complex h0(std::cyl_bessel_j(0.0, k), std::cyl_neumann(0.0, k));
    for (int i = 0; i < 16; ++i) {
        const Vec2 x = polar(0.5, kTwoPi * i / 16.0);
        const Complex want = Complex(0.0, -0.25) * h0 / std::cyl_bessel_j(0.0, k) * std::cyl_bessel_j(0.0, k * 0.5);
        EXPECT_LT(std::abs(sol.scattered(x) - want), 1e-8);
    }
}

TEST(NLeaf, SelfConvergenceOnMeasurementCurve) {
    const auto gamma1 = make_circle(Vec2::Zero(), 0.5, 128);
    const Vec2 z(0.3, 0.0);
    auto scattered = [&](std::size_t n) {
        return solve_forward(geometry::make_nleaf(5, n), z, 10.0).scattered(std::span<const Vec2>(gamma1.points()));
    };
    EXPECT_LT((scattered(256) - scattered(512)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Kite, ScatteredFieldReciprocity) {
    const ForwardSolver solver(make_kite(256), 4.0);
    const std::vector<Vec2> pts = {Vec2(-0.3, 0.1), Vec2(0.4, 0.5), Vec2(-0.9, -0.6), Vec2(-0.1, -0.8)};
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            EXPECT_LT(std::abs(solver.solve(pts[i]).scattered(pts[j]) - solver.solve(pts[j]).scattered(pts[i])), 1e-6);
        }
    }
    // u^s is regular at its own source
    const auto sol = solver.solve(pts[0]);
    EXPECT_TRUE(std::isfinite(std::abs(sol.scattered(pts[0]))));
}

TEST(Noise, MeanRelativePerturbationOverManySamples) {
    MeasurementSet m{make_circle(Vec2::Zero(), 0.5, 5000), make_circle(Vec2::Zero(), 0.7, 5000), {}, {}, 0.0};
    m.u1.push_back(Eigen::VectorXcd::Constant(5000, Complex(0.3, -1.2)));
    m.u2.push_back(Eigen::VectorXcd::Constant(5000, Complex(-2.0, 0.5)));
    const double delta = 0.1;
    const auto noisy = add_noise(m, delta, 2024);
    double mean = 0.0;
    const Eigen::VectorXcd a = m.stacked(0), b = noisy.stacked(0);
    for (Eigen::Index i = 0; i < a.size(); ++i) mean += std::abs(b(i) - a(i)) / std::abs(a(i));
    mean /= static_cast<double>(a.size());
    EXPECT_NEAR(mean, delta / 2.0, 0.05 * delta / 2.0);
}
