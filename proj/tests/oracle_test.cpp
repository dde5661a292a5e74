/*
 * Copyright 2026 The alkiax Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <random>

#include "alkiax/alkiax.hpp"

namespace alkiax {
namespace {

SyntheticRkhsMember RandomMember(const Kernel &k, int n, int m, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PointSet c(m, n);
    Eigen::VectorXd a(m);
    for (int i = 0; i < m; ++i) {
        for (int d = 0; d < n; ++d) { c(i, d) = u(rng); }
        a[i] = 2.0 * u(rng) - 1.0;
    }
    return {k, c, a};
}

TEST(Synthetic, NormMatchesQuadraticForm) {
    std::mt19937_64 rng(1);
    const Kernel k(KernelFamily::Matern52, 0.4);
    const SyntheticRkhsMember f = RandomMember(k, 2, 6, rng);
    const Eigen::MatrixXd K = covariance_matrix(k, f.centers());
    EXPECT_NEAR(f.norm(), std::sqrt(f.coefficients().dot(K * f.coefficients())), 1e-12);
    const std::vector<double> x = {0.3, 0.7};
    Eigen::VectorXd xv(2);
    xv << 0.3, 0.7;
    EXPECT_NEAR(f.Value(x), covariance_vector(k, f.centers(), xv).dot(f.coefficients()), 1e-13);
    EXPECT_EQ(f.RestrictedNormBound(0.25), f.norm() * 4.0);
    PointSet dup(2, 1);
    dup << 0.5, 0.5;
    EXPECT_THROW(SyntheticRkhsMember(k, dup, Eigen::VectorXd::Ones(2)), DuplicatePointError);
    EXPECT_THROW(SyntheticRkhsMember(k, dup, Eigen::VectorXd::Ones(3)), ConfigError);
}

// |f(x) - s_X f(x)| <= P_X(x) ||f||_k for random members and random designs.
TEST(Synthetic, InterpolationErrorBoundHolds) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const KernelFamily families[] = {KernelFamily::SquaredExponential, KernelFamily::Matern12, KernelFamily::Matern32,
                                     KernelFamily::Matern52};
    double worst = -1e300;
    int used = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + trial % 2;
        const Kernel k(families[trial % 4], 0.3 + 0.5 * u(rng));
        const SyntheticRkhsMember f = RandomMember(k, n, 5, rng);
        const int m = 4 + trial % 5;
        PointSet X(m, n);
        for (int i = 0; i < m; ++i) {
            for (int d = 0; d < n; ++d) { X(i, d) = u(rng); }
        }
        Eigen::VectorXd fx(m);
        for (int i = 0; i < m; ++i) {
            std::vector<double> p(static_cast<std::size_t>(n));
            for (int d = 0; d < n; ++d) { p[static_cast<std::size_t>(d)] = X(i, d); }
            fx[i] = f.Value(p);
        }
        const Eigen::MatrixXd K = covariance_matrix(k, X);
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K, Eigen::EigenvaluesOnly).eigenvalues();
        const double cond = ev.maxCoeff() / ev.minCoeff();
        if (!(ev.minCoeff() > 0.0) || cond > 1e10) { continue; }
        ++used;
        const Eigen::VectorXd alpha = K.fullPivLu().solve(fx);
        // The power function loses digits as 1 - k^T K^-1 k; allow sqrt(cond * eps) of it.
        const double slack = 1e-8 + std::sqrt(cond * 1e-15) * f.norm();
        for (int q = 0; q < 20; ++q) {
            Eigen::VectorXd x(n);
            for (int d = 0; d < n; ++d) { x[d] = u(rng); }
            const Eigen::VectorXd kx = covariance_vector(k, X, x);
            const double s = kx.dot(alpha);
            const double power2 = std::max(0.0, 1.0 - kx.dot(K.fullPivLu().solve(kx)));
            const std::vector<double> xs(x.data(), x.data() + n);
            const double err = std::abs(f.Value(xs) - s);
            worst = std::max(worst, err - std::sqrt(power2) * f.norm() - slack);
        }
    }
    EXPECT_LE(worst, 0.0);
    EXPECT_GE(used, 150);
}

TEST(MinimizeBox, FindsConstrainedQuadraticMinimum) {
    // min (x0 - 3)^2 + 2 (x1 + 1)^2 + (x0 - x1)^2 / 2 on [0, 1]^2
    const auto f = [](std::span<const double> x, std::span<double> g) {
        if (!g.empty()) {
            g[0] = 2.0 * (x[0] - 3.0) + (x[0] - x[1]);
            g[1] = 4.0 * (x[1] + 1.0) - (x[0] - x[1]);
        }
        return (x[0] - 3.0) * (x[0] - 3.0) + 2.0 * (x[1] + 1.0) * (x[1] + 1.0) + 0.5 * (x[0] - x[1]) * (x[0] - x[1]);
    };
    const BoxQpResult r = minimize_box(f, {0.5, 0.5}, 0.0, 1.0, 200, 1e-10);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.x[0], 1.0, 1e-9);
    EXPECT_NEAR(r.x[1], 0.0, 1e-9);
    for (std::size_t i = 1; i < r.history.size(); ++i) { EXPECT_LE(r.history[i], r.history[i - 1]); }
}

TEST(Cstr, SteadyState) {
    const CstrConfig cfg;
    const CstrSteadyState s = cstr_steady_state(cfg);
    EXPECT_NEAR(s.x1, 0.263156, 5e-6);
    EXPECT_EQ(s.x2, 0.6519);
    EXPECT_NEAR(s.u, 0.758327, 5e-6);
    const std::vector<double> x = {s.x1, s.x2};
    const auto next = cstr_dynamics_step(x, s.u, cfg);
    EXPECT_NEAR(next[0], s.x1, 1e-14);
    EXPECT_NEAR(next[1], s.x2, 1e-14);
    const auto step = cstr_shifted_step(cfg);
    const std::vector<double> z = {0.0, 0.0};
    const std::vector<double> us = {s.u};
    const auto dz = step(z, us);
    EXPECT_NEAR(dz[0], 0.0, 1e-14);
    EXPECT_NEAR(dz[1], 0.0, 1e-14);
}

TEST(Cstr, GradientMatchesFiniteDifferences) {
    const CstrConfig cfg;
    const CstrSteadyState s = cstr_steady_state(cfg);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uz(-0.2, 0.2), uu(0.0, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
        const CstrMpcProblem prob(cfg, {s.x1 + uz(rng), s.x2 + uz(rng)});
        std::vector<double> u(static_cast<std::size_t>(cfg.horizon));
        for (double &v : u) { v = uu(rng); }
        std::vector<double> g(u.size());
        (void)prob.Evaluate(u, g);
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double h = 1e-6;
            std::vector<double> up = u, dn = u;
            up[i] += h;
            dn[i] -= h;
            const double fd = (prob.Evaluate(up, {}) - prob.Evaluate(dn, {})) / (2.0 * h);
            EXPECT_NEAR(g[i], fd, 1e-5 * std::max(1.0, std::abs(fd))) << trial << " " << i;
        }
    }
}

TEST(Cstr, OracleAtSteadyStateReturnsSteadyInput) {
    const CstrConfig cfg;
    const CstrMpcOracle o(cfg);
    const OracleSample at = o.Query(std::vector<double>{0.0, 0.0});
    EXPECT_TRUE(at.feasible);
    EXPECT_NEAR(at.values[0], cstr_steady_state(cfg).u, 1e-5);
    const CstrSolution sol = solve_cstr_mpc(cfg, std::vector<double>{0.1, -0.1});
    for (std::size_t i = 1; i < sol.history.size(); ++i) { EXPECT_LE(sol.history[i], sol.history[i - 1]); }
    for (double v : sol.u) {
        EXPECT_GE(v, cfg.u_min);
        EXPECT_LE(v, cfg.u_max);
    }
    EXPECT_EQ(o.domain().lower()[0], -0.2);
    EXPECT_EQ(o.domain().upper()[1], 0.2);
}

TEST(Cstr, DeterministicAnswers) {
    const CstrConfig cfg;
    const std::vector<double> z = {-0.15, 0.12};
    const CstrSolution a = solve_cstr_mpc(cfg, z);
    const CstrSolution b = solve_cstr_mpc(cfg, z);
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.best_start, b.best_start);
}

TEST(Cstr, InvalidConstantsRejected) {
    CstrConfig cfg;
    cfg.u_max = cfg.u_min;
    EXPECT_THROW(CstrMpcOracle{cfg}, ConfigError);
    cfg = CstrConfig{};
    cfg.theta = std::nan("");
    EXPECT_THROW(CstrMpcOracle{cfg}, ConfigError);
    cfg = CstrConfig{};
    cfg.horizon = 0;
    EXPECT_THROW(CstrMpcOracle{cfg}, ConfigError);
}

TEST(ProcessOracle, FeasibleAndInfeasibleReplies) {
    const std::string script =
        "while read tag x y; do case $x in 0.[0-4]*) echo I ;; *) echo \"F $x $y 0\" ;; esac; done";
    const ProcessOracle o(script, DomainTransform::UnitCube(2), 2);
    EXPECT_FALSE(o.thread_safe());
    const OracleSample a = o.Query(std::vector<double>{0.75, 0.25});
    EXPECT_TRUE(a.feasible);
    ASSERT_EQ(a.values.size(), 2u);
    EXPECT_EQ(a.values[0], 0.75);
    EXPECT_EQ(a.values[1], 0.25);
    const OracleSample b = o.Query(std::vector<double>{0.25, 0.25});
    EXPECT_FALSE(b.feasible);
    EXPECT_TRUE(b.values.empty());
}

TEST(ProcessOracle, RelaxedInfeasibleValues) {
    const ProcessOracle o("while read line; do echo 'I 1.5 0.25'; done", DomainTransform::UnitCube(1), 1);
    const OracleSample s = o.Query(std::vector<double>{0.5});
    EXPECT_FALSE(s.feasible);
    ASSERT_EQ(s.values.size(), 1u);
    EXPECT_EQ(s.values[0], 1.5);
    EXPECT_EQ(s.slack, 0.25);
}

TEST(ProcessOracle, ProtocolErrors) {
    const ProcessOracle garbled("while read line; do echo 'F 1 2 3 oops'; done", DomainTransform::UnitCube(1), 1);
    EXPECT_THROW((void)garbled.Query(std::vector<double>{0.5}), OracleError);
    const ProcessOracle wrong_count("while read line; do echo 'F 1 2 3'; done", DomainTransform::UnitCube(1), 1);
    EXPECT_THROW((void)wrong_count.Query(std::vector<double>{0.5}), OracleError);
    const ProcessOracle dead("exit 0", DomainTransform::UnitCube(1), 1);
    EXPECT_THROW((void)dead.Query(std::vector<double>{0.5}), OracleError);
}

TEST(ProcessOracle, DrivesAnApproximation) {
    const ProcessOracle o("while read tag x; do echo \"F $x 0\"; done", DomainTransform::UnitCube(1), 1);
    ApproxConfig cfg;
    cfg.epsilon = 1e-3;
    cfg.worker_count = 2;
    auto [model, rep] = approximate(o, cfg);
    const FunctionOracle ref(DomainTransform::UnitCube(1), 1,
                             [](std::span<const double> x) { return std::vector<double>{x[0]}; });
    EXPECT_EQ(validate_error_grid(model, ref, 501).violation_count, 0u);
}

}  // namespace
}  // namespace alkiax
