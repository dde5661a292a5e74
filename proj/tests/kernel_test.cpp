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

#include <cmath>
#include <random>

#include "alkiax/alkiax.hpp"

namespace alkiax {
namespace {

constexpr KernelFamily kAllFamilies[] = {KernelFamily::SquaredExponential, KernelFamily::Matern12, KernelFamily::Matern32,
                                         KernelFamily::Matern52};

// Textbook profiles, written out independently of the library.
double ReferenceProfile(KernelFamily f, double r) {
    switch (f) {
        case KernelFamily::SquaredExponential: return std::exp(-r * r);
        case KernelFamily::Matern12: return std::exp(-r);
        case KernelFamily::Matern32: return (1.0 + std::sqrt(3.0) * r) * std::exp(-std::sqrt(3.0) * r);
        case KernelFamily::Matern52:
            return (1.0 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r);
    }
    return 0.0;
}

TEST(Kernel, ProfilesMatchReferenceFormulas) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(0.0, 6.0);
    for (auto f : kAllFamilies) {
        const Kernel k(f, 0.7);
        EXPECT_DOUBLE_EQ(k.EvalRadial(0.0), 1.0);
        for (int i = 0; i < 200; ++i) {
            const double d = dist(rng);
            EXPECT_NEAR(k.EvalRadial(d), ReferenceProfile(f, d / 0.7), 1e-15);
            EXPECT_NEAR(k.Kappa(d), 1.0 - ReferenceProfile(f, d / 0.7), 1e-15);
            EXPECT_NEAR(k.ProfileSq(d * d), ReferenceProfile(f, d), 1e-15);
        }
    }
}

TEST(Kernel, ProfileIsStrictlyDecreasing) {
    for (auto f : kAllFamilies) {
        const Kernel k(f, 1.0);
        double prev = k.EvalRadial(0.0);
        for (int i = 1; i <= 400; ++i) {
            const double v = k.EvalRadial(0.01 * i);
            EXPECT_LT(v, prev);
            EXPECT_GT(v, 0.0);
            prev = v;
        }
    }
}

TEST(Kernel, KappaInverseRoundTrip) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(1e-12, 0.999);
    for (auto f : kAllFamilies) {
        for (double l : {0.1, 0.8, 3.0}) {
            const Kernel k(f, l);
            EXPECT_EQ(k.KappaInv(0.0), 0.0);
            for (int i = 0; i < 200; ++i) {
                const double y = dist(rng);
                const double d = k.KappaInv(y);
                EXPECT_LE(k.Kappa(d), y * (1.0 + 1e-12));
                EXPECT_NEAR(k.Kappa(d), y, 1e-12 * std::max(1.0, y) + 1e-15);
            }
        }
    }
}

TEST(Kernel, KappaInverseClosedForms) {
    const Kernel se(KernelFamily::SquaredExponential, 2.0);
    const Kernel m12(KernelFamily::Matern12, 2.0);
    for (double y : {1e-9, 0.1, 0.5, 0.9}) {
        EXPECT_NEAR(se.KappaInv(y), 2.0 * std::sqrt(-std::log(1.0 - y)), 1e-12);
        EXPECT_NEAR(m12.KappaInv(y), -2.0 * std::log(1.0 - y), 1e-12);
    }
}

TEST(Kernel, RejectsInvalidArguments) {
    EXPECT_THROW(Kernel(KernelFamily::Matern32, 0.0), DomainError);
    EXPECT_THROW(Kernel(KernelFamily::Matern32, -1.0), DomainError);
    EXPECT_THROW(Kernel(KernelFamily::Matern32, std::nan("")), DomainError);
    const Kernel k(KernelFamily::Matern32, 1.0);
    EXPECT_THROW((void)k.EvalRadial(-1e-3), DomainError);
    EXPECT_THROW((void)k.Kappa(-1.0), DomainError);
    EXPECT_THROW((void)k.KappaInv(1.0), DomainError);
    EXPECT_THROW((void)k.KappaInv(-0.1), DomainError);
}

TEST(Kernel, ParsesFamilies) {
    EXPECT_EQ(ParseKernelFamily("se"), KernelFamily::SquaredExponential);
    EXPECT_EQ(ParseKernelFamily("matern", 0.5), KernelFamily::Matern12);
    EXPECT_EQ(ParseKernelFamily("matern", 2.5), KernelFamily::Matern52);
    EXPECT_EQ(ParseKernelFamily("matern32"), KernelFamily::Matern32);
    EXPECT_THROW(ParseKernelFamily("matern", 1.0), ConfigError);
    EXPECT_THROW(ParseKernelFamily("cauchy"), ConfigError);
}

PointSet RandomPoints(std::mt19937_64 &rng, int count, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PointSet p(count, n);
    for (int i = 0; i < count; ++i) {
        for (int d = 0; d < n; ++d) { p(i, d) = u(rng); }
    }
    return p;
}

TEST(KernelMatrix, CovarianceEntries) {
    std::mt19937_64 rng(3);
    const Kernel k(KernelFamily::Matern52, 0.6);
    const PointSet p = RandomPoints(rng, 12, 3);
    const Eigen::MatrixXd K = covariance_matrix(k, p);
    for (int i = 0; i < 12; ++i) {
        EXPECT_DOUBLE_EQ(K(i, i), 1.0);
        for (int j = 0; j < 12; ++j) {
            EXPECT_EQ(K(i, j), K(j, i));
            EXPECT_NEAR(K(i, j), ReferenceProfile(KernelFamily::Matern52, (p.row(i) - p.row(j)).norm() / 0.6), 1e-14);
        }
    }
}

TEST(KernelMatrix, RejectsDuplicatePoints) {
    PointSet p(3, 2);
    p << 0.1, 0.2, 0.5, 0.5, 0.1, 0.2;
    EXPECT_THROW(covariance_matrix(Kernel(KernelFamily::Matern32, 1.0), p), DuplicatePointError);
}

TEST(KernelMatrix, InterpolantReproducesSamplesAndNorm) {
    std::mt19937_64 rng(5);
    const Kernel k(KernelFamily::Matern32, 0.5);
    const PointSet p = RandomPoints(rng, 20, 2);
    Eigen::VectorXd f(20);
    for (int i = 0; i < 20; ++i) { f[i] = std::sin(3.0 * p(i, 0)) + p(i, 1) * p(i, 1); }
    const InterpolantWeights w = interpolant_weights(k, p, f);
    for (int i = 0; i < 20; ++i) {
        EXPECT_NEAR(evaluate_interpolant(k, p, w.weights, p.row(i).transpose()), f[i], 1e-9);
    }
    // Independent solve of the same system with a different factorization.
    const Eigen::MatrixXd K = covariance_matrix(k, p);
    const Eigen::VectorXd alpha = K.fullPivLu().solve(f);
    EXPECT_NEAR(w.rkhs_norm, std::sqrt(f.dot(alpha)), 1e-8 * w.rkhs_norm);
}

TEST(KernelMatrix, PowerFunctionProperties) {
    std::mt19937_64 rng(9);
    for (auto f : {KernelFamily::SquaredExponential, KernelFamily::Matern32, KernelFamily::Matern52}) {
        const Kernel k(f, 0.8);
        const PointSet p = RandomPoints(rng, 9, 2);
        const Eigen::MatrixXd K = covariance_matrix(k, p);
        for (int i = 0; i < 9; ++i) { EXPECT_NEAR(power_function(k, p, p.row(i).transpose()), 0.0, 2e-6); }
        const PointSet q = RandomPoints(rng, 30, 2);
        for (int i = 0; i < 30; ++i) {
            const Eigen::VectorXd x = q.row(i).transpose();
            const double pw = power_function(k, p, x);
            EXPECT_GE(pw, 0.0);
            EXPECT_LE(pw, 1.0);
            const Eigen::VectorXd kv = covariance_vector(k, p, x);
            const double ref = std::sqrt(std::max(0.0, 1.0 - kv.dot(K.fullPivLu().solve(kv))));
            EXPECT_NEAR(pw, ref, 1e-7);
        }
    }
}

TEST(KernelMatrix, CenterPowerIdentity) {
    for (auto f : {KernelFamily::SquaredExponential, KernelFamily::Matern12, KernelFamily::Matern32, KernelFamily::Matern52}) {
        for (int n = 1; n <= 3; ++n) {
            for (double dx : {1.0, 0.5, 0.25, 0.125, 0.0625, 2.0}) {
                const Kernel k(f, 1.0);
                const PointSet v = CubeVertices(n, dx);
                const double direct = power_function(k, v, Eigen::VectorXd::Constant(n, dx / 2.0));
                EXPECT_NEAR(center_power_closed_form(k, n, dx), direct, 1e-10) << k.Name() << " n=" << n << " dx=" << dx;
            }
        }
    }
}

TEST(KernelMatrix, CubeVerticesLexicographic) {
    const PointSet v = CubeVertices(2, 0.5);
    ASSERT_EQ(v.rows(), 4);
    EXPECT_EQ(v(0, 0), 0.0);
    EXPECT_EQ(v(0, 1), 0.0);
    EXPECT_EQ(v(1, 0), 0.0);
    EXPECT_EQ(v(1, 1), 0.5);
    EXPECT_EQ(v(2, 0), 0.5);
    EXPECT_EQ(v(2, 1), 0.0);
    EXPECT_EQ(v(3, 0), 0.5);
    EXPECT_EQ(v(3, 1), 0.5);
}

// Reference condition numbers from an independent NumPy computation (np.linalg.cond / inv).
TEST(KernelMatrix, ConditionNumbersMatchReference) {
    const Kernel m32(KernelFamily::Matern32, 0.8);
    EXPECT_NEAR(condition_number_inf(covariance_matrix(m32, CubeVertices(2, 1.0 / 32))), 49609.081358109834, 1e-4 * 49609.08);
    EXPECT_NEAR(condition_number_inf(covariance_matrix(m32, UnitGrid(2, 3))), 77125.39146022714, 1e-4 * 77125.39);
    const Kernel unit(KernelFamily::Matern32, 1.0);
    EXPECT_NEAR(condition_number_2(covariance_matrix(unit, UnitGrid(2, 5))), 113859937.25723296, 1e-3 * 1.1386e8);
    EXPECT_NEAR(condition_number_2(covariance_matrix(m32, UnitGrid(2, 5))), 52581009.703954846, 1e-3 * 5.258e7);
}

TEST(Extrapolation, CurvePassesThroughBothPaddedNorms) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double lo = 10.0 * u(rng);
        const double hi = lo * (0.5 + u(rng));
        const double eps = std::pow(10.0, -1.0 - 6.0 * u(rng));
        const int p_lo = 1 + static_cast<int>(4 * u(rng));
        const RkhsExtrapolation r = extrapolate_gamma(lo, hi, eps, p_lo);
        EXPECT_NEAR(r.At(p_lo), r.gamma_hat_lo, 1e-12 * r.gamma_hat_lo);
        EXPECT_NEAR(r.At(p_lo + 1), r.gamma_hat_hi, 1e-12 * r.gamma_hat_hi);
        // Independent 2x2 solve for (log gamma_bar, tau).
        const double a1 = 1.0 / (1.0 + std::ldexp(1.0, p_lo));
        const double a2 = 1.0 / (1.0 + std::ldexp(1.0, p_lo + 1));
        const double tau = (std::log(r.gamma_hat_hi) - std::log(r.gamma_hat_lo)) / (a1 - a2);
        const double gbar = std::exp(std::log(r.gamma_hat_lo) + tau * a1);
        EXPECT_NEAR(r.gamma_bar, gbar, 1e-10 * gbar);
        EXPECT_NEAR(r.tau, tau, 1e-9 * std::max(1.0, std::abs(tau)));
        const double pad = eps / std::pow(2.0, 3.0 + std::ldexp(1.0, -p_lo));
        EXPECT_NEAR(r.gamma_hat_lo, lo + pad, 1e-14 * (lo + pad));
    }
}

TEST(Extrapolation, GrowingNormsExtrapolateAbove) {
    const RkhsExtrapolation r = extrapolate_gamma(1.0, 1.2, 1e-3, 2);
    EXPECT_GT(r.gamma_bar, r.gamma_hat_hi);
    const RkhsExtrapolation flat = extrapolate_gamma(1.0, 1.0, 1e-3, 2);
    EXPECT_NEAR(flat.gamma_bar, flat.gamma_hat_lo, 1e-15);
    const RkhsExtrapolation zero = extrapolate_gamma(0.0, 0.0, 1e-3, 2);
    EXPECT_GT(zero.gamma_bar, 0.0);
    EXPECT_THROW(extrapolate_gamma(-1.0, 1.0, 1e-3, 2), DomainError);
    EXPECT_THROW(extrapolate_gamma(1.0, 1.0, 0.0, 2), DomainError);
}

TEST(Extrapolation, EmpiricalMean) {
    const std::vector<double> v = {1, 10, 2, 20, 3, 30};
    const auto m = empirical_mean(v, 2);
    EXPECT_DOUBLE_EQ(m[0], 2.0);
    EXPECT_DOUBLE_EQ(m[1], 20.0);
    EXPECT_THROW(empirical_mean({1, 2, 3}, 2), DomainError);
}

TEST(Extrapolation, RequiredPIsSoundAndMinimal) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto f : {KernelFamily::SquaredExponential, KernelFamily::Matern32, KernelFamily::Matern52}) {
        for (int i = 0; i < 100; ++i) {
            const int n = 1 + static_cast<int>(3 * u(rng));
            const Kernel k(f, 0.3 + u(rng));
            const double gbar = 0.1 + 5.0 * u(rng);
            const double eps = std::pow(10.0, -1.0 - 3.0 * u(rng));
            const int p = required_p(k, 1.0, n, eps, gbar, 2);
            ASSERT_GE(p, 2);
            // Sound: the certified center power at spacing 2^-p meets the tolerance.
            EXPECT_LE(center_power_closed_form(k, n, std::ldexp(1.0, -p)) * gbar, eps * (1.0 + 1e-9));
            // Minimal with respect to the distance criterion it is derived from.
            if (p > 2) {
                const double half_diag = std::sqrt(static_cast<double>(n)) * std::ldexp(1.0, -(p - 1)) / 2.0;
                EXPECT_GT(k.Kappa(half_diag), 0.5 * (eps / gbar) * (eps / gbar) * (1.0 - 1e-9));
            }
        }
    }
}

TEST(Extrapolation, RequiredPDegenerateAndScaling) {
    const Kernel k(KernelFamily::Matern32, 1.0);
    EXPECT_EQ(required_p(k, 1.0, 2, 10.0, 1.0, 2), 2);
    const int p = required_p(k, 1.0, 2, 1e-4, 2.0, 0);
    EXPECT_EQ(required_p(k.Scaled(0.5), 0.5, 2, 1e-4, 2.0, 0), p);
    EXPECT_EQ(required_p(k, 0.5, 2, 1e-4, 2.0, 0), p - 1);
    EXPECT_THROW(required_p(k, 1.0, 2, 0.0, 1.0, 2), DomainError);
    EXPECT_THROW(required_p(k, 1.0, 2, 1e-3, 0.0, 2), DomainError);
}

// Interpolant norms of sin(2 pi x1) + cos(2 pi x2) on [0, 1/3]^2, Matern 3/2 with length 0.8 / 3,
// each grid shifted by its own mean, and the extrapolated limit.
TEST(Extrapolation, SubDomainNormsOfSinCos) {
    const Kernel local(KernelFamily::Matern32, 0.8);
    auto norm_at = [&](int p) {
        const PointSet g = UnitGrid(2, p);
        Eigen::VectorXd f(g.rows());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const double x[2] = {g(i, 0) / 3.0, g(i, 1) / 3.0};
            f[i] = analytic_sincos(x);
        }
        f.array() -= f.mean();
        return interpolant_weights(local, g, f).rkhs_norm;
    };
    const double n2 = norm_at(2);
    const double n3 = norm_at(3);
    EXPECT_NEAR(n2, 2.50389, 0.01 * 2.50389);
    EXPECT_NEAR(n3, 2.61453, 0.01 * 2.61453);
    const RkhsExtrapolation r = extrapolate_gamma(n2, n3, 1e-6, 2);
    EXPECT_NEAR(r.gamma_bar, 2.75974, 0.01 * 2.75974);
    EXPECT_LT(norm_at(5), r.gamma_bar);
    EXPECT_NEAR(norm_at(5), 2.72397880380792, 1e-3);
}

TEST(AssumptionCheck, CenterIsTheMaximum) {
    for (auto f : {KernelFamily::SquaredExponential, KernelFamily::Matern32, KernelFamily::Matern52}) {
        for (int n = 1; n <= 3; ++n) {
            const int res = n == 3 ? 21 : 41;
            for (const auto &c : check_assumption2(Kernel(f, 1.0), n, {1.0, 0.5, 0.25, 0.125}, res)) {
                EXPECT_TRUE(c.max_at_center) << Kernel(f, 1.0).Name() << " n=" << n << " dx=" << c.dx_over_l;
                EXPECT_GT(c.center_value, 0.0);
            }
        }
    }
}

TEST(AssumptionCheck, SquaredExponentialOneDimensionalBruteForce) {
    for (double dx : {0.05, 0.3, 1.0, 3.0}) {
        const auto c = check_assumption2(Kernel(KernelFamily::SquaredExponential, 1.0), 1, {dx}, 10001);
        EXPECT_TRUE(c[0].max_at_center);
        EXPECT_NEAR(c[0].max_location[0], dx / 2.0, dx * 1e-4);
    }
}

TEST(AssumptionCheck, VerticesHaveZeroPower) {
    const Kernel k(KernelFamily::Matern32, 1.0);
    const PointSet v = CubeVertices(2, 0.5);
    for (int i = 0; i < 4; ++i) { EXPECT_NEAR(power_function(k, v, v.row(i).transpose()), 0.0, 1e-7); }
    EXPECT_GT(center_power_closed_form(k, 2, 0.5), 0.0);
}

}  // namespace
}  // namespace alkiax
