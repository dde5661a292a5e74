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

#include <atomic>
#include <cmath>
#include <numbers>
#include <random>

#include "alkiax/alkiax.hpp"

namespace alkiax {
namespace {

ApproxConfig BaseConfig(double eps) {
    ApproxConfig cfg;
    cfg.epsilon = eps;
    cfg.p_lo = 2;
    cfg.p_hi = 5;
    cfg.kernel = Kernel(KernelFamily::Matern32, 0.8);
    cfg.max_depth = 12;
    return cfg;
}

double MaxGridError(const Model &m, const Oracle &o, int k) {
    const ErrorGridReport r = validate_error_grid(m, o, k);
    return r.max_err.empty() ? 0.0 : *std::max_element(r.max_err.begin(), r.max_err.end());
}

TEST(Approximate, ConstantFunctionNeedsOneSubDomain) {
    const FunctionOracle c = MakeConstantOracle(2, {3.5});
    auto [model, rep] = approximate(c, BaseConfig(1e-6));
    EXPECT_EQ(rep.subdomain_count, 1u);
    EXPECT_EQ(rep.approximated_count, 1u);
    EXPECT_EQ(rep.total_samples, 81u);  // (1 + 2^3)^2
    EXPECT_LE(MaxGridError(model, c, 41), 1e-12);
}

TEST(Approximate, HugeToleranceStopsAtTheProbeGrid) {
    const FunctionOracle f = MakeSinCosOracle();
    for (int n_plo : {1, 2, 3}) {
        ApproxConfig cfg = BaseConfig(1e3);
        cfg.p_lo = n_plo;
        cfg.p_hi = n_plo + 2;
        auto [model, rep] = approximate(f, cfg);
        const std::size_t axis = (std::size_t{1} << (n_plo + 1)) + 1;
        EXPECT_EQ(rep.total_samples, axis * axis);
        EXPECT_EQ(rep.subdomain_count, 1u);
        EXPECT_EQ(model.tree().leaves()[0].p, n_plo);
    }
}

TEST(Approximate, SinCosMeetsTolerance) {
    const FunctionOracle f = MakeSinCosOracle();
    auto [model, rep] = approximate(f, BaseConfig(5e-2));
    const ErrorGridReport r = validate_error_grid(model, f, 151);
    EXPECT_EQ(r.violation_count, 0u);
    EXPECT_LE(r.max_err[0], 5e-2);
    EXPECT_EQ(r.checked, 151u * 151u);
    for (const auto &rec : rep.records) {
        if (rec.action == SubDomainStatus::Approximated) { EXPECT_LE(rec.certificate, 5e-2 * (1.0 + 1e-9)); }
    }
}

TEST(Approximate, InterpolatesEveryStoredSample) {
    const FunctionOracle f = MakeSinCosOracle();
    auto [model, rep] = approximate(f, BaseConfig(1e-1));
    double worst = 0.0;
    for (const auto &node : model.tree().nodes()) {
        if (node.status != SubDomainStatus::Approximated) { continue; }
        const PointSet g = grid_points(node, node.p);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const std::vector<double> x = {g(i, 0), g(i, 1)};
            const auto h = model(x);
            ASSERT_TRUE(h.has_value());
            worst = std::max(worst, std::abs((*h)[0] - analytic_sincos(x)));
        }
    }
    EXPECT_LE(worst, 1e-8);
}

TEST(Approximate, SampleAccounting) {
    const FunctionOracle f = MakeSinCosOracle();
    ApproxConfig cfg = BaseConfig(2e-2);
    auto [model, rep] = approximate(f, cfg);
    std::size_t sum = 0;
    const std::size_t probe = GridSize(2, cfg.p_lo + 1);
    for (const auto &rec : rep.records) {
        sum += rec.samples;
        if (rec.action == SubDomainStatus::Approximated) {
            EXPECT_EQ(rec.samples, std::max(probe, GridSize(2, rec.p)));
        } else {
            EXPECT_EQ(rec.samples, probe);
        }
    }
    EXPECT_EQ(sum, rep.total_samples);
    EXPECT_EQ(rep.oracle_calls, rep.total_samples);
    EXPECT_EQ(rep.subdomain_count, rep.records.size());
    std::size_t per_depth = 0;
    for (auto c : rep.processed_per_depth) { per_depth += c; }
    EXPECT_EQ(per_depth, rep.subdomain_count);
    EXPECT_EQ(model.Stats().leaf_count, rep.approximated_count + rep.infeasible_count);
}

TEST(Approximate, CacheSavesCallsWithoutChangingTheModel) {
    const FunctionOracle f = MakeSinCosOracle();
    ApproxConfig cfg = BaseConfig(2e-2);
    auto [plain, rep_plain] = approximate(f, cfg);
    cfg.cache = true;
    auto [cached, rep_cached] = approximate(f, cfg);
    EXPECT_LT(rep_cached.oracle_calls, rep_plain.oracle_calls);
    EXPECT_EQ(rep_cached.total_samples, rep_plain.total_samples);
    EXPECT_EQ(SerializeModel(plain), SerializeModel(cached));
}

TEST(Approximate, DeterministicAcrossWorkerCounts) {
    const FunctionOracle f = MakeSinCosOracle();
    ApproxConfig cfg = BaseConfig(2e-2);
    auto [one, r1] = approximate(f, cfg);
    cfg.worker_count = 3;
    auto [three, r3] = approximate(f, cfg);
    EXPECT_EQ(SerializeModel(one), SerializeModel(three));
    EXPECT_EQ(r1.total_samples, r3.total_samples);
}

TEST(Approximate, MultiOutputAndNonUnitDomain) {
    const DomainTransform box({-1.0, 2.0}, {3.0, 2.5});
    const FunctionOracle f(box, 2, [](std::span<const double> x) {
        return std::vector<double>{std::sin(x[0]) * x[1], std::exp(-x[0] * x[0] / 4.0) + x[1]};
    });
    auto [model, rep] = approximate(f, BaseConfig(1e-2));
    EXPECT_EQ(model.output_dim(), 2);
    const ErrorGridReport r = validate_error_grid(model, f, 101);
    EXPECT_EQ(r.violation_count, 0u);
    EXPECT_THROW(model(std::vector<double>{3.5, 2.1}), OutOfDomainError);
}

// Feasible only where x1 >= 0.6; infeasible answers still carry relaxed values.
class HalfFeasible final : public Oracle {
public:
    explicit HalfFeasible(bool relaxed) : relaxed_(relaxed) {}
    [[nodiscard]] int input_dim() const override { return 2; }
    [[nodiscard]] int output_dim() const override { return 1; }
    [[nodiscard]] DomainTransform domain() const override { return DomainTransform::UnitCube(2); }
    [[nodiscard]] OracleSample Query(std::span<const double> x) const override {
        OracleSample s;
        s.feasible = x[0] >= 0.6;
        if (s.feasible || relaxed_) { s.values = {analytic_sincos(x)}; }
        s.slack = s.feasible ? 0.0 : 0.6 - x[0];
        return s;
    }

private:
    bool relaxed_;
};

TEST(Approximate, InfeasibleRegionsBecomeInfeasibleLeaves) {
    const HalfFeasible o(true);
    auto [model, rep] = approximate(o, BaseConfig(1e-2));
    EXPECT_GT(rep.infeasible_count, 0u);
    EXPECT_EQ(model(std::vector<double>{0.1, 0.1}), std::nullopt);
    EXPECT_TRUE(model(std::vector<double>{0.9, 0.3}).has_value());
    const ErrorGridReport r = validate_error_grid(model, o, 101);
    EXPECT_EQ(r.violation_count, 0u);
    EXPECT_EQ(r.uncovered, 0u);
    EXPECT_GT(r.skipped_infeasible, 0u);
}

TEST(Approximate, MixedSubDomainWithoutRelaxedValuesIsAnOracleError) {
    const HalfFeasible o(false);
    EXPECT_THROW(approximate(o, BaseConfig(1e-2)), OracleError);
}

TEST(Approximate, MaxDepthExceededNamesTheOffenders) {
    const FunctionOracle f = MakeSinCosOracle();
    ApproxConfig cfg = BaseConfig(1e-3);
    cfg.max_depth = 1;
    try {
        (void)approximate(f, cfg);
        FAIL() << "expected MaxDepthExceededError";
    } catch (const MaxDepthExceededError &e) {
        EXPECT_FALSE(e.offenders().empty());
        EXPECT_NE(e.offenders()[0].find("depth 1"), std::string::npos);
    }
}

TEST(Approximate, OracleFailuresAreWrapped) {
    const DomainTransform unit = DomainTransform::UnitCube(1);
    const FunctionOracle throws(unit, 1, [](std::span<const double> x) -> std::vector<double> {
        if (x[0] > 0.5) { throw std::runtime_error("boom"); }
        return {0.0};
    });
    try {
        (void)approximate(throws, BaseConfig(1e-2));
        FAIL() << "expected OracleError";
    } catch (const OracleError &e) {
        ASSERT_EQ(e.point().size(), 1u);
        EXPECT_GT(e.point()[0], 0.5);
        EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
    }
    const FunctionOracle nan(unit, 1, [](std::span<const double>) { return std::vector<double>{std::nan("")}; });
    EXPECT_THROW(approximate(nan, BaseConfig(1e-2)), OracleError);
    const FunctionOracle wrong(unit, 1, [](std::span<const double>) { return std::vector<double>{1.0, 2.0}; });
    EXPECT_THROW(approximate(wrong, BaseConfig(1e-2)), OracleError);
}

TEST(Approximate, RejectsBadConfigurations) {
    const FunctionOracle f = MakeSinCosOracle();
    ApproxConfig cfg = BaseConfig(1e-2);
    cfg.p_hi = cfg.p_lo;
    EXPECT_THROW(approximate(f, cfg), ConfigError);
    cfg = BaseConfig(0.0);
    EXPECT_THROW(approximate(f, cfg), ConfigError);
    cfg = BaseConfig(1e-2);
    cfg.gamma_mode = GammaMode::UserOracle;
    EXPECT_THROW(approximate(f, cfg), ConfigError);
    cfg = BaseConfig(1e-2);
    cfg.worker_count = 0;
    EXPECT_THROW(approximate(f, cfg), ConfigError);
    cfg = BaseConfig(1e-2);
    cfg.max_depth = 50;
    EXPECT_THROW(approximate(f, cfg), ConfigError);
    EXPECT_THROW(approximate(f, DomainTransform::UnitCube(3), BaseConfig(1e-2)), ConfigError);
}

TEST(Approximate, UserOracleWithTrueBoundIsCertified) {
    PointSet centers(3, 1);
    centers << 0.2, 0.55, 0.9;
    Eigen::VectorXd coef(3);
    coef << 1.0, -0.7, 0.4;
    const Kernel k(KernelFamily::Matern32, 0.5);
    const SyntheticRkhsMember f(k, centers, coef);
    ApproxConfig cfg;
    cfg.epsilon = 1e-3;
    cfg.p_hi = 12;
    cfg.kernel = k;
    cfg.mean_shift = false;
    cfg.gamma_mode = GammaMode::UserOracle;
    cfg.gamma_oracle = [&f](std::span<const double>, double edge, std::span<const double>) {
        return std::vector<double>{f.RestrictedNormBound(edge)};
    };
    auto [model, rep] = approximate(f, cfg);
    EXPECT_TRUE(rep.records[0].extrapolation.empty());
    EXPECT_EQ(rep.records[0].gamma_bar[0], f.RestrictedNormBound(1.0));
    EXPECT_EQ(validate_error_grid(model, f, 2001).violation_count, 0u);
}

TEST(Approximate, VerboseWritesOneLinePerSubDomain) {
    const FunctionOracle f = MakeSinCosOracle();
    ApproxConfig cfg = BaseConfig(5e-2);
    cfg.verbose = true;
    testing::internal::CaptureStderr();
    auto [model, rep] = approximate(f, cfg);
    const std::string log = testing::internal::GetCapturedStderr();
    EXPECT_EQ(static_cast<std::size_t>(std::count(log.begin(), log.end(), '\n')), rep.subdomain_count);
    EXPECT_NE(log.find("action"), std::string::npos);
}

TEST(Approximate, ThreadUnsafeOracleIsCalledSerially) {
    class Counting final : public Oracle {
    public:
        [[nodiscard]] int input_dim() const override { return 2; }
        [[nodiscard]] int output_dim() const override { return 1; }
        [[nodiscard]] DomainTransform domain() const override { return DomainTransform::UnitCube(2); }
        [[nodiscard]] bool thread_safe() const override { return false; }
        [[nodiscard]] OracleSample Query(std::span<const double> x) const override {
            if (inside_.fetch_add(1) != 0) { overlap_ = true; }
            const OracleSample s{true, {analytic_sincos(x)}, 0.0};
            inside_.fetch_sub(1);
            return s;
        }
        mutable std::atomic<int> inside_{0};
        mutable std::atomic<bool> overlap_{false};
    } o;
    ApproxConfig cfg = BaseConfig(2e-2);
    cfg.worker_count = 4;
    (void)approximate(o, cfg);
    EXPECT_FALSE(o.overlap_.load());
}

TEST(LocalFunctions, ReproduceVertexValues) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Kernel k(KernelFamily::Matern52, 1.0);
    const int n = 2, p = 2, nu = 2;
    std::vector<double> values(GridSize(n, p) * nu);
    for (double &v : values) { v = u(rng); }
    const std::vector<double> w = build_local_functions(k, n, p, nu, values);
    const auto cubes = local_cubes_of(SubDomain::Root(n), p);
    const PointSet verts = CubeVertices(n, std::ldexp(1.0, -p));
    for (std::size_t c = 0; c < cubes.size(); ++c) {
        for (int j = 0; j < nu; ++j) {
            Eigen::VectorXd f(4);
            for (int v = 0; v < 4; ++v) { f[v] = values[cubes[c].vertices[static_cast<std::size_t>(v)] * nu + j]; }
            const Eigen::VectorXd ref = covariance_matrix(k, verts).fullPivLu().solve(f);
            for (int v = 0; v < 4; ++v) {
                EXPECT_NEAR(w[(c * nu + static_cast<std::size_t>(j)) * 4 + static_cast<std::size_t>(v)], ref[v], 1e-9);
            }
        }
    }
}

// Values from an independent NumPy computation.
TEST(KappaBar, PrecheckComponents) {
    const KappaBar m = precheck_kappa_bar(Kernel(KernelFamily::Matern32, 0.8), 2, 2, 5);
    EXPECT_NEAR(m.cube, 49609.081358109834, 1e-4 * 49609.08);
    EXPECT_NEAR(m.grid, 77125.39146022714, 1e-4 * 77125.39);
    EXPECT_NEAR(m.full, 113859937.25723296, 1e-3 * 1.1386e8);
    EXPECT_EQ(m.value, std::max({m.cube, m.grid, m.full}));
    const KappaBar se = precheck_kappa_bar(Kernel(KernelFamily::SquaredExponential, 1.0), 2, 1, 2);
    EXPECT_NEAR(se.cube, 1024.6667317607933, 1e-6 * 1024.67);
    EXPECT_NEAR(se.grid, 6173932965.638634, 1e-2 * 6.17e9);
    EXPECT_THROW(precheck_kappa_bar(Kernel(KernelFamily::Matern32, 1.0), 2, 3, 3), ConfigError);
}

TEST(Digest, DependsOnSettingsNotWorkers) {
    const FunctionOracle f = MakeSinCosOracle();
    ApproxConfig cfg = BaseConfig(1e-1);
    const auto a = approximate(f, cfg).first.build_digest();
    cfg.worker_count = 2;
    cfg.verbose = false;
    EXPECT_EQ(approximate(f, cfg).first.build_digest(), a);
    cfg.epsilon = 0.09;
    EXPECT_NE(approximate(f, cfg).first.build_digest(), a);
}

}  // namespace
}  // namespace alkiax
