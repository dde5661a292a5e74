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

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "alkiax/approximator.hpp"
#include "alkiax/model.hpp"
#include "alkiax/oracle.hpp"

namespace alkiax {

struct GridViolation {
    std::vector<double> point;
    int output = 0;
    double error = 0.0;
};

struct ErrorGridReport {
    std::vector<double> max_err;                // per output dimension
    std::vector<std::vector<double>> argmax;    // per output dimension
    std::vector<GridViolation> violations;      // |f - h| > epsilon, at most max_listed entries
    std::size_t violation_count = 0;            // all of them
    std::size_t checked = 0;                    // feasible points compared
    std::size_t skipped_infeasible = 0;         // oracle reported infeasible
    std::size_t uncovered = 0;                  // oracle feasible but the model has no value there
    std::vector<std::vector<double>> uncovered_points;

    [[nodiscard]] bool ok() const { return violation_count == 0; }
};

/// Dense equidistant comparison of model and oracle over the model's domain box.
/// Parallelizes over points when the oracle is thread-safe.
inline ErrorGridReport validate_error_grid(const Model &model, const Oracle &oracle, int points_per_axis,
                                           int workers = 1, std::size_t max_listed = 1000) {
    if (points_per_axis < 2) { throw ConfigError("validate_error_grid: need at least 2 points per axis"); }
    const int n = model.input_dim();
    const int nu = model.output_dim();
    if (oracle.input_dim() != n || oracle.output_dim() != nu) { throw ConfigError("validate_error_grid: oracle and model shapes differ"); }
    const auto &lo = model.transform().lower();
    const auto &hi = model.transform().upper();
    const std::size_t k = static_cast<std::size_t>(points_per_axis);
    const std::size_t total = IPow(k, n);
    const double eps = model.epsilon();

    struct Local {
        std::vector<double> max_err;
        std::vector<std::vector<double>> argmax;
        std::vector<GridViolation> violations;
        std::size_t checked = 0, skipped = 0, uncovered = 0, violations_total = 0;
        std::vector<std::vector<double>> uncovered_points;
    };
    const std::size_t chunks = std::min<std::size_t>(total, 256);
    std::vector<Local> parts(chunks);
    detail::ParallelFor(chunks, oracle.thread_safe() ? workers : 1, [&](std::size_t c) {
        Local &L = parts[c];
        L.max_err.assign(static_cast<std::size_t>(nu), 0.0);
        L.argmax.assign(static_cast<std::size_t>(nu), {});
        std::vector<double> x(static_cast<std::size_t>(n));
        std::vector<double> h(static_cast<std::size_t>(nu));
        const std::size_t begin = total * c / chunks;
        const std::size_t end = total * (c + 1) / chunks;
        for (std::size_t idx = begin; idx < end; ++idx) {
            std::size_t rest = idx;
            for (int d = n - 1; d >= 0; --d) {
                const std::size_t i = rest % k;
                rest /= k;
                const auto ud = static_cast<std::size_t>(d);
                x[ud] = i + 1 == k ? hi[ud] : lo[ud] + (hi[ud] - lo[ud]) * static_cast<double>(i) / static_cast<double>(k - 1);
            }
            const OracleSample s = oracle.Query(x);
            if (!s.feasible) {
                ++L.skipped;
                continue;
            }
            if (model.Evaluate(x, h) != EvalStatus::Ok) {
                ++L.uncovered;
                if (L.uncovered_points.size() < max_listed) { L.uncovered_points.push_back(x); }
                continue;
            }
            ++L.checked;
            for (int j = 0; j < nu; ++j) {
                const auto uj = static_cast<std::size_t>(j);
                const double err = std::abs(s.values[uj] - h[uj]);
                if (err > L.max_err[uj] || L.argmax[uj].empty()) {
                    L.max_err[uj] = err;
                    L.argmax[uj] = x;
                }
                if (err > eps) {
                    ++L.violations_total;
                    if (L.violations.size() < max_listed) { L.violations.push_back({x, j, err}); }
                }
            }
        }
    });
    ErrorGridReport out;
    out.max_err.assign(static_cast<std::size_t>(nu), 0.0);
    out.argmax.assign(static_cast<std::size_t>(nu), {});
    for (auto &L : parts) {
        for (std::size_t j = 0; j < static_cast<std::size_t>(nu); ++j) {
            if (!L.argmax[j].empty() && (out.argmax[j].empty() || L.max_err[j] > out.max_err[j])) {
                out.max_err[j] = L.max_err[j];
                out.argmax[j] = L.argmax[j];
            }
        }
        for (auto &v : L.violations) {
            if (out.violations.size() < max_listed) { out.violations.push_back(std::move(v)); }
        }
        out.violation_count += L.violations_total;
        out.checked += L.checked;
        out.skipped_infeasible += L.skipped;
        out.uncovered += L.uncovered;
        for (auto &p : L.uncovered_points) {
            if (out.uncovered_points.size() < max_listed) { out.uncovered_points.push_back(std::move(p)); }
        }
    }
    return out;
}

struct ExtrapolationAudit {
    std::size_t node = 0;
    int depth = 0;
    std::vector<double> origin;
    double edge = 1.0;
    std::vector<double> gamma_bar;
    /// Interpolant norm of f - mu_a on the sub-domain's p_check grid: a certified lower bound on the
    /// norm the extrapolation is supposed to dominate.
    std::vector<double> norm_lower_bound;
    /// Known upper bound of the restricted norm (synthetic oracles without mean shift); NaN otherwise.
    double true_restricted_norm_bound = std::numeric_limits<double>::quiet_NaN();
    bool ok = true;
};

/// Re-samples every approximated sub-domain of a build on the p_check grid and flags sub-domains
/// whose Gamma_bar falls below the resulting lower bound of the shifted RKHS norm.
inline std::vector<ExtrapolationAudit> audit_extrapolation(const Oracle &oracle, const DomainTransform &domain,
                                                           const BuildReport &report, const ApproxConfig &cfg,
                                                           int p_check = -1, const SyntheticRkhsMember *known = nullptr) {
    if (p_check < 0) { p_check = cfg.p_hi; }
    const int n = domain.dim();
    const int nu = oracle.output_dim();
    detail::SampleSource source(oracle, domain, false);
    const KernelSystem system(cfg.kernel, UnitGrid(n, p_check));
    std::vector<const SubDomainRecord *> todo;
    for (const auto &rec : report.records) {
        if (rec.action == SubDomainStatus::Approximated) { todo.push_back(&rec); }
    }
    std::vector<ExtrapolationAudit> out(todo.size());
    const std::size_t grid = GridSize(n, p_check);
    detail::ParallelFor(todo.size(), oracle.thread_safe() ? cfg.worker_count : 1, [&](std::size_t i) {
        const SubDomainRecord &rec = *todo[i];
        ExtrapolationAudit &a = out[i];
        a.node = rec.node;
        a.depth = rec.depth;
        a.origin = rec.origin;
        a.edge = rec.edge;
        a.gamma_bar = rec.gamma_bar;
        SubDomain sub;
        sub.depth = rec.depth;
        sub.index.resize(static_cast<std::size_t>(n));
        for (int d = 0; d < n; ++d) {
            sub.index[static_cast<std::size_t>(d)] =
                static_cast<std::uint64_t>(std::llround(std::ldexp(rec.origin[static_cast<std::size_t>(d)], rec.depth)));
        }
        Eigen::MatrixXd values(static_cast<Eigen::Index>(grid), nu);
        for (std::size_t g = 0; g < grid; ++g) {
            const OracleSample s = source.Query(sub, p_check, g);
            if (s.values.empty()) { throw OracleError("audit: infeasible answer without relaxed values", source.OriginalPoint(sub, p_check, g)); }
            for (int j = 0; j < nu; ++j) {
                values(static_cast<Eigen::Index>(g), j) = s.values[static_cast<std::size_t>(j)] - rec.mean[static_cast<std::size_t>(j)];
            }
        }
        for (int j = 0; j < nu; ++j) {
            const double lb = std::sqrt(system.QuadraticForm(values.col(j)));
            a.norm_lower_bound.push_back(lb);
            if (a.gamma_bar[static_cast<std::size_t>(j)] < lb) { a.ok = false; }
        }
        if (known != nullptr && !cfg.mean_shift) { a.true_restricted_norm_bound = known->RestrictedNormBound(rec.edge); }
    });
    return out;
}

struct SweepRow {
    double epsilon = 0.0;
    std::size_t samples = 0;
    std::size_t subdomains = 0;
    int max_depth = 0;
    double min_edge = 1.0;
    double wall_time = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    double slope = 0.0;      // least-squares slope of log card(X) against log(1/epsilon)
    bool monotone = true;    // card(X) nondecreasing as epsilon decreases

    void WriteCsv(std::ostream &os) const {
        os << "epsilon,samples,subdomains,max_depth,min_edge,wall_time_s\n";
        os.precision(10);
        for (const auto &r : rows) {
            os << r.epsilon << ',' << r.samples << ',' << r.subdomains << ',' << r.max_depth << ',' << r.min_edge << ','
               << r.wall_time << '\n';
        }
        os << "# slope " << slope << " monotone " << (monotone ? "yes" : "no") << '\n';
    }
};

inline double LogLogSlope(const std::vector<double> &x, const std::vector<double> &y) {
    const std::size_t m = x.size();
    if (m < 2) { return 0.0; }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(m);
    my /= static_cast<double>(m);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

/// Builds one model per epsilon (given in decreasing order) and tabulates the sample complexity.
inline SweepResult complexity_sweep(const Oracle &oracle, const DomainTransform &domain, ApproxConfig cfg,
                                    const std::vector<double> &epsilons) {
    for (std::size_t i = 1; i < epsilons.size(); ++i) {
        if (!(epsilons[i] < epsilons[i - 1])) { throw ConfigError("complexity_sweep: epsilons must be strictly decreasing"); }
    }
    SweepResult out;
    std::vector<double> inv_eps, samples;
    for (double eps : epsilons) {
        cfg.epsilon = eps;
        auto built = approximate(oracle, domain, cfg);
        const BuildReport &rep = built.second;
        SweepRow row;
        row.epsilon = eps;
        row.samples = rep.total_samples;
        row.subdomains = rep.subdomain_count;
        row.max_depth = rep.max_depth_reached;
        for (const auto &rec : rep.records) {
            if (rec.action == SubDomainStatus::Approximated) { row.min_edge = std::min(row.min_edge, rec.edge); }
        }
        row.wall_time = rep.wall_time;
        if (!out.rows.empty() && row.samples < out.rows.back().samples) { out.monotone = false; }
        out.rows.push_back(row);
        inv_eps.push_back(1.0 / eps);
        samples.push_back(static_cast<double>(row.samples));
    }
    out.slope = LogLogSlope(inv_eps, samples);
    return out;
}

enum class SimStatus : std::uint8_t { Completed = 0, LeftDomain = 1, InfeasibleRegion = 2 };

struct ClosedLoopResult {
    std::vector<std::vector<double>> states;  // x_0 .. x_T (fewer if stopped early)
    std::vector<double> inputs;               // flattened [t][output]
    SimStatus status = SimStatus::Completed;
    bool constraints_ok = true;
    /// max ||x_t - x_target||_2 over the last 10% of the steps.
    double converged_radius = 0.0;
};

using DynamicsStep = std::function<std::vector<double>(std::span<const double> x, std::span<const double> u)>;

/// Rolls x_{t+1} = step(x_t, clamp(h(x_t))) in the model's input coordinates.
inline ClosedLoopResult closed_loop_sim(const Model &model, const DynamicsStep &step, std::vector<double> x0, int steps,
                                        const std::vector<double> &u_lower, const std::vector<double> &u_upper,
                                        const std::vector<double> &x_target) {
    const auto nu = static_cast<std::size_t>(model.output_dim());
    if (u_lower.size() != nu || u_upper.size() != nu) { throw ConfigError("closed_loop_sim: input bounds have the wrong size"); }
    ClosedLoopResult r;
    const auto &lo = model.transform().lower();
    const auto &hi = model.transform().upper();
    auto inside = [&](const std::vector<double> &x) {
        for (std::size_t d = 0; d < x.size(); ++d) {
            if (!(x[d] >= lo[d] && x[d] <= hi[d])) { return false; }
        }
        return true;
    };
    std::vector<double> x = std::move(x0);
    std::vector<double> u(nu);
    r.states.push_back(x);
    for (int t = 0; t < steps; ++t) {
        if (!inside(x)) {
            r.status = SimStatus::LeftDomain;
            r.constraints_ok = false;
            break;
        }
        if (model.Evaluate(x, u) != EvalStatus::Ok) {
            r.status = SimStatus::InfeasibleRegion;
            r.constraints_ok = false;
            break;
        }
        for (std::size_t j = 0; j < nu; ++j) {
            u[j] = std::clamp(u[j], u_lower[j], u_upper[j]);
            r.inputs.push_back(u[j]);
        }
        x = step(x, u);
        r.states.push_back(x);
    }
    if (r.status == SimStatus::Completed && !inside(x)) {
        r.status = SimStatus::LeftDomain;
        r.constraints_ok = false;
    }
    const std::size_t tail = std::max<std::size_t>(1, r.states.size() / 10);
    for (std::size_t i = r.states.size() - tail; i < r.states.size(); ++i) {
        double d2 = 0.0;
        for (std::size_t d = 0; d < x_target.size(); ++d) {
            const double diff = r.states[i][d] - x_target[d];
            d2 += diff * diff;
        }
        r.converged_radius = std::max(r.converged_radius, std::sqrt(d2));
    }
    return r;
}

}  // namespace alkiax
