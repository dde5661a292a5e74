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
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "alkiax/errors.hpp"
#include "alkiax/oracle.hpp"
#include "alkiax/partition.hpp"

namespace alkiax {

/// Continuous stirred tank reactor (x1 concentration-like, x2 temperature-like), explicit Euler step h.
struct CstrConfig {
    double h = 0.5;
    double theta = 20.0;
    double k = 300.0;
    double M = 5.0;
    double x_f = 0.3947;
    double x_c = 0.3816;
    double alpha = 0.117;
    /// Evaluate the first row's reaction term at exp(-M / x1) instead of exp(-M / x2).
    bool first_row_uses_x1 = false;

    double x_s2 = 0.6519;  // steady-state x2; x_s1 and u_s follow from stationarity
    double state_half_width = 0.2;
    /// Hard state box around x_s enforced through the slack penalty (defaults to the domain).
    double constraint_half_width = 0.2;
    double u_min = 0.0;
    double u_max = 2.0;

    int horizon = 10;
    double q1 = 1.0;
    double q2 = 1.0;
    double r = 0.1;
    double terminal_weight = 10.0;
    double rho = 1e4;
    double slack_threshold = 1e-8;

    int starts = 8;
    std::uint64_t seed = 20240601;
    int max_iterations = 400;
    double gradient_tolerance = 1e-8;

    void Validate() const {
        const double values[] = {h, theta, k, M, x_f, x_c, alpha, x_s2, state_half_width, constraint_half_width,
                                 u_min, u_max, q1, q2, r, terminal_weight, rho, slack_threshold, gradient_tolerance};
        for (double v : values) {
            if (!std::isfinite(v)) { throw ConfigError("cstr: all constants must be finite"); }
        }
        if (h < 0.0 || theta <= 0.0 || M <= 0.0) { throw ConfigError("cstr: need h >= 0, theta > 0, M > 0"); }
        if (!(u_max > u_min)) { throw ConfigError("cstr: need u_max > u_min"); }
        if (horizon < 1 || starts < 1 || max_iterations < 1) { throw ConfigError("cstr: horizon, starts and iterations must be positive"); }
        if (state_half_width <= 0.0 || constraint_half_width <= 0.0) { throw ConfigError("cstr: box half widths must be positive"); }
        if (rho <= 0.0 || r <= 0.0 || q1 < 0.0 || q2 < 0.0 || terminal_weight < 0.0) { throw ConfigError("cstr: bad cost weights"); }
    }
};

namespace detail {

inline double GuardedArrhenius(double M, double x) {
    if (!(x > 0.0) || M / x > 700.0) { throw DomainError("cstr: exp(-M/x) argument out of range (x = " + std::to_string(x) + ")"); }
    return std::exp(-M / x);
}

}  // namespace detail

/// x1 steady state and steady-state input for the configured x_s2.
struct CstrSteadyState {
    double x1 = 0.0;
    double x2 = 0.0;
    double u = 0.0;
};

inline CstrSteadyState cstr_steady_state(const CstrConfig &cfg) {
    CstrSteadyState s;
    s.x2 = cfg.x_s2;
    const double e2 = detail::GuardedArrhenius(cfg.M, s.x2);
    if (!cfg.first_row_uses_x1) {
        s.x1 = 1.0 / (1.0 + cfg.theta * cfg.k * e2);
    } else {
        // (1 - x1)/theta = k x1 exp(-M/x1): bisection on (0, 1).
        double lo = 1e-6;
        double hi = 1.0;
        auto res = [&](double x1) { return (1.0 - x1) / cfg.theta - cfg.k * x1 * std::exp(-cfg.M / x1); };
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (res(mid) > 0.0 ? lo : hi) = mid;
        }
        s.x1 = 0.5 * (lo + hi);
    }
    const double denom = cfg.alpha * (s.x2 - cfg.x_c);
    if (denom == 0.0) { throw ConfigError("cstr: steady state has x2 = x_c, input is undetermined"); }
    s.u = ((cfg.x_f - s.x2) / cfg.theta + cfg.k * s.x1 * e2) / denom;
    return s;
}

/// One step x+ = g(x, u) in original (unshifted) coordinates.
inline std::array<double, 2> cstr_dynamics_step(std::span<const double> x, double u, const CstrConfig &cfg) {
    const double e2 = detail::GuardedArrhenius(cfg.M, x[1]);
    const double e1 = cfg.first_row_uses_x1 ? detail::GuardedArrhenius(cfg.M, x[0]) : e2;
    return {x[0] + cfg.h * ((1.0 - x[0]) / cfg.theta - cfg.k * x[0] * e1),
            x[1] + cfg.h * ((cfg.x_f - x[1]) / cfg.theta + cfg.k * x[0] * e2 - cfg.alpha * u * (x[1] - cfg.x_c))};
}

/// Single-shooting MPC problem for one initial state.
class CstrMpcProblem {
public:
    CstrMpcProblem(const CstrConfig &cfg, std::array<double, 2> x0) : cfg_(cfg), ss_(cstr_steady_state(cfg)), x0_(x0) {}

    [[nodiscard]] int size() const { return cfg_.horizon; }
    [[nodiscard]] const CstrSteadyState &steady_state() const { return ss_; }

    /// Objective; fills `grad` (size N) when non-empty.
    double Evaluate(std::span<const double> u, std::span<double> grad) const {
        const int n = cfg_.horizon;
        std::vector<std::array<double, 2>> xs(static_cast<std::size_t>(n) + 1);
        xs[0] = x0_;
        for (int t = 0; t < n; ++t) { xs[static_cast<std::size_t>(t) + 1] = cstr_dynamics_step(xs[static_cast<std::size_t>(t)], u[static_cast<std::size_t>(t)], cfg_); }
        double cost = 0.0;
        for (int t = 0; t <= n; ++t) {
            const auto &x = xs[static_cast<std::size_t>(t)];
            const double d1 = x[0] - ss_.x1;
            const double d2 = x[1] - ss_.x2;
            const double w = t == n ? cfg_.terminal_weight : 1.0;
            cost += w * (cfg_.q1 * d1 * d1 + cfg_.q2 * d2 * d2);
            if (t < n) {
                const double du = u[static_cast<std::size_t>(t)] - ss_.u;
                cost += cfg_.r * du * du;
            }
            if (t > 0) {
                for (int i = 0; i < 2; ++i) {
                    const double v = Violation(x, i);
                    cost += cfg_.rho * v * v;
                }
            }
        }
        if (grad.empty()) { return cost; }
        // Adjoint sweep.
        std::array<double, 2> lam = StateCostGradient(xs[static_cast<std::size_t>(n)], n);
        for (int t = n - 1; t >= 0; --t) {
            const auto &x = xs[static_cast<std::size_t>(t)];
            const double ut = u[static_cast<std::size_t>(t)];
            const Jacobian jac = Linearize(x, ut);
            grad[static_cast<std::size_t>(t)] = 2.0 * cfg_.r * (ut - ss_.u) + jac.b[1] * lam[1];
            const std::array<double, 2> local = StateCostGradient(x, t);
            lam = {local[0] + jac.a[0][0] * lam[0] + jac.a[1][0] * lam[1],
                   local[1] + jac.a[0][1] * lam[0] + jac.a[1][1] * lam[1]};
        }
        return cost;
    }

    /// Sum of state-box violations along the rollout, including the initial state.
    [[nodiscard]] double Slack(std::span<const double> u) const {
        std::array<double, 2> x = x0_;
        double total = Violation(x, 0) + Violation(x, 1);
        for (int t = 0; t < cfg_.horizon; ++t) {
            x = cstr_dynamics_step(x, u[static_cast<std::size_t>(t)], cfg_);
            total += Violation(x, 0) + Violation(x, 1);
        }
        return total;
    }

private:
    struct Jacobian {
        std::array<std::array<double, 2>, 2> a;  // d g_i / d x_j
        std::array<double, 2> b;                 // d g_i / d u
    };

    [[nodiscard]] double Violation(const std::array<double, 2> &x, int i) const {
        const double center = i == 0 ? ss_.x1 : ss_.x2;
        const double dev = std::abs(x[static_cast<std::size_t>(i)] - center) - cfg_.constraint_half_width;
        return dev > 0.0 ? dev : 0.0;
    }

    [[nodiscard]] std::array<double, 2> StateCostGradient(const std::array<double, 2> &x, int t) const {
        const double w = t == cfg_.horizon ? cfg_.terminal_weight : 1.0;
        std::array<double, 2> g = {2.0 * w * cfg_.q1 * (x[0] - ss_.x1), 2.0 * w * cfg_.q2 * (x[1] - ss_.x2)};
        if (t > 0) {
            for (int i = 0; i < 2; ++i) {
                const double center = i == 0 ? ss_.x1 : ss_.x2;
                const double dev = x[static_cast<std::size_t>(i)] - center;
                const double v = Violation(x, i);
                if (v > 0.0) { g[static_cast<std::size_t>(i)] += 2.0 * cfg_.rho * v * (dev > 0.0 ? 1.0 : -1.0); }
            }
        }
        return g;
    }

    [[nodiscard]] Jacobian Linearize(const std::array<double, 2> &x, double u) const {
        const CstrConfig &c = cfg_;
        const double e2 = detail::GuardedArrhenius(c.M, x[1]);
        const double de2 = e2 * c.M / (x[1] * x[1]);
        Jacobian j{};
        if (c.first_row_uses_x1) {
            const double e1 = detail::GuardedArrhenius(c.M, x[0]);
            const double de1 = e1 * c.M / (x[0] * x[0]);
            j.a[0][0] = 1.0 + c.h * (-1.0 / c.theta - c.k * e1 - c.k * x[0] * de1);
            j.a[0][1] = 0.0;
        } else {
            j.a[0][0] = 1.0 + c.h * (-1.0 / c.theta - c.k * e2);
            j.a[0][1] = -c.h * c.k * x[0] * de2;
        }
        j.a[1][0] = c.h * c.k * e2;
        j.a[1][1] = 1.0 + c.h * (-1.0 / c.theta + c.k * x[0] * de2 - c.alpha * u);
        j.b = {0.0, -c.h * c.alpha * (x[1] - c.x_c)};
        return j;
    }

    CstrConfig cfg_;
    CstrSteadyState ss_;
    std::array<double, 2> x0_;
};

struct BoxQpResult {
    std::vector<double> x;
    double value = 0.0;
    double projected_gradient = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;  // objective after each accepted step, starting with the initial point
};

/// Projected BFGS for smooth objectives on a box: inverse-Hessian update on the free variables,
/// Armijo backtracking along the projection arc, reset whenever the active set changes.
template <typename Objective>
BoxQpResult minimize_box(const Objective &f, std::vector<double> x, double lo, double hi, int max_iterations,
                         double tolerance) {
    const std::size_t n = x.size();
    for (double &v : x) { v = std::clamp(v, lo, hi); }
    std::vector<double> g(n), g_new(n), x_new(n), d(n), s(n), y(n);
    std::vector<double> H(n * n, 0.0);
    auto reset = [&] {
        std::fill(H.begin(), H.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) { H[i * n + i] = 1.0; }
    };
    reset();
    BoxQpResult res;
    double fx = f(std::span<const double>(x), std::span<double>(g));
    res.history.push_back(fx);
    std::vector<char> active(n, 0), active_prev(n, 0);
    auto projected_norm = [&](const std::vector<double> &xv, const std::vector<double> &gv) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) { m = std::max(m, std::abs(std::clamp(xv[i] - gv[i], lo, hi) - xv[i])); }
        return m;
    };
    bool first = true;
    for (int it = 0; it < max_iterations; ++it) {
        res.iterations = it;
        res.projected_gradient = projected_norm(x, g);
        if (res.projected_gradient <= tolerance) {
            res.converged = true;
            break;
        }
        bool changed = first;
        for (std::size_t i = 0; i < n; ++i) {
            active[i] = static_cast<char>((x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0));
            changed = changed || active[i] != active_prev[i];
        }
        if (changed) { reset(); }
        active_prev = active;
        first = false;
        double slope = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            if (!active[i]) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (!active[j]) { acc -= H[i * n + j] * g[j]; }
                }
            }
            d[i] = acc;
            slope += acc * g[i];
        }
        if (!(slope < 0.0)) {
            reset();
            for (std::size_t i = 0; i < n; ++i) { d[i] = active[i] ? 0.0 : -g[i]; }
        }
        double step = 1.0;
        double f_new = fx;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            double decrease = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                x_new[i] = std::clamp(x[i] + step * d[i], lo, hi);
                decrease += g[i] * (x_new[i] - x[i]);
            }
            f_new = f(std::span<const double>(x_new), std::span<double>(g_new));
            if (f_new <= fx + 1e-4 * decrease && decrease < 0.0) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // No decrease representable in floating point: accept a stall close to the tolerance.
            res.projected_gradient = projected_norm(x, g);
            res.converged = res.projected_gradient <= 10.0 * tolerance;
            break;
        }
        double sy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
            if (!active[i]) { sy += s[i] * y[i]; }
        }
        if (sy > 1e-16) {
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T on the free block.
            const double rho = 1.0 / sy;
            std::vector<double> hy(n, 0.0);
            double yhy = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (active[i]) { continue; }
                for (std::size_t j = 0; j < n; ++j) {
                    if (!active[j]) { hy[i] += H[i * n + j] * y[j]; }
                }
                yhy += y[i] * hy[i];
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (active[i]) { continue; }
                for (std::size_t j = 0; j < n; ++j) {
                    if (active[j]) { continue; }
                    H[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x.swap(x_new);
        g.swap(g_new);
        fx = f_new;
        res.history.push_back(fx);
        res.iterations = it + 1;
    }
    res.x = std::move(x);
    res.value = fx;
    return res;
}

struct CstrSolution {
    std::vector<double> u;
    double objective = 0.0;
    double slack = 0.0;
    int best_start = 0;
    std::vector<double> history;  // of the best start
};

/// Multi-start solve; throws OracleError (carrying the shifted state) if no start converges.
inline CstrSolution solve_cstr_mpc(const CstrConfig &cfg, std::span<const double> z) {
    const CstrSteadyState ss = cstr_steady_state(cfg);
    const std::array<double, 2> x0 = {ss.x1 + z[0], ss.x2 + z[1]};
    const CstrMpcProblem problem(cfg, x0);
    const auto objective = [&](std::span<const double> u, std::span<double> g) { return problem.Evaluate(u, g); };
    std::mt19937_64 rng(cfg.seed);
    CstrSolution best;
    bool have = false;
    const std::size_t n = static_cast<std::size_t>(cfg.horizon);
    for (int s = 0; s < cfg.starts; ++s) {
        std::vector<double> u0(n);
        if (s == 0) {
            std::fill(u0.begin(), u0.end(), std::clamp(ss.u, cfg.u_min, cfg.u_max));
        } else {
            for (double &v : u0) {
                const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                v = cfg.u_min + unit * (cfg.u_max - cfg.u_min);
            }
        }
        BoxQpResult r;
        try {
            r = minimize_box(objective, std::move(u0), cfg.u_min, cfg.u_max, cfg.max_iterations, cfg.gradient_tolerance);
        } catch (const DomainError &e) {
            throw OracleError(std::string("cstr rollout failed: ") + e.what(), {z[0], z[1]});
        }
        if (!r.converged) { continue; }
        // Strict improvement keeps the earliest start on ties, so the answer is stable.
        if (!have || r.value < best.objective * (1.0 - 1e-12) - 1e-300) {
            best.u = r.x;
            best.objective = r.value;
            best.best_start = s;
            best.history = std::move(r.history);
            have = true;
        }
    }
    if (!have) { throw OracleError("cstr MPC solver did not converge from any start", {z[0], z[1]}); }
    best.slack = problem.Slack(best.u);
    return best;
}

/// MPC feedback law on the shifted box [-w, w]^2; returns u_0, infeasible when the optimal rollout needs slack.
class CstrMpcOracle final : public Oracle {
public:
    explicit CstrMpcOracle(CstrConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.Validate();
        (void)cstr_steady_state(cfg_);
    }

    [[nodiscard]] int input_dim() const override { return 2; }
    [[nodiscard]] int output_dim() const override { return 1; }
    [[nodiscard]] DomainTransform domain() const override {
        const double w = cfg_.state_half_width;
        return {{-w, -w}, {w, w}};
    }
    [[nodiscard]] std::string Describe() const override { return "cstr_mpc"; }
    [[nodiscard]] const CstrConfig &config() const { return cfg_; }

    [[nodiscard]] OracleSample Query(std::span<const double> z) const override {
        const CstrSolution sol = solve_cstr_mpc(cfg_, z);
        OracleSample s;
        s.values = {sol.u[0]};
        s.slack = sol.slack;
        s.feasible = sol.slack <= cfg_.slack_threshold;
        return s;
    }

private:
    CstrConfig cfg_;
};

inline CstrMpcOracle cstr_mpc_oracle(const CstrConfig &cfg) { return CstrMpcOracle(cfg); }

/// Plant step in shifted coordinates z = x - x_s, for closed-loop simulation.
inline std::function<std::vector<double>(std::span<const double>, std::span<const double>)> cstr_shifted_step(
    const CstrConfig &cfg) {
    const CstrSteadyState ss = cstr_steady_state(cfg);
    return [cfg, ss](std::span<const double> z, std::span<const double> u) {
        const std::array<double, 2> x = {ss.x1 + z[0], ss.x2 + z[1]};
        const std::array<double, 2> next = cstr_dynamics_step(x, u[0], cfg);
        return std::vector<double>{next[0] - ss.x1, next[1] - ss.x2};
    };
}

}  // namespace alkiax
