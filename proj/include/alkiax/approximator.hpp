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
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "alkiax/assumption_check.hpp"
#include "alkiax/errors.hpp"
#include "alkiax/extrapolation.hpp"
#include "alkiax/kernel.hpp"
#include "alkiax/kernel_matrix.hpp"
#include "alkiax/model.hpp"
#include "alkiax/oracle.hpp"
#include "alkiax/partition.hpp"

namespace alkiax {

enum class GammaMode : std::uint8_t { Extrapolate = 0, UserOracle = 1 };

/// Norm-bound oracle: (origin, edge, mu) of a sub-domain in unit-cube coordinates -> one bound per output.
using GammaCallback =
    std::function<std::vector<double>(std::span<const double> origin, double edge, std::span<const double> mean)>;

struct ApproxConfig {
    double epsilon = 1e-3;
    int p_lo = 2;
    int p_hi = 5;
    /// Base kernel on the unit cube; a sub-domain of edge l_a uses length scale length_scale * l_a.
    Kernel kernel{KernelFamily::Matern32, 1.0};
    GammaMode gamma_mode = GammaMode::Extrapolate;
    GammaCallback gamma_oracle;
    int max_depth = 20;
    int worker_count = 1;
    bool cache = false;
    bool mean_shift = true;
    bool allow_assumption2_failure = false;
    /// Keep the shifted grid values of every leaf in memory (LeafData::samples).
    bool keep_samples = false;
    bool verbose = false;

    void Validate() const {
        if (!(epsilon > 0.0) || !std::isfinite(epsilon)) { throw ConfigError("epsilon must be a positive finite number"); }
        if (p_lo < 1) { throw ConfigError("p_lo must be >= 1"); }
        if (p_hi <= p_lo) { throw ConfigError("p_hi must exceed p_lo"); }
        if (max_depth < 1) { throw ConfigError("max_depth must be >= 1"); }
        if (max_depth + p_hi > kCoordBits) {
            throw ConfigError("max_depth + p_hi must not exceed " + std::to_string(kCoordBits));
        }
        if (worker_count < 1) { throw ConfigError("worker_count must be >= 1"); }
        if (gamma_mode == GammaMode::UserOracle && !gamma_oracle) {
            throw ConfigError("gamma_mode user_oracle needs a norm-bound callback");
        }
    }

    /// Canonical text of every setting that influences the model (worker count and verbosity excluded).
    [[nodiscard]] std::string Canonical() const {
        std::ostringstream os;
        os.precision(17);
        os << "epsilon=" << epsilon << ";p_lo=" << p_lo << ";p_hi=" << p_hi << ";kernel=" << kernel.Name()
           << ";length_scale=" << kernel.length_scale() << ";gamma_mode=" << static_cast<int>(gamma_mode)
           << ";max_depth=" << max_depth << ";mean_shift=" << mean_shift;
        return os.str();
    }
};

struct KappaBar {
    double cube = 0.0;  // inf-norm cond of the 2^n local-cube matrix at spacing 2^-p_hi
    double grid = 0.0;  // inf-norm cond of the (1 + 2^{p_lo+1})^n sub-domain grid
    double full = 0.0;  // spectral cond of the (1 + 2^{p_hi})^n grid with unit length scale; 0 if skipped, inf if singular
    double value = 0.0;
};

/// Uniform bounds on the condition numbers of every matrix the build may factorize.
inline KappaBar precheck_kappa_bar(const Kernel &kernel, int n, int p_lo, int p_hi, std::size_t full_grid_limit = 2500) {
    if (p_lo < 1 || p_hi <= p_lo) { throw ConfigError("precheck_kappa_bar: need 1 <= p_lo < p_hi"); }
    KappaBar out;
    try {
        for (int p = p_lo; p <= p_hi; ++p) {
            const Eigen::MatrixXd k = covariance_matrix(kernel, CubeVertices(n, std::ldexp(1.0, -p)));
            out.cube = std::max(out.cube, condition_number_inf(k));
        }
        out.grid = condition_number_inf(covariance_matrix(kernel, UnitGrid(n, p_lo + 1)));
    } catch (const SingularMatrixError &e) {
        throw ConfigError(std::string("condition precheck failed (") + e.what() + "); choose a smaller p_hi or length scale");
    }
    // Diagnostic only: this matrix is never factored during a build.
    if (GridSize(n, p_hi) <= full_grid_limit) {
        try {
            out.full = condition_number_2(covariance_matrix(Kernel(kernel.family(), 1.0), UnitGrid(n, p_hi)));
        } catch (const SingularMatrixError &) {
            out.full = std::numeric_limits<double>::infinity();
        }
    }
    if (!std::isfinite(out.cube) || !std::isfinite(out.grid)) {
        throw ConfigError("condition precheck overflowed; choose a smaller p_hi or length scale");
    }
    out.value = std::max({out.cube, out.grid, out.full});
    return out;
}

/// Per-sub-domain trace of one build.
struct SubDomainRecord {
    std::size_t node = 0;
    int depth = 0;
    std::vector<double> origin;  // unit-cube coordinates
    double edge = 1.0;
    std::vector<double> mean;
    std::vector<double> norm_lo;
    std::vector<double> norm_hi;
    std::vector<RkhsExtrapolation> extrapolation;  // empty in UserOracle mode
    std::vector<double> gamma_bar;
    int p = -1;
    SubDomainStatus action = SubDomainStatus::Pending;
    double certificate = 0.0;  // max_j P(center) * gamma_bar_j
    std::size_t samples = 0;
};

struct BuildReport {
    std::size_t total_samples = 0;
    std::size_t oracle_calls = 0;  // differs from total_samples only when the cache is on
    std::size_t subdomain_count = 0;
    std::size_t approximated_count = 0;
    std::size_t infeasible_count = 0;
    int max_depth_reached = 0;
    std::vector<std::size_t> processed_per_depth;
    std::vector<std::size_t> approximated_per_depth;
    std::vector<std::size_t> split_per_depth;
    std::vector<std::size_t> p_histogram;  // index p
    KappaBar kappa_bar;
    double wall_time = 0.0;  // seconds
    std::vector<SubDomainRecord> records;

    [[nodiscard]] std::string Summary() const {
        std::ostringstream os;
        os << "total_samples " << total_samples << "\n"
           << "oracle_calls " << oracle_calls << "\n"
           << "subdomains " << subdomain_count << "\n"
           << "approximated " << approximated_count << "\n"
           << "infeasible " << infeasible_count << "\n"
           << "max_depth " << max_depth_reached << "\n"
           << "kappa_bar " << kappa_bar.value << " (cube " << kappa_bar.cube << ", grid " << kappa_bar.grid << ", full "
           << kappa_bar.full << ")\n"
           << "wall_time_s " << wall_time << "\n";
        os << "per_depth processed/approximated/split:";
        for (std::size_t d = 0; d < processed_per_depth.size(); ++d) {
            os << ' ' << d << ':' << processed_per_depth[d] << '/' << approximated_per_depth[d] << '/' << split_per_depth[d];
        }
        os << "\np_histogram:";
        for (std::size_t p = 0; p < p_histogram.size(); ++p) {
            if (p_histogram[p] != 0) { os << ' ' << p << ':' << p_histogram[p]; }
        }
        os << "\n";
        return os.str();
    }
};

namespace detail {

/// Runs fn(i) for i in [0, count) on up to `workers` threads; the first exception is rethrown.
inline void ParallelFor(std::size_t count, int workers, const std::function<void(std::size_t)> &fn) {
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), count);
    if (w <= 1) {
        for (std::size_t i = 0; i < count; ++i) { fn(i); }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) { return; }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) { error = std::current_exception(); }
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (std::size_t t = 0; t < w; ++t) { pool.emplace_back(body); }
    for (auto &t : pool) { t.join(); }
    if (error) { std::rethrow_exception(error); }
}

/// Positions of the p_coarse grid inside the p_fine grid of the same sub-domain.
inline std::vector<std::size_t> SubgridIndices(int n, int p_coarse, int p_fine) {
    const std::size_t coarse_axis = GridAxisCount(p_coarse);
    const std::size_t fine_axis = GridAxisCount(p_fine);
    const std::size_t stride = std::size_t{1} << (p_fine - p_coarse);
    const std::size_t total = GridSize(n, p_coarse);
    std::vector<std::size_t> out(total);
    for (std::size_t k = 0; k < total; ++k) {
        std::size_t rest = k;
        std::size_t idx = 0;
        std::size_t place = 1;
        for (int d = n - 1; d >= 0; --d) {
            idx += (rest % coarse_axis) * stride * place;
            rest /= coarse_axis;
            place *= fine_axis;
        }
        out[k] = idx;
    }
    return out;
}

/// Dyadic coordinates (in units of 2^-52) of grid point k of `sub` at exponent p.
using DyadicPoint = std::array<std::uint64_t, kMaxDim>;

inline DyadicPoint DyadicKey(const SubDomain &sub, int p, std::size_t k) {
    const int n = sub.dim();
    const std::size_t axis = GridAxisCount(p);
    const int shift = kCoordBits - (sub.depth + p);
    DyadicPoint key{};
    for (int d = n - 1; d >= 0; --d) {
        const std::uint64_t digit = k % axis;
        k /= axis;
        key[static_cast<std::size_t>(d)] = ((sub.index[static_cast<std::size_t>(d)] << p) + digit) << shift;
    }
    return key;
}

/// Oracle front end: maps grid points to the original box, validates answers, optionally memoizes.
class SampleSource {
public:
    SampleSource(const Oracle &oracle, const DomainTransform &domain, bool cache)
        : oracle_(oracle), domain_(domain), cache_(cache) {}

    /// Grid point k of `sub` at exponent p in original coordinates.
    void Point(const SubDomain &sub, int p, std::size_t k, std::span<double> x) const {
        const DyadicPoint key = DyadicKey(sub, p, k);
        const auto n = static_cast<std::size_t>(domain_.dim());
        std::array<double, kMaxDim> u{};
        for (std::size_t d = 0; d < n; ++d) { u[d] = std::ldexp(static_cast<double>(key[d]), -kCoordBits); }
        domain_.FromUnit(std::span<const double>(u.data(), n), x);
    }

    [[nodiscard]] std::vector<double> OriginalPoint(const SubDomain &sub, int p, std::size_t k) const {
        std::vector<double> x(static_cast<std::size_t>(domain_.dim()));
        Point(sub, p, k, x);
        return x;
    }

    /// One validated answer. Safe to call concurrently iff the oracle is thread-safe.
    OracleSample Query(const SubDomain &sub, int p, std::size_t k) {
        DyadicPoint key{};
        if (cache_) {
            key = DyadicKey(sub, p, k);
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = memo_.find(key);
            if (it != memo_.end()) { return it->second; }
        }
        const auto n = static_cast<std::size_t>(domain_.dim());
        std::array<double, kMaxDim> x{};
        Point(sub, p, k, std::span<double>(x.data(), n));
        const std::span<const double> xs(x.data(), n);
        OracleSample s;
        try {
            s = oracle_.Query(xs);
        } catch (const OracleError &) {
            throw;
        } catch (const std::exception &e) {
            throw OracleError(std::string("oracle query failed: ") + e.what(), {xs.begin(), xs.end()});
        }
        if (s.feasible || !s.values.empty()) {
            if (static_cast<int>(s.values.size()) != oracle_.output_dim()) {
                throw OracleError("oracle returned the wrong output dimension", {xs.begin(), xs.end()});
            }
            for (double v : s.values) {
                if (!std::isfinite(v)) { throw OracleError("oracle returned a non-finite value", {xs.begin(), xs.end()}); }
            }
        }
        calls_.fetch_add(1, std::memory_order_relaxed);
        if (cache_) {
            std::lock_guard<std::mutex> lock(mutex_);
            memo_.emplace(key, s);
        }
        return s;
    }

    [[nodiscard]] std::size_t calls() const { return calls_.load(); }

private:
    const Oracle &oracle_;
    const DomainTransform &domain_;
    bool cache_;
    std::atomic<std::size_t> calls_{0};
    std::mutex mutex_;
    std::map<DyadicPoint, OracleSample> memo_;
};

/// Cholesky factors that depend only on (n, p) in sub-domain-local coordinates.
class FactorCache {
public:
    FactorCache(Kernel kernel, int n) : kernel_(kernel), n_(n) {}

    const KernelSystem &Grid(int p) { return Get(grids_, p, [&] { return UnitGrid(n_, p); }); }
    const KernelSystem &Cube(int p) {
        return Get(cubes_, p, [&] { return CubeVertices(n_, std::ldexp(1.0, -p)); });
    }

private:
    template <typename Make>
    const KernelSystem &Get(std::map<int, KernelSystem> &store, int p, Make make) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = store.find(p);
        if (it == store.end()) { it = store.emplace(p, KernelSystem(kernel_, make())).first; }
        return it->second;
    }

    Kernel kernel_;
    int n_;
    std::mutex mutex_;
    std::map<int, KernelSystem> grids_;
    std::map<int, KernelSystem> cubes_;
};

/// RKHS norm of `values` ([point][output], column j) after subtracting its own mean (when shifting).
inline double ShiftedNorm(const KernelSystem &system, const std::vector<double> &values, int nu, int j, bool shift) {
    const std::size_t count = values.size() / static_cast<std::size_t>(nu);
    Eigen::VectorXd f(static_cast<Eigen::Index>(count));
    double mean = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        f[static_cast<Eigen::Index>(i)] = values[i * static_cast<std::size_t>(nu) + static_cast<std::size_t>(j)];
        mean += f[static_cast<Eigen::Index>(i)];
    }
    if (shift) { f.array() -= mean / static_cast<double>(count); }
    return std::sqrt(system.QuadraticForm(f));
}

inline std::vector<double> ValuesOf(const std::vector<OracleSample> &samples, const std::vector<std::size_t> &pick, int nu) {
    std::vector<double> out;
    out.reserve(pick.size() * static_cast<std::size_t>(nu));
    for (std::size_t i : pick) { out.insert(out.end(), samples[i].values.begin(), samples[i].values.end()); }
    return out;
}

inline std::vector<double> AllValues(const std::vector<OracleSample> &samples, int nu) {
    std::vector<double> out;
    out.reserve(samples.size() * static_cast<std::size_t>(nu));
    for (const auto &s : samples) { out.insert(out.end(), s.values.begin(), s.values.end()); }
    return out;
}

}  // namespace detail

/// Local interpolants of every cube of a sub-domain at exponent p. `shifted` holds the grid
/// values minus mu_a laid out [grid point][output]; the returned weights are [cube][output][vertex].
/// `cube_system` must factorize the 2^n-vertex cube at spacing 2^-p (identical for every cube).
inline std::vector<double> build_local_functions(int n, int p, int output_dim, const std::vector<double> &shifted,
                                                 const KernelSystem &cube_system) {
    const std::size_t nu = static_cast<std::size_t>(output_dim);
    if (shifted.size() != GridSize(n, p) * nu) { throw DomainError("build_local_functions: sample count does not match the grid"); }
    const std::size_t nv = std::size_t{1} << n;
    const std::size_t per_axis = std::size_t{1} << p;
    const std::size_t count = IPow(per_axis, n);
    std::vector<double> weights(count * nu * nv);
    std::vector<std::size_t> digit(static_cast<std::size_t>(n));
    Eigen::MatrixXd rhs(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nu));
    for (std::size_t c = 0; c < count; ++c) {
        std::size_t rest = c;
        for (int d = n - 1; d >= 0; --d) {
            digit[static_cast<std::size_t>(d)] = rest % per_axis;
            rest /= per_axis;
        }
        for (std::size_t v = 0; v < nv; ++v) {
            const std::size_t g = CubeVertexGridIndex(digit, v, p);
            for (std::size_t j = 0; j < nu; ++j) {
                rhs(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j)) = shifted[g * nu + j];
            }
        }
        cube_system.SolveInPlace(rhs);
        double *dst = weights.data() + c * nu * nv;
        for (std::size_t j = 0; j < nu; ++j) {
            for (std::size_t v = 0; v < nv; ++v) {
                dst[j * nv + v] = rhs(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j));
            }
        }
    }
    return weights;
}

/// Convenience overload that factorizes the cube matrix itself.
inline std::vector<double> build_local_functions(const Kernel &kernel, int n, int p, int output_dim,
                                                 const std::vector<double> &shifted) {
    const KernelSystem system(kernel, CubeVertices(n, std::ldexp(1.0, -p)));
    return build_local_functions(n, p, output_dim, shifted, system);
}

/// Probe resolution used by the build-time Assumption 2 check.
inline int Assumption2Resolution(int n) {
    if (n <= 2) { return 101; }
    if (n == 3) { return 41; }
    return 7;
}

/// Runs the adaptive build. `domain` maps the unit cube to the oracle's input box.
inline std::pair<Model, BuildReport> approximate(const Oracle &oracle, const DomainTransform &domain,
                                                 const ApproxConfig &cfg) {
    cfg.Validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int n = domain.dim();
    const int nu = oracle.output_dim();
    if (oracle.input_dim() != n) { throw ConfigError("oracle input dimension does not match the domain"); }
    if (nu < 1) { throw ConfigError("oracle must have at least one output"); }
    const std::size_t unu = static_cast<std::size_t>(nu);

    BuildReport report;
    report.kappa_bar = precheck_kappa_bar(cfg.kernel, n, cfg.p_lo, cfg.p_hi);

    if (!cfg.allow_assumption2_failure) {
        std::vector<double> spacings;
        for (int p = cfg.p_lo; p <= cfg.p_hi; ++p) { spacings.push_back(std::ldexp(1.0, -p) / cfg.kernel.length_scale()); }
        const Kernel unit(cfg.kernel.family(), 1.0);
        for (const auto &check : check_assumption2(unit, n, spacings, Assumption2Resolution(n))) {
            if (!check.max_at_center) {
                throw ConfigError("power-function maximum is not at the cube center for " + cfg.kernel.Name() +
                                  " at spacing/length " + std::to_string(check.dx_over_l) +
                                  "; set allow_assumption2_failure to override");
            }
        }
    }

    PartitionTree tree(n);
    detail::SampleSource source(oracle, domain, cfg.cache);
    const int query_workers = oracle.thread_safe() ? cfg.worker_count : 1;
    detail::FactorCache factors(cfg.kernel, n);
    const int p_probe = cfg.p_lo + 1;
    const std::size_t probe_size = GridSize(n, p_probe);
    const std::vector<std::size_t> lo_in_probe = detail::SubgridIndices(n, cfg.p_lo, p_probe);
    // Every cube factor that may be used, so the worker threads only read the cache.
    for (int p = cfg.p_lo; p <= cfg.p_hi; ++p) { (void)factors.Cube(p); }
    (void)factors.Grid(cfg.p_lo);
    (void)factors.Grid(p_probe);

    std::vector<std::size_t> level{0};
    std::vector<std::string> offenders;
    while (!level.empty()) {
        const int depth = tree.node(level.front()).depth;
        const std::size_t count = level.size();
        if (report.processed_per_depth.size() <= static_cast<std::size_t>(depth)) {
            report.processed_per_depth.resize(static_cast<std::size_t>(depth) + 1, 0);
            report.approximated_per_depth.resize(static_cast<std::size_t>(depth) + 1, 0);
            report.split_per_depth.resize(static_cast<std::size_t>(depth) + 1, 0);
        }
        report.processed_per_depth[static_cast<std::size_t>(depth)] += count;
        report.max_depth_reached = std::max(report.max_depth_reached, depth);

        // Probe grids of every sub-domain of this level.
        std::vector<OracleSample> probe(count * probe_size);
        detail::ParallelFor(probe.size(), query_workers, [&](std::size_t i) {
            probe[i] = source.Query(tree.node(level[i / probe_size]), p_probe, i % probe_size);
        });

        std::vector<SubDomainRecord> records(count);
        detail::ParallelFor(count, cfg.worker_count, [&](std::size_t s) {
            const SubDomain &sub = tree.node(level[s]);
            SubDomainRecord &rec = records[s];
            rec.node = sub.id;
            rec.depth = sub.depth;
            rec.origin = sub.origin();
            rec.edge = sub.edge();
            rec.samples = probe_size;
            const auto first = probe.begin() + static_cast<std::ptrdiff_t>(s * probe_size);
            const std::vector<OracleSample> samples(first, first + static_cast<std::ptrdiff_t>(probe_size));
            const bool any_feasible =
                std::any_of(samples.begin(), samples.end(), [](const OracleSample &x) { return x.feasible; });
            if (!any_feasible) {
                rec.action = SubDomainStatus::Infeasible;
                return;
            }
            for (std::size_t k = 0; k < probe_size; ++k) {
                if (samples[k].values.empty()) {
                    throw OracleError("infeasible answer without relaxed values in a partly feasible sub-domain",
                                      source.OriginalPoint(sub, p_probe, k));
                }
            }
            const std::vector<double> lo_values = detail::ValuesOf(samples, lo_in_probe, nu);
            const std::vector<double> hi_values = detail::AllValues(samples, nu);
            rec.mean = cfg.mean_shift ? empirical_mean(lo_values, nu) : std::vector<double>(unu, 0.0);
            rec.norm_lo.resize(unu);
            rec.norm_hi.resize(unu);
            for (int j = 0; j < nu; ++j) {
                rec.norm_lo[static_cast<std::size_t>(j)] =
                    detail::ShiftedNorm(factors.Grid(cfg.p_lo), lo_values, nu, j, cfg.mean_shift);
                rec.norm_hi[static_cast<std::size_t>(j)] =
                    detail::ShiftedNorm(factors.Grid(p_probe), hi_values, nu, j, cfg.mean_shift);
            }
            if (cfg.gamma_mode == GammaMode::Extrapolate) {
                for (std::size_t j = 0; j < unu; ++j) {
                    rec.extrapolation.push_back(extrapolate_gamma(rec.norm_lo[j], rec.norm_hi[j], cfg.epsilon, cfg.p_lo));
                    rec.gamma_bar.push_back(rec.extrapolation.back().gamma_bar);
                }
            } else {
                rec.gamma_bar = cfg.gamma_oracle(rec.origin, rec.edge, rec.mean);
                if (rec.gamma_bar.size() != unu) { throw ConfigError("norm-bound callback returned the wrong number of bounds"); }
                for (double &g : rec.gamma_bar) {
                    if (!(g >= 0.0) || !std::isfinite(g)) { throw ConfigError("norm-bound callback returned an invalid bound"); }
                    g = std::max(g, std::numeric_limits<double>::min());
                }
            }
            int p = cfg.p_lo;
            for (double g : rec.gamma_bar) {
                p = std::max(p, required_p(cfg.kernel, 1.0, n, cfg.epsilon, g, cfg.p_lo));
            }
            rec.p = p;
            rec.action = p <= cfg.p_hi ? SubDomainStatus::Approximated : SubDomainStatus::Split;
        });

        // Leaves: the remaining samples of each sub-domain are streamed straight into its local functions.
        std::vector<LeafData> leaves(count);
        const bool leaf_parallel = oracle.thread_safe();
        detail::ParallelFor(count, leaf_parallel ? cfg.worker_count : 1, [&](std::size_t s) {
            SubDomainRecord &rec = records[s];
            if (rec.action != SubDomainStatus::Approximated) { return; }
            const SubDomain &sub = tree.node(level[s]);
            const std::size_t grid = GridSize(n, rec.p);
            std::vector<double> values(grid * unu);
            auto put = [&](std::size_t g, const OracleSample &sample) {
                if (sample.values.empty()) {
                    throw OracleError("infeasible answer without relaxed values in a partly feasible sub-domain",
                                      source.OriginalPoint(sub, rec.p, g));
                }
                for (std::size_t j = 0; j < unu; ++j) { values[g * unu + j] = sample.values[j] - rec.mean[j]; }
            };
            const OracleSample *probe_block = probe.data() + s * probe_size;
            if (rec.p == cfg.p_lo) {
                for (std::size_t k = 0; k < lo_in_probe.size(); ++k) { put(k, probe_block[lo_in_probe[k]]); }
            } else {
                const std::vector<std::size_t> reuse = detail::SubgridIndices(n, p_probe, rec.p);
                std::vector<char> have(grid, 0);
                for (std::size_t k = 0; k < probe_size; ++k) {
                    put(reuse[k], probe_block[k]);
                    have[reuse[k]] = 1;
                }
                for (std::size_t g = 0; g < grid; ++g) {
                    if (have[g] == 0) {
                        put(g, source.Query(sub, rec.p, g));
                        ++rec.samples;
                    }
                }
            }
            const double center = center_power_closed_form(cfg.kernel, n, std::ldexp(1.0, -rec.p));
            for (double g : rec.gamma_bar) { rec.certificate = std::max(rec.certificate, center * g); }
            if (rec.certificate > cfg.epsilon * (1.0 + 1e-9)) {
                throw InvariantViolationError("certificate P(center) * gamma_bar = " + std::to_string(rec.certificate) +
                                              " exceeds epsilon on sub-domain " + std::to_string(sub.id));
            }
            LeafData leaf;
            leaf.p = rec.p;
            leaf.mean = rec.mean;
            leaf.weights = build_local_functions(n, rec.p, nu, values, factors.Cube(rec.p));
            if (cfg.keep_samples) { leaf.samples = std::move(values); }
            leaves[s] = std::move(leaf);
        });

        // Single-writer tree update in level order.
        std::vector<std::size_t> next;
        for (std::size_t s = 0; s < count; ++s) {
            SubDomainRecord &rec = records[s];
            const std::size_t id = level[s];
            report.total_samples += rec.samples;
            switch (rec.action) {
                case SubDomainStatus::Infeasible:
                    tree.MarkInfeasible(id);
                    ++report.infeasible_count;
                    break;
                case SubDomainStatus::Approximated:
                    tree.AttachLeaf(id, std::move(leaves[s]));
                    ++report.approximated_count;
                    ++report.approximated_per_depth[static_cast<std::size_t>(depth)];
                    if (report.p_histogram.size() <= static_cast<std::size_t>(rec.p)) {
                        report.p_histogram.resize(static_cast<std::size_t>(rec.p) + 1, 0);
                    }
                    ++report.p_histogram[static_cast<std::size_t>(rec.p)];
                    break;
                case SubDomainStatus::Split: {
                    ++report.split_per_depth[static_cast<std::size_t>(depth)];
                    if (depth + 1 > cfg.max_depth) {
                        std::ostringstream os;
                        os.precision(17);
                        os << "node " << id << " depth " << depth << " origin (";
                        for (std::size_t d = 0; d < rec.origin.size(); ++d) { os << (d ? ", " : "") << rec.origin[d]; }
                        os << ") edge " << rec.edge << " needs p " << rec.p;
                        offenders.push_back(os.str());
                        break;
                    }
                    const std::size_t first = tree.SplitNode(id);
                    for (std::size_t c = 0; c < (std::size_t{1} << n); ++c) { next.push_back(first + c); }
                    break;
                }
                default:
                    break;
            }
            if (cfg.verbose) {
                std::ostringstream os;
                os.precision(6);
                os << "[alkiax] node " << id << " depth " << depth << " gamma_bar";
                for (double g : rec.gamma_bar) { os << ' ' << g; }
                os << " p " << rec.p << " action " << ToString(rec.action) << '\n';
                std::cerr << os.str();
            }
            report.records.push_back(std::move(rec));
        }
        if (!offenders.empty()) {
            throw MaxDepthExceededError("maximum depth " + std::to_string(cfg.max_depth) + " exceeded by " +
                                            std::to_string(offenders.size()) + " sub-domain(s)",
                                        offenders);
        }
        level = std::move(next);
    }

    report.subdomain_count = report.records.size();
    report.oracle_calls = source.calls();
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Model model(std::move(tree), cfg.kernel, cfg.epsilon, cfg.p_lo, cfg.p_hi, domain, nu);
    std::uint64_t digest = 1469598103934665603ULL;
    for (unsigned char c : cfg.Canonical() + oracle.Describe()) {
        digest ^= c;
        digest *= 1099511628211ULL;
    }
    model.set_build_digest(digest);
    return {std::move(model), std::move(report)};
}

inline std::pair<Model, BuildReport> approximate(const Oracle &oracle, const ApproxConfig &cfg) {
    return approximate(oracle, oracle.domain(), cfg);
}

}  // namespace alkiax
