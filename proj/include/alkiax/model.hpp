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

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "alkiax/errors.hpp"
#include "alkiax/kernel.hpp"
#include "alkiax/partition.hpp"

namespace alkiax {

enum class EvalStatus : std::uint8_t { Ok = 0, Infeasible = 1 };

struct EvalResult {
    EvalStatus status = EvalStatus::Ok;
    std::vector<double> values;  // empty unless status == Ok
    std::string error;           // set for per-element failures in batch evaluation
};

struct ModelStats {
    std::size_t leaf_count = 0;
    std::size_t approximated_leaves = 0;
    std::size_t infeasible_leaves = 0;
    std::size_t cube_count = 0;
    int max_depth = 0;
    std::size_t bytes = 0;
    /// Volume-weighted average of tree descents plus kernel evaluations per query.
    double mean_eval_ops = 0.0;
};

/// The deployable piecewise approximation h(x) = h~_{X_c}(x) + mu_a.
/// Immutable once built or loaded; every method is safe to call concurrently.
class Model {
public:
    Model() = default;

    Model(PartitionTree tree, Kernel kernel, double epsilon, int p_lo, int p_hi, DomainTransform transform,
          int output_dim)
        : tree_(std::move(tree)),
          kernel_(kernel),
          epsilon_(epsilon),
          p_lo_(p_lo),
          p_hi_(p_hi),
          transform_(std::move(transform)),
          output_dim_(output_dim) {
        if (tree_.dim() != transform_.dim()) { throw InvariantViolationError("tree and domain dimensions differ"); }
    }

    [[nodiscard]] const PartitionTree &tree() const { return tree_; }
    [[nodiscard]] const Kernel &kernel() const { return kernel_; }
    [[nodiscard]] double epsilon() const { return epsilon_; }
    [[nodiscard]] int p_lo() const { return p_lo_; }
    [[nodiscard]] int p_hi() const { return p_hi_; }
    [[nodiscard]] const DomainTransform &transform() const { return transform_; }
    [[nodiscard]] int input_dim() const { return tree_.dim(); }
    [[nodiscard]] int output_dim() const { return output_dim_; }
    [[nodiscard]] std::uint64_t build_digest() const { return build_digest_; }
    void set_build_digest(std::uint64_t digest) { build_digest_ = digest; }

    /// Allocation-free evaluation into `out` (size output_dim). Throws OutOfDomainError for
    /// points outside the box; returns Infeasible when the point falls in an infeasible leaf.
    EvalStatus Evaluate(std::span<const double> x, std::span<double> out, int *visits = nullptr) const {
        const int n = tree_.dim();
        if (static_cast<int>(x.size()) != n) { throw OutOfDomainError("evaluate: point has the wrong dimension"); }
        std::array<double, kMaxDim> unit{};
        if (!transform_.ToUnit(x, std::span<double>(unit.data(), static_cast<std::size_t>(n)))) {
            throw OutOfDomainError("evaluate: point outside the model domain");
        }
        const LocateResult loc = tree_.Locate(std::span<const double>(unit.data(), static_cast<std::size_t>(n)));
        if (visits != nullptr) { *visits = loc.visits; }
        if (loc.infeasible) { return EvalStatus::Infeasible; }

        const SubDomain &node = tree_.nodes()[loc.node];
        const LeafData &leaf = tree_.leaves()[node.leaf];
        // Kernel argument in units of the base length scale: local offsets times dx / l_a = 2^-p.
        const double scale = std::ldexp(1.0, -leaf.p) / kernel_.length_scale();
        const double scale2 = scale * scale;
        const std::size_t nv = std::size_t{1} << n;
        std::array<double, std::size_t{1} << kMaxDim> kv;
        for (std::size_t v = 0; v < nv; ++v) {
            double r2 = 0.0;
            for (int d = 0; d < n; ++d) {
                const double bit = static_cast<double>((v >> (n - 1 - d)) & 1U);
                const double diff = loc.local[static_cast<std::size_t>(d)] - bit;
                r2 += diff * diff;
            }
            kv[v] = kernel_.ProfileSq(r2 * scale2);
        }
        const std::size_t block = nv * static_cast<std::size_t>(output_dim_);
        const double *w = leaf.weights.data() + loc.cube * block;
        for (int j = 0; j < output_dim_; ++j) {
            double acc = 0.0;
            const double *wj = w + static_cast<std::size_t>(j) * nv;
            for (std::size_t v = 0; v < nv; ++v) { acc += wj[v] * kv[v]; }
            out[static_cast<std::size_t>(j)] = acc + leaf.mean[static_cast<std::size_t>(j)];
        }
        return EvalStatus::Ok;
    }

    /// Convenience form; nullopt for infeasible regions.
    [[nodiscard]] std::optional<std::vector<double>> operator()(std::span<const double> x) const {
        std::vector<double> out(static_cast<std::size_t>(output_dim_));
        if (Evaluate(x, out) == EvalStatus::Infeasible) { return std::nullopt; }
        return out;
    }

    [[nodiscard]] ModelStats Stats() const {
        ModelStats s;
        const int n = tree_.dim();
        const std::size_t nv = std::size_t{1} << n;
        s.max_depth = tree_.MaxDepth();
        s.bytes = tree_.nodes().size() * (sizeof(SubDomain) + static_cast<std::size_t>(n) * sizeof(std::uint64_t));
        double ops = 0.0;
        for (const auto &node : tree_.nodes()) {
            if (!tree_.IsLeaf(node)) { continue; }
            ++s.leaf_count;
            const double volume = std::ldexp(1.0, -n * node.depth);
            if (node.status == SubDomainStatus::Infeasible) {
                ++s.infeasible_leaves;
                ops += volume * node.depth;
                continue;
            }
            ++s.approximated_leaves;
            const auto &leaf = tree_.leaves()[node.leaf];
            s.cube_count += IPow(std::size_t{1} << leaf.p, n);
            s.bytes += (leaf.weights.size() + leaf.mean.size()) * sizeof(double);
            ops += volume * (node.depth + static_cast<double>(nv) * (1.0 + output_dim_));
        }
        s.mean_eval_ops = ops;
        return s;
    }

private:
    PartitionTree tree_;
    Kernel kernel_{KernelFamily::Matern32, 1.0};
    double epsilon_ = 0.0;
    int p_lo_ = 0;
    int p_hi_ = 0;
    DomainTransform transform_;
    int output_dim_ = 0;
    std::uint64_t build_digest_ = 0;
};

inline EvalResult evaluate(const Model &model, std::span<const double> x) {
    EvalResult r;
    r.values.resize(static_cast<std::size_t>(model.output_dim()));
    r.status = model.Evaluate(x, r.values);
    if (r.status != EvalStatus::Ok) { r.values.clear(); }
    return r;
}

/// Order-preserving elementwise evaluation; failures are recorded per element.
inline std::vector<EvalResult> evaluate_batch(const Model &model, const std::vector<std::vector<double>> &xs,
                                              int workers = 1) {
    std::vector<EvalResult> out(xs.size());
    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                out[i] = evaluate(model, xs[i]);
            } catch (const Error &e) {
                out[i].status = EvalStatus::Infeasible;
                out[i].values.clear();
                out[i].error = e.what();
            }
        }
    };
    const std::size_t w = static_cast<std::size_t>(std::max(1, workers));
    if (w == 1 || xs.size() < 2 * w) {
        run(0, xs.size());
        return out;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (xs.size() + w - 1) / w;
    for (std::size_t t = 0; t < w; ++t) {
        const std::size_t b = t * chunk;
        const std::size_t e = std::min(xs.size(), b + chunk);
        if (b < e) { pool.emplace_back(run, b, e); }
    }
    for (auto &th : pool) { th.join(); }
    return out;
}

inline ModelStats stats(const Model &model) { return model.Stats(); }

}  // namespace alkiax
