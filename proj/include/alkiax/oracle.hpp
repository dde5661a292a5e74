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

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "alkiax/errors.hpp"
#include "alkiax/kernel_matrix.hpp"
#include "alkiax/partition.hpp"

namespace alkiax {

/// Answer of the ground truth at one point. Infeasible answers still carry the
/// penalty-relaxed values when the oracle has them (`values` empty otherwise).
struct OracleSample {
    bool feasible = true;
    std::vector<double> values;
    double slack = 0.0;
};

/// Noise-free black-box ground truth on a box domain.
class Oracle {
public:
    virtual ~Oracle() = default;

    [[nodiscard]] virtual int input_dim() const = 0;
    [[nodiscard]] virtual int output_dim() const = 0;
    [[nodiscard]] virtual DomainTransform domain() const = 0;
    /// Whether Query may be called concurrently from several threads.
    [[nodiscard]] virtual bool thread_safe() const { return true; }
    /// Deterministic: the same point always yields the same answer.
    [[nodiscard]] virtual OracleSample Query(std::span<const double> x) const = 0;
    [[nodiscard]] virtual std::string Describe() const { return "oracle"; }
};

/// Wraps a plain function; always feasible.
class FunctionOracle final : public Oracle {
public:
    using Fn = std::function<std::vector<double>(std::span<const double>)>;

    FunctionOracle(DomainTransform domain, int output_dim, Fn fn, std::string name = "function")
        : domain_(std::move(domain)), output_dim_(output_dim), fn_(std::move(fn)), name_(std::move(name)) {}

    [[nodiscard]] int input_dim() const override { return domain_.dim(); }
    [[nodiscard]] int output_dim() const override { return output_dim_; }
    [[nodiscard]] DomainTransform domain() const override { return domain_; }
    [[nodiscard]] OracleSample Query(std::span<const double> x) const override { return {true, fn_(x), 0.0}; }
    [[nodiscard]] std::string Describe() const override { return name_; }

private:
    DomainTransform domain_;
    int output_dim_;
    Fn fn_;
    std::string name_;
};

/// f(x) = sin(2 pi x_1) + cos(2 pi x_2).
inline double analytic_sincos(std::span<const double> x) {
    return std::sin(2.0 * std::numbers::pi * x[0]) + std::cos(2.0 * std::numbers::pi * x[1]);
}

inline FunctionOracle MakeSinCosOracle() {
    return {DomainTransform::UnitCube(2), 1, [](std::span<const double> x) { return std::vector<double>{analytic_sincos(x)}; },
            "sincos"};
}

/// Constant function, mostly for degenerate-case checks.
inline FunctionOracle MakeConstantOracle(int n, std::vector<double> value) {
    const int nu = static_cast<int>(value.size());
    return {DomainTransform::UnitCube(n), nu, [value](std::span<const double>) { return value; }, "constant"};
}

/// Finite kernel expansion f(x) = sum_i c_i k(x, x_i) on the unit cube with exact RKHS norm sqrt(c^T K c).
class SyntheticRkhsMember final : public Oracle {
public:
    SyntheticRkhsMember(Kernel kernel, PointSet centers, Eigen::VectorXd coefficients)
        : kernel_(kernel), centers_(std::move(centers)), coefficients_(std::move(coefficients)) {
        if (centers_.rows() != coefficients_.size()) { throw ConfigError("synthetic oracle: one coefficient per center"); }
        if (centers_.cols() < 1 || centers_.cols() > kMaxDim) { throw ConfigError("synthetic oracle: bad dimension"); }
        const Eigen::MatrixXd k = covariance_matrix(kernel_, centers_);  // rejects duplicate centers
        norm_ = std::sqrt(std::max(0.0, coefficients_.dot(k * coefficients_)));
    }

    [[nodiscard]] int input_dim() const override { return static_cast<int>(centers_.cols()); }
    [[nodiscard]] int output_dim() const override { return 1; }
    [[nodiscard]] DomainTransform domain() const override { return DomainTransform::UnitCube(input_dim()); }
    [[nodiscard]] std::string Describe() const override { return "synthetic_rkhs(" + kernel_.Name() + ")"; }

    [[nodiscard]] double Value(std::span<const double> x) const {
        const double inv_l = 1.0 / kernel_.length_scale();
        double sum = 0.0;
        for (Eigen::Index i = 0; i < centers_.rows(); ++i) {
            double r2 = 0.0;
            for (Eigen::Index d = 0; d < centers_.cols(); ++d) {
                const double diff = (x[static_cast<std::size_t>(d)] - centers_(i, d)) * inv_l;
                r2 += diff * diff;
            }
            sum += coefficients_[i] * kernel_.ProfileSq(r2);
        }
        return sum;
    }

    [[nodiscard]] OracleSample Query(std::span<const double> x) const override { return {true, {Value(x)}, 0.0}; }

    /// ||f||_k, exact.
    [[nodiscard]] double norm() const { return norm_; }
    [[nodiscard]] const Kernel &kernel() const { return kernel_; }
    [[nodiscard]] const PointSet &centers() const { return centers_; }
    [[nodiscard]] const Eigen::VectorXd &coefficients() const { return coefficients_; }

    /// Upper bound on the norm of f restricted to a sub-domain of edge `edge`, measured with the
    /// kernel whose length scale is multiplied by `edge` (edge <= 1). Shrinking the length scale
    /// by a factor s inflates RKHS norms by at most s^{-n/2} for both the squared exponential
    /// and the Matern families, and restriction never increases the norm.
    [[nodiscard]] double RestrictedNormBound(double edge) const {
        return norm_ * std::pow(edge, -0.5 * static_cast<double>(input_dim()));
    }

private:
    Kernel kernel_;
    PointSet centers_;
    Eigen::VectorXd coefficients_;
    double norm_ = 0.0;
};

inline SyntheticRkhsMember synthetic_rkhs_member(const Kernel &kernel, PointSet centers, Eigen::VectorXd coefficients) {
    return {kernel, std::move(centers), std::move(coefficients)};
}

}  // namespace alkiax
