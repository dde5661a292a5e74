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

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "alkiax/errors.hpp"
#include "alkiax/kernel.hpp"

namespace alkiax {

/// Sample sites, one point per row.
using PointSet = Eigen::MatrixXd;

struct InterpolantWeights {
    Eigen::VectorXd weights;
    double rkhs_norm = 0.0;
};

inline void RequireDistinct(const PointSet &points) {
    const Eigen::Index count = points.rows();
    for (Eigen::Index i = 0; i < count; ++i) {
        for (Eigen::Index j = i + 1; j < count; ++j) {
            if ((points.row(i) - points.row(j)).squaredNorm() == 0.0) {
                throw DuplicatePointError("sample points " + std::to_string(i) + " and " + std::to_string(j) +
                                          " coincide; the covariance matrix would be singular");
            }
        }
    }
}

/// K_X with entry (i, j) = k~(||x_i - x_j||).
inline Eigen::MatrixXd covariance_matrix(const Kernel &kernel, const PointSet &points) {
    RequireDistinct(points);
    const Eigen::Index count = points.rows();
    const double inv_l = 1.0 / kernel.length_scale();
    Eigen::MatrixXd k(count, count);
    for (Eigen::Index j = 0; j < count; ++j) {
        k(j, j) = 1.0;
        for (Eigen::Index i = j + 1; i < count; ++i) {
            const double v = kernel.Profile((points.row(i) - points.row(j)).norm() * inv_l);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

/// k_X(x) = [k(x, x_1), ..., k(x, x_N)]^T.
inline Eigen::VectorXd covariance_vector(const Kernel &kernel, const PointSet &points, const Eigen::VectorXd &x) {
    const double inv_l = 1.0 / kernel.length_scale();
    Eigen::VectorXd v(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        v[i] = kernel.Profile((points.row(i).transpose() - x).norm() * inv_l);
    }
    return v;
}

/// Cholesky factor of a covariance matrix, reusable for any number of right-hand sides.
/// No jitter is ever added: a failed factorization is reported, not patched.
class KernelSystem {
public:
    KernelSystem() = default;

    explicit KernelSystem(const Eigen::MatrixXd &cov) : llt_(cov) {
        if (llt_.info() != Eigen::Success || !llt_.matrixL().toDenseMatrix().allFinite()) {
            throw IllConditionedError("Cholesky factorization of the covariance matrix failed (order " +
                                      std::to_string(cov.rows()) + ")");
        }
        const auto diag = llt_.matrixLLT().diagonal();
        if ((diag.array() <= 0.0).any()) {
            throw IllConditionedError("covariance matrix is numerically singular");
        }
    }

    KernelSystem(const Kernel &kernel, const PointSet &points) : KernelSystem(covariance_matrix(kernel, points)) {}

    [[nodiscard]] Eigen::Index order() const { return llt_.matrixLLT().rows(); }

    /// K^{-1} rhs; rhs may hold several columns.
    template <typename Rhs>
    [[nodiscard]] Eigen::MatrixXd Solve(const Eigen::MatrixBase<Rhs> &rhs) const {
        return llt_.solve(rhs);
    }

    /// Overwrites rhs with K^{-1} rhs without allocating.
    template <typename Rhs>
    void SolveInPlace(Eigen::MatrixBase<Rhs> &rhs) const {
        llt_.solveInPlace(rhs);
    }

    /// v^T K^{-1} v computed as ||L^{-1} v||^2, nonnegative by construction.
    [[nodiscard]] double QuadraticForm(const Eigen::VectorXd &v) const {
        return llt_.matrixL().solve(v).squaredNorm();
    }

    [[nodiscard]] InterpolantWeights Interpolate(const Eigen::VectorXd &values) const {
        if (values.size() != order()) { throw DomainError("interpolant_weights: value count does not match points"); }
        const Eigen::VectorXd half = llt_.matrixL().solve(values);
        InterpolantWeights out;
        out.weights = llt_.matrixU().solve(half);
        out.rkhs_norm = std::sqrt(half.squaredNorm());
        return out;
    }

    /// P_X(x) = sqrt(1 - k_X(x)^T K^{-1} k_X(x)) given the covariance vector.
    [[nodiscard]] double Power(const Eigen::VectorXd &cov_vector) const {
        double radicand = 1.0 - QuadraticForm(cov_vector);
        if (radicand < 0.0) {
            if (radicand < -1e-12) {
                throw IllConditionedError("power function radicand " + std::to_string(radicand) +
                                          " is negative beyond rounding");
            }
            radicand = 0.0;
        }
        return std::sqrt(radicand);
    }

private:
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

inline double power_function(const Kernel &kernel, const PointSet &points, const Eigen::VectorXd &x) {
    const KernelSystem system(kernel, points);
    return system.Power(covariance_vector(kernel, points, x));
}

inline InterpolantWeights interpolant_weights(const Kernel &kernel, const PointSet &points,
                                              const Eigen::VectorXd &values) {
    if (values.size() != points.rows()) { throw DomainError("interpolant_weights: |values| != |points|"); }
    const KernelSystem system(kernel, points);
    return system.Interpolate(values);
}

/// Evaluates h(x) = w^T k_X(x).
inline double evaluate_interpolant(const Kernel &kernel, const PointSet &points, const Eigen::VectorXd &weights,
                                   const Eigen::VectorXd &x) {
    return weights.dot(covariance_vector(kernel, points, x));
}

/// Vertices of the cube [0, edge]^n in lexicographic order (last coordinate fastest).
inline PointSet CubeVertices(int n, double edge) {
    const Eigen::Index count = Eigen::Index{1} << n;
    PointSet v(count, n);
    for (Eigen::Index idx = 0; idx < count; ++idx) {
        for (int d = 0; d < n; ++d) {
            const int bit = static_cast<int>((idx >> (n - 1 - d)) & 1);
            v(idx, d) = bit ? edge : 0.0;
        }
    }
    return v;
}

/// Power function at the center of a 2^n-vertex cube with edge `dx_over_l` via the
/// eigenvector identity: k_X(center) = k~(sqrt(n) dx / 2) 1 is an eigenvector of K_X with
/// eigenvalue beta = sum_j k~(||x_j - x'||), hence P^2 = 1 - k~(sqrt(n) dx / 2)^2 2^n / beta.
inline double center_power_closed_form(const Kernel &kernel, int n, double dx_over_l) {
    if (n < 1) { throw DomainError("center_power_closed_form: n must be >= 1"); }
    if (!(dx_over_l > 0.0)) { throw DomainError("center_power_closed_form: spacing must be positive"); }
    const double inv_l = 1.0 / kernel.length_scale();
    // Row sum of K over the vertices, taken at vertex 0: a vertex at Hamming distance m
    // lies at Euclidean distance sqrt(m) dx.
    double beta = 0.0;
    double binom = 1.0;
    for (int m = 0; m <= n; ++m) {
        beta += binom * kernel.Profile(std::sqrt(static_cast<double>(m)) * dx_over_l * inv_l);
        binom = binom * (n - m) / (m + 1);
    }
    const double kc = kernel.Profile(std::sqrt(static_cast<double>(n)) * dx_over_l * 0.5 * inv_l);
    const double radicand = 1.0 - kc * kc * std::ldexp(1.0, n) / beta;
    return std::sqrt(std::max(radicand, 0.0));
}

inline double InfNorm(const Eigen::MatrixXd &m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

/// cond_inf(M) = ||M||_inf ||M^{-1}||_inf.
inline double condition_number_inf(const Eigen::MatrixXd &m) {
    if (m.rows() != m.cols() || m.rows() == 0) { throw DomainError("condition_number_inf: square matrix required"); }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (!lu.isInvertible()) { throw SingularMatrixError("condition_number_inf: matrix is singular"); }
    return InfNorm(m) * InfNorm(lu.inverse());
}

/// Spectral condition number lambda_max / lambda_min of a symmetric matrix.
inline double condition_number_2(const Eigen::MatrixXd &m) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) { throw SingularMatrixError("condition_number_2: eigensolver failed"); }
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) { throw SingularMatrixError("condition_number_2: matrix is not positive definite"); }
    return hi / lo;
}

}  // namespace alkiax
