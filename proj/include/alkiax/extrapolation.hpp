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
#include <limits>
#include <vector>

#include "alkiax/errors.hpp"
#include "alkiax/kernel.hpp"
#include "alkiax/kernel_matrix.hpp"

namespace alkiax {

/// Exponential fit gamma(p) = gamma_bar * exp(-tau / (1 + 2^p)) through the two padded
/// interpolant norms of one sub-domain.
struct RkhsExtrapolation {
    double gamma_hat_lo = 0.0;  // at p_lo
    double gamma_hat_hi = 0.0;  // at p_lo + 1
    double lambda = 0.0;
    double tau = 0.0;
    double gamma_bar = 0.0;
    int p_lo = 0;

    /// The fitted curve; equals gamma_hat_lo / gamma_hat_hi at p_lo / p_lo + 1.
    [[nodiscard]] double At(int p) const {
        return gamma_bar * std::exp(-tau / (1.0 + std::ldexp(1.0, p)));
    }
};

/// lambda = 2 + 2^{-p_lo}.
inline double ExtrapolationLambda(int p_lo) { return 2.0 + std::ldexp(1.0, -p_lo); }

inline RkhsExtrapolation extrapolate_gamma(double norm_lo, double norm_hi, double epsilon, int p_lo) {
    if (!(norm_lo >= 0.0) || !(norm_hi >= 0.0)) { throw DomainError("extrapolate_gamma: norms must be nonnegative"); }
    if (!(epsilon > 0.0)) { throw DomainError("extrapolate_gamma: epsilon must be positive"); }
    RkhsExtrapolation r;
    r.p_lo = p_lo;
    r.lambda = ExtrapolationLambda(p_lo);
    const double pad = epsilon / std::pow(2.0, r.lambda + 1.0);
    r.gamma_hat_lo = norm_lo + pad;
    r.gamma_hat_hi = norm_hi + pad;
    const double log_ratio = std::log(r.gamma_hat_hi / r.gamma_hat_lo);
    r.tau = log_ratio * r.lambda * (1.0 + std::ldexp(1.0, p_lo));
    r.gamma_bar = r.gamma_hat_lo * std::exp(r.lambda * log_ratio);
    return r;
}

/// Per-output arithmetic mean of `values` laid out [point][output].
inline std::vector<double> empirical_mean(const std::vector<double> &values, int output_dim) {
    const std::size_t nu = static_cast<std::size_t>(output_dim);
    if (nu == 0 || values.size() % nu != 0 || values.empty()) { throw DomainError("empirical_mean: bad sample layout"); }
    const std::size_t count = values.size() / nu;
    std::vector<double> mean(nu, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < nu; ++j) { mean[j] += values[i * nu + j]; }
    }
    for (double &m : mean) { m /= static_cast<double>(count); }
    return mean;
}

/// Smallest p >= p_lo with P(center) * gamma_bar <= epsilon on a sub-domain of edge
/// `edge`, where `kernel` is already scaled to that sub-domain:
///   p* = ceil(log2(edge sqrt(n) / (2 kappa^{-1}(0.5 (epsilon / gamma_bar)^2)))), p* = 0 if epsilon >= gamma_bar.
inline int required_p(const Kernel &kernel, double edge, int n, double epsilon, double gamma_bar, int p_lo) {
    if (!(epsilon > 0.0)) { throw DomainError("required_p: epsilon must be positive"); }
    if (!(gamma_bar > 0.0) || !std::isfinite(gamma_bar)) { throw DomainError("required_p: gamma_bar must lie in (0, inf)"); }
    if (epsilon >= gamma_bar) { return std::max(p_lo, 0); }
    const double ratio = epsilon / gamma_bar;
    const double d = kernel.KappaInv(0.5 * ratio * ratio);
    if (!(d > 0.0)) {
        // ratio^2 below the resolution of kappa: no finite grid is fine enough.
        return std::numeric_limits<int>::max() / 2;
    }
    const double arg = edge * std::sqrt(static_cast<double>(n)) / (2.0 * d);
    const double p_star = std::ceil(std::log2(arg));
    if (p_star > 1e6) { return std::numeric_limits<int>::max() / 2; }
    return std::max(p_lo, static_cast<int>(std::max(p_star, 0.0)));
}

}  // namespace alkiax
