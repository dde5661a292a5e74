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
#include <string>
#include <string_view>

#include "alkiax/errors.hpp"

namespace alkiax {

enum class KernelFamily : unsigned {
    SquaredExponential = 0,
    Matern12 = 1,
    Matern32 = 2,
    Matern52 = 3,
};

/// Radial kernel k(x, x') = profile(||x - x'|| / length_scale) with profile(0) = 1.
///
/// Profiles (r = d / length_scale):
///   SquaredExponential  exp(-r^2)
///   Matern12            exp(-r)
///   Matern32            (1 + sqrt(3) r) exp(-sqrt(3) r)
///   Matern52            (1 + sqrt(5) r + 5 r^2 / 3) exp(-sqrt(5) r)
///
/// All four are strictly decreasing on [0, inf) and positive, so kappa = 1 - profile
/// is a bijection [0, inf) -> [0, 1).
class Kernel {
public:
    Kernel(KernelFamily family, double length_scale) : family_(family), length_scale_(length_scale) {
        if (!(length_scale > 0.0) || !std::isfinite(length_scale)) {
            throw DomainError("kernel length scale must be positive and finite");
        }
    }

    [[nodiscard]] KernelFamily family() const { return family_; }
    [[nodiscard]] double length_scale() const { return length_scale_; }

    /// Same family, length scale multiplied by `factor` (sub-domain scaling).
    [[nodiscard]] Kernel Scaled(double factor) const { return {family_, length_scale_ * factor}; }

    /// Smoothness nu of the Matern family; 0 for the squared exponential.
    [[nodiscard]] double nu() const {
        switch (family_) {
            case KernelFamily::Matern12: return 0.5;
            case KernelFamily::Matern32: return 1.5;
            case KernelFamily::Matern52: return 2.5;
            default: return 0.0;
        }
    }

    /// Profile at a normalized distance r = d / length_scale, r >= 0 (unchecked).
    [[nodiscard]] double Profile(double r) const {
        switch (family_) {
            case KernelFamily::SquaredExponential: return std::exp(-r * r);
            case KernelFamily::Matern12: return std::exp(-r);
            case KernelFamily::Matern32: {
                const double s = kSqrt3 * r;
                return (1.0 + s) * std::exp(-s);
            }
            case KernelFamily::Matern52: {
                const double s = kSqrt5 * r;
                return (1.0 + s + s * s / 3.0) * std::exp(-s);
            }
        }
        return 0.0;
    }

    /// Profile from a squared normalized distance; avoids the sqrt for the squared exponential.
    [[nodiscard]] double ProfileSq(double r2) const {
        if (family_ == KernelFamily::SquaredExponential) { return std::exp(-r2); }
        return Profile(std::sqrt(r2));
    }

    /// 1 - Profile(r), evaluated without cancellation for small r.
    [[nodiscard]] double OneMinusProfile(double r) const {
        switch (family_) {
            case KernelFamily::SquaredExponential: return -std::expm1(-r * r);
            case KernelFamily::Matern12: return -std::expm1(-r);
            case KernelFamily::Matern32: {
                const double s = kSqrt3 * r;
                return -std::expm1(-s) - s * std::exp(-s);
            }
            case KernelFamily::Matern52: {
                const double s = kSqrt5 * r;
                return -std::expm1(-s) - (s + s * s / 3.0) * std::exp(-s);
            }
        }
        return 1.0;
    }

    /// k~(d): kernel value at Euclidean distance d.
    [[nodiscard]] double EvalRadial(double d) const {
        if (!(d >= 0.0)) { throw DomainError("eval_radial: distance must be nonnegative"); }
        return Profile(d / length_scale_);
    }

    /// kappa(d) = 1 - k~(d).
    [[nodiscard]] double Kappa(double d) const {
        if (!(d >= 0.0)) { throw DomainError("kappa: distance must be nonnegative"); }
        return OneMinusProfile(d / length_scale_);
    }

    /// Inverse of kappa on [0, 1). Closed form for the exponential-type profiles; for
    /// Matern 3/2 and 5/2 the bracket is doubled until kappa(hi) >= y and then bisected.
    /// The returned d satisfies kappa(d) <= y (lower end of the final bracket).
    [[nodiscard]] double KappaInv(double y) const {
        if (!(y >= 0.0 && y < 1.0)) { throw DomainError("kappa_inv: argument must lie in [0, 1)"); }
        if (y == 0.0) { return 0.0; }
        switch (family_) {
            case KernelFamily::SquaredExponential: return length_scale_ * std::sqrt(-std::log1p(-y));
            case KernelFamily::Matern12: return -length_scale_ * std::log1p(-y);
            default: break;
        }
        double lo = 0.0;
        double hi = 1.0;
        while (OneMinusProfile(hi) < y) {
            lo = hi;
            hi *= 2.0;
        }
        for (int it = 0; it < 400; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) { break; }
            if (OneMinusProfile(mid) < y) {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo <= 1e-17 * hi) { break; }
        }
        return length_scale_ * lo;
    }

    [[nodiscard]] std::string Name() const {
        switch (family_) {
            case KernelFamily::SquaredExponential: return "se";
            case KernelFamily::Matern12: return "matern12";
            case KernelFamily::Matern32: return "matern32";
            case KernelFamily::Matern52: return "matern52";
        }
        return "unknown";
    }

    friend bool operator==(const Kernel &, const Kernel &) = default;

private:
    static constexpr double kSqrt3 = 1.7320508075688772935274463415059;
    static constexpr double kSqrt5 = 2.2360679774997896964091736687313;

    KernelFamily family_;
    double length_scale_;
};

/// Parses "se" / "matern" + nu in {0.5, 1.5, 2.5}.
inline KernelFamily ParseKernelFamily(std::string_view family, double nu = 1.5) {
    if (family == "se" || family == "squared_exponential" || family == "rbf") {
        return KernelFamily::SquaredExponential;
    }
    if (family == "matern") {
        if (nu == 0.5) { return KernelFamily::Matern12; }
        if (nu == 1.5) { return KernelFamily::Matern32; }
        if (nu == 2.5) { return KernelFamily::Matern52; }
        throw ConfigError("matern kernel supports nu in {0.5, 1.5, 2.5}");
    }
    if (family == "matern12") { return KernelFamily::Matern12; }
    if (family == "matern32") { return KernelFamily::Matern32; }
    if (family == "matern52") { return KernelFamily::Matern52; }
    throw ConfigError("unknown kernel family '" + std::string(family) + "'");
}

// Free-function spellings of the kernel primitives.
inline double eval_radial(const Kernel &kernel, double d) { return kernel.EvalRadial(d); }
inline double kappa(const Kernel &kernel, double d) { return kernel.Kappa(d); }
inline double kappa_inv(const Kernel &kernel, double y) { return kernel.KappaInv(y); }

}  // namespace alkiax
