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

#include <vector>

#include "alkiax/kernel_matrix.hpp"
#include "alkiax/partition.hpp"

namespace alkiax {

struct CenterMaxCheck {
    double dx_over_l = 0.0;
    bool max_at_center = false;
    std::vector<double> max_location;
    double max_value = 0.0;
    double center_value = 0.0;
};

/// Brute-force probe of the power function of one local cube [0, dx]^n on a
/// resolution^n grid; passes when no probe exceeds the center value by more than 1e-10.
inline std::vector<CenterMaxCheck> check_assumption2(const Kernel &kernel, int n, const std::vector<double> &dx_over_l,
                                                     int probe_resolution) {
    if (n < 1 || n > kMaxDim) { throw DomainError("check_assumption2: bad dimension"); }
    if (probe_resolution < 2) { throw DomainError("check_assumption2: resolution must be >= 2"); }
    std::vector<CenterMaxCheck> out;
    const std::size_t res = static_cast<std::size_t>(probe_resolution);
    const std::size_t total = IPow(res, n);
    for (double dx : dx_over_l) {
        const PointSet vertices = CubeVertices(n, dx);
        const KernelSystem system(kernel, vertices);
        CenterMaxCheck check;
        check.dx_over_l = dx;
        const Eigen::VectorXd center = Eigen::VectorXd::Constant(n, 0.5 * dx);
        check.center_value = system.Power(covariance_vector(kernel, vertices, center));
        check.max_value = -1.0;
        Eigen::VectorXd x(n);
        for (std::size_t k = 0; k < total; ++k) {
            std::size_t rest = k;
            for (int d = n - 1; d >= 0; --d) {
                x[d] = dx * static_cast<double>(rest % res) / static_cast<double>(res - 1);
                rest /= res;
            }
            const double value = system.Power(covariance_vector(kernel, vertices, x));
            if (value > check.max_value) {
                check.max_value = value;
                check.max_location.assign(x.data(), x.data() + n);
            }
        }
        check.max_at_center = check.max_value <= check.center_value + 1e-10;
        out.push_back(std::move(check));
    }
    return out;
}

}  // namespace alkiax
