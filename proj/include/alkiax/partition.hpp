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
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "alkiax/errors.hpp"
#include "alkiax/kernel_matrix.hpp"

namespace alkiax {

/// Largest supported input dimension; fixes the size of the stack buffers on the lookup path.
inline constexpr int kMaxDim = 8;
/// Coordinates are resolved to this many binary digits during point location; depth + p must not exceed it.
inline constexpr int kCoordBits = 52;

/// Affine map of the box [lower, upper] onto the unit cube.
class DomainTransform {
public:
    DomainTransform() = default;

    DomainTransform(std::vector<double> lower, std::vector<double> upper)
        : lower_(std::move(lower)), upper_(std::move(upper)) {
        if (lower_.size() != upper_.size() || lower_.empty()) {
            throw ConfigError("domain bounds must be nonempty and of equal dimension");
        }
        if (static_cast<int>(lower_.size()) > kMaxDim) {
            throw ConfigError("input dimension exceeds " + std::to_string(kMaxDim));
        }
        for (std::size_t i = 0; i < lower_.size(); ++i) {
            if (!(upper_[i] > lower_[i]) || !std::isfinite(lower_[i]) || !std::isfinite(upper_[i])) {
                throw ConfigError("domain requires finite upper > lower in every coordinate");
            }
        }
    }

    static DomainTransform UnitCube(int n) {
        return {std::vector<double>(static_cast<std::size_t>(n), 0.0), std::vector<double>(static_cast<std::size_t>(n), 1.0)};
    }

    [[nodiscard]] int dim() const { return static_cast<int>(lower_.size()); }
    [[nodiscard]] const std::vector<double> &lower() const { return lower_; }
    [[nodiscard]] const std::vector<double> &upper() const { return upper_; }

    /// Writes the unit-cube coordinates of x into `out`. Returns false if x lies outside the box.
    bool ToUnit(std::span<const double> x, std::span<double> out) const {
        bool inside = true;
        for (std::size_t i = 0; i < lower_.size(); ++i) {
            if (!(x[i] >= lower_[i] && x[i] <= upper_[i])) { inside = false; }
            out[i] = (x[i] - lower_[i]) / (upper_[i] - lower_[i]);
        }
        return inside;
    }

    void FromUnit(std::span<const double> u, std::span<double> out) const {
        for (std::size_t i = 0; i < lower_.size(); ++i) {
            out[i] = u[i] == 1.0 ? upper_[i] : lower_[i] + u[i] * (upper_[i] - lower_[i]);
        }
    }

    [[nodiscard]] std::vector<double> FromUnit(std::span<const double> u) const {
        std::vector<double> out(lower_.size());
        FromUnit(u, out);
        return out;
    }

    friend bool operator==(const DomainTransform &, const DomainTransform &) = default;

private:
    std::vector<double> lower_;
    std::vector<double> upper_;
};

enum class SubDomainStatus : std::uint8_t { Pending = 0, Approximated = 1, Infeasible = 2, Split = 3 };

inline const char *ToString(SubDomainStatus s) {
    switch (s) {
        case SubDomainStatus::Pending: return "pending";
        case SubDomainStatus::Approximated: return "approximated";
        case SubDomainStatus::Infeasible: return "infeasible";
        case SubDomainStatus::Split: return "split";
    }
    return "?";
}

inline constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

/// One dyadic cube of the adaptive partition. Geometry is held as (depth, integer index) so
/// origin = index * 2^-depth and edge = 2^-depth are exact in floating point.
struct SubDomain {
    std::size_t id = 0;
    int depth = 0;
    std::vector<std::uint64_t> index;
    SubDomainStatus status = SubDomainStatus::Pending;
    int p = -1;
    std::vector<double> mean;
    std::size_t first_child = kNoNode;
    std::size_t leaf = kNoNode;

    [[nodiscard]] int dim() const { return static_cast<int>(index.size()); }
    [[nodiscard]] double edge() const { return std::ldexp(1.0, -depth); }

    [[nodiscard]] std::vector<double> origin() const {
        std::vector<double> o(index.size());
        for (std::size_t i = 0; i < index.size(); ++i) { o[i] = std::ldexp(static_cast<double>(index[i]), -depth); }
        return o;
    }

    static SubDomain Root(int n) {
        SubDomain root;
        root.index.assign(static_cast<std::size_t>(n), 0);
        return root;
    }
};

/// Number of grid points per axis and in total for exponent p.
inline std::size_t GridAxisCount(int p) { return (std::size_t{1} << p) + 1; }

inline std::size_t IPow(std::size_t base, int exp) {
    std::size_t r = 1;
    for (int i = 0; i < exp; ++i) { r *= base; }
    return r;
}

inline std::size_t GridSize(int n, int p) { return IPow(GridAxisCount(p), n); }

/// The (1 + 2^p)^n equidistant samples of the closed sub-domain, lexicographic with the
/// first coordinate most significant.
inline PointSet grid_points(const SubDomain &sub, int p) {
    if (p < 0) { throw DomainError("grid_points: p must be >= 0"); }
    const int n = sub.dim();
    const std::size_t axis = GridAxisCount(p);
    const std::size_t total = GridSize(n, p);
    PointSet pts(static_cast<Eigen::Index>(total), n);
    std::vector<std::size_t> digit(static_cast<std::size_t>(n), 0);
    for (std::size_t k = 0; k < total; ++k) {
        std::size_t rest = k;
        for (int d = n - 1; d >= 0; --d) {
            digit[static_cast<std::size_t>(d)] = rest % axis;
            rest /= axis;
        }
        for (int d = 0; d < n; ++d) {
            const std::uint64_t fine = (sub.index[static_cast<std::size_t>(d)] << p) + digit[static_cast<std::size_t>(d)];
            pts(static_cast<Eigen::Index>(k), d) = std::ldexp(static_cast<double>(fine), -(sub.depth + p));
        }
    }
    return pts;
}

/// Same grid expressed in sub-domain-local coordinates [0, 1]^n.
inline PointSet UnitGrid(int n, int p) { return grid_points(SubDomain::Root(n), p); }

struct LocalCubeCells {
    std::vector<double> origin;
    std::vector<std::size_t> vertices;  // indices into grid_points(sub, p), cube-vertex lexicographic order
};

/// Grid index of the vertex `vertex_bits` (lexicographic bit pattern) of cube `cube_digits`.
inline std::size_t CubeVertexGridIndex(std::span<const std::size_t> cube_digits, std::size_t vertex_bits, int p) {
    const int n = static_cast<int>(cube_digits.size());
    const std::size_t axis = GridAxisCount(p);
    std::size_t idx = 0;
    for (int d = 0; d < n; ++d) {
        const std::size_t bit = (vertex_bits >> (n - 1 - d)) & 1U;
        idx = idx * axis + cube_digits[static_cast<std::size_t>(d)] + bit;
    }
    return idx;
}

/// The (2^p)^n local cubes of a sub-domain in lexicographic order.
inline std::vector<LocalCubeCells> local_cubes_of(const SubDomain &sub, int p) {
    if (p < 0) { throw DomainError("local_cubes_of: p must be >= 0"); }
    const int n = sub.dim();
    const std::size_t per_axis = std::size_t{1} << p;
    const std::size_t count = IPow(per_axis, n);
    const std::size_t nv = std::size_t{1} << n;
    std::vector<LocalCubeCells> cubes(count);
    std::vector<std::size_t> digit(static_cast<std::size_t>(n));
    for (std::size_t c = 0; c < count; ++c) {
        std::size_t rest = c;
        for (int d = n - 1; d >= 0; --d) {
            digit[static_cast<std::size_t>(d)] = rest % per_axis;
            rest /= per_axis;
        }
        auto &cell = cubes[c];
        cell.origin.resize(static_cast<std::size_t>(n));
        for (int d = 0; d < n; ++d) {
            const std::uint64_t fine = (sub.index[static_cast<std::size_t>(d)] << p) + digit[static_cast<std::size_t>(d)];
            cell.origin[static_cast<std::size_t>(d)] = std::ldexp(static_cast<double>(fine), -(sub.depth + p));
        }
        cell.vertices.resize(nv);
        for (std::size_t v = 0; v < nv; ++v) { cell.vertices[v] = CubeVertexGridIndex(digit, v, p); }
    }
    return cubes;
}

/// Halves a pending sub-domain into 2^n children (child bit of coordinate d is bit n-1-d of the child rank).
inline std::vector<SubDomain> split(SubDomain &sub) {
    if (sub.status != SubDomainStatus::Pending) { throw std::logic_error("split: sub-domain is not pending"); }
    const int n = sub.dim();
    const std::size_t count = std::size_t{1} << n;
    std::vector<SubDomain> children(count);
    for (std::size_t c = 0; c < count; ++c) {
        auto &child = children[c];
        child.depth = sub.depth + 1;
        child.index.resize(static_cast<std::size_t>(n));
        for (int d = 0; d < n; ++d) {
            child.index[static_cast<std::size_t>(d)] =
                2 * sub.index[static_cast<std::size_t>(d)] + ((c >> (n - 1 - d)) & 1U);
        }
    }
    sub.status = SubDomainStatus::Split;
    return children;
}

/// Per-leaf interpolation data. Weights are laid out [cube][output][vertex] so one lookup
/// touches a single contiguous block.
struct LeafData {
    int p = 0;
    std::vector<double> mean;
    std::vector<double> weights;
    /// Shifted samples on the leaf grid, [grid point][output]. Kept in memory for diagnostics
    /// and not written to model files.
    std::vector<double> samples;
};

/// Read-only view of one local cube of a leaf.
struct LocalCube {
    std::vector<double> origin;
    double edge = 0.0;
    std::span<const double> weights;  // [output][vertex]
};

struct LocateResult {
    std::size_t node = kNoNode;
    std::size_t cube = 0;
    int visits = 0;
    bool infeasible = false;
    std::array<double, kMaxDim> local{};  // position inside the cube, each in [0, 1]
};

class PartitionTree {
public:
    PartitionTree() = default;

    explicit PartitionTree(int n) : n_(n) {
        if (n < 1 || n > kMaxDim) { throw ConfigError("input dimension must be in [1, " + std::to_string(kMaxDim) + "]"); }
        nodes_.push_back(SubDomain::Root(n));
    }

    [[nodiscard]] int dim() const { return n_; }
    [[nodiscard]] const std::vector<SubDomain> &nodes() const { return nodes_; }
    [[nodiscard]] std::vector<SubDomain> &nodes() { return nodes_; }
    [[nodiscard]] const std::vector<LeafData> &leaves() const { return leaves_; }
    [[nodiscard]] std::vector<LeafData> &leaves() { return leaves_; }
    [[nodiscard]] const SubDomain &node(std::size_t id) const { return nodes_.at(id); }

    /// Splits node `id` and appends its children as a contiguous block. Returns the first child id.
    std::size_t SplitNode(std::size_t id) {
        auto children = split(nodes_.at(id));
        const std::size_t first = nodes_.size();
        nodes_[id].first_child = first;
        for (std::size_t c = 0; c < children.size(); ++c) {
            children[c].id = first + c;
            nodes_.push_back(std::move(children[c]));
        }
        return first;
    }

    std::size_t AttachLeaf(std::size_t id, LeafData leaf) {
        auto &node = nodes_.at(id);
        node.status = SubDomainStatus::Approximated;
        node.p = leaf.p;
        node.mean = leaf.mean;
        node.leaf = leaves_.size();
        leaves_.push_back(std::move(leaf));
        return node.leaf;
    }

    void MarkInfeasible(std::size_t id) { nodes_.at(id).status = SubDomainStatus::Infeasible; }

    [[nodiscard]] int MaxDepth() const {
        int depth = 0;
        for (const auto &node : nodes_) { depth = std::max(depth, node.depth); }
        return depth;
    }

    [[nodiscard]] bool IsLeaf(const SubDomain &node) const { return node.first_child == kNoNode; }

    [[nodiscard]] std::size_t LeafCount() const {
        std::size_t count = 0;
        for (const auto &node : nodes_) { count += IsLeaf(node) ? 1 : 0; }
        return count;
    }

    [[nodiscard]] LocalCube Cube(std::size_t node_id, std::size_t cube, int output_dim) const {
        const auto &node = nodes_.at(node_id);
        const auto &leaf = leaves_.at(node.leaf);
        const int n = n_;
        const std::size_t per_axis = std::size_t{1} << leaf.p;
        const std::size_t nv = std::size_t{1} << n;
        LocalCube out;
        out.edge = std::ldexp(1.0, -(node.depth + leaf.p));
        out.origin.resize(static_cast<std::size_t>(n));
        std::size_t rest = cube;
        for (int d = n - 1; d >= 0; --d) {
            const std::size_t digit = rest % per_axis;
            rest /= per_axis;
            const std::uint64_t fine = (node.index[static_cast<std::size_t>(d)] << leaf.p) + digit;
            out.origin[static_cast<std::size_t>(d)] = std::ldexp(static_cast<double>(fine), -(node.depth + leaf.p));
        }
        const std::size_t block = nv * static_cast<std::size_t>(output_dim);
        out.weights = std::span<const double>(leaf.weights).subspan(cube * block, block);
        return out;
    }

    /// Point location for x in unit-cube coordinates. Cubes are half-open [lo, hi) per
    /// coordinate, closed at the global upper face. Descends by bit tests only.
    LocateResult Locate(std::span<const double> x) const {
        LocateResult r;
        std::array<std::uint64_t, kMaxDim> q{};
        constexpr std::uint64_t kTop = std::uint64_t{1} << kCoordBits;
        for (int d = 0; d < n_; ++d) {
            const double xd = x[static_cast<std::size_t>(d)];
            if (!(xd >= 0.0 && xd <= 1.0)) { throw OutOfDomainError("locate: point outside the unit cube"); }
            auto fine = static_cast<std::uint64_t>(std::ldexp(xd, kCoordBits));
            q[static_cast<std::size_t>(d)] = fine >= kTop ? kTop - 1 : fine;
        }
        std::size_t id = 0;
        while (true) {
            const SubDomain &node = nodes_[id];
            if (node.first_child == kNoNode) { break; }
            ++r.visits;
            const int shift = kCoordBits - node.depth - 1;
            std::size_t child = 0;
            for (int d = 0; d < n_; ++d) { child = (child << 1) | ((q[static_cast<std::size_t>(d)] >> shift) & 1U); }
            id = node.first_child + child;
        }
        r.node = id;
        const SubDomain &leaf_node = nodes_[id];
        if (leaf_node.status == SubDomainStatus::Infeasible) {
            r.infeasible = true;
            return r;
        }
        if (leaf_node.status != SubDomainStatus::Approximated) { throw std::logic_error("locate: tree has pending nodes"); }
        const int p = leaves_[leaf_node.leaf].p;
        const int level = leaf_node.depth + p;
        const int shift = kCoordBits - level;
        const std::uint64_t mask = (std::uint64_t{1} << p) - 1;
        std::size_t cube = 0;
        for (int d = 0; d < n_; ++d) {
            const std::uint64_t global = q[static_cast<std::size_t>(d)] >> shift;
            cube = (cube << p) | static_cast<std::size_t>(global & mask);
            r.local[static_cast<std::size_t>(d)] =
                std::ldexp(x[static_cast<std::size_t>(d)], level) - static_cast<double>(global);
        }
        r.cube = cube;
        return r;
    }

    /// One line per leaf: `depth origin_1 .. origin_n edge status p`.
    void ExportPartition(std::ostream &os) const {
        for (const auto &node : nodes_) {
            if (!IsLeaf(node)) { continue; }
            os << node.depth;
            os << std::setprecision(17);
            for (double o : node.origin()) { os << ' ' << o; }
            os << ' ' << node.edge() << ' ' << ToString(node.status) << ' ' << node.p << '\n';
        }
    }

private:
    int n_ = 0;
    std::vector<SubDomain> nodes_;
    std::vector<LeafData> leaves_;
};

inline LocateResult locate(const PartitionTree &tree, std::span<const double> x) { return tree.Locate(x); }

}  // namespace alkiax
