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

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "alkiax/approximator.hpp"
#include "alkiax/cstr.hpp"
#include "alkiax/oracle.hpp"
#include "alkiax/process_oracle.hpp"

namespace alkiax {

/// Flat `key = value` configuration. Lines starting with '#' are comments.
///
///   oracle.kind             sincos | constant | synthetic | cstr | process
///   oracle.value            constant: comma-separated output vector
///   oracle.centers          synthetic: points separated by ';', coordinates by ','
///   oracle.coefficients     synthetic: one per center
///   oracle.kernel.family    synthetic: kernel of the expansion (default: kernel.family)
///   oracle.kernel.nu        synthetic: Matern smoothness when family = matern
///   oracle.kernel.length_scale  synthetic (default: kernel.length_scale)
///   oracle.command          process: shell command of the child
///   oracle.output_dim       process: number of outputs
///   cstr.<field>            cstr: any CstrConfig field, e.g. cstr.horizon = 10
///   domain.lower, domain.upper   comma-separated box (default: the oracle's own domain)
///   kernel.family           se | matern | matern12 | matern32 | matern52
///   kernel.nu               0.5 | 1.5 | 2.5 when family = matern
///   kernel.length_scale     positive
///   alkiax.epsilon, alkiax.p_lo, alkiax.p_hi, alkiax.max_depth, alkiax.workers
///   alkiax.gamma_mode       extrapolate | user_oracle (user_oracle needs a synthetic oracle)
///   alkiax.cache, alkiax.mean_shift, alkiax.allow_assumption2_failure, alkiax.verbose   true | false
class ConfigFile {
public:
    static ConfigFile Parse(const std::string &text, const std::string &origin = "config") {
        ConfigFile cfg;
        std::istringstream in(text);
        std::string line;
        int number = 0;
        while (std::getline(in, line)) {
            ++number;
            const std::string t = Trim(line);
            if (t.empty() || t[0] == '#') { continue; }
            const auto eq = t.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value', got '" + t + "'");
            }
            const std::string key = Trim(t.substr(0, eq));
            const std::string value = Trim(t.substr(eq + 1));
            if (key.empty()) { throw ConfigError(origin + ":" + std::to_string(number) + ": empty key"); }
            if (!cfg.values_.emplace(key, value).second) {
                throw ConfigError(origin + ":" + std::to_string(number) + ": duplicate key '" + key + "'");
            }
        }
        return cfg;
    }

    static ConfigFile Load(const std::string &path) {
        std::ifstream in(path);
        if (!in) { throw ConfigError("cannot open config file " + path); }
        std::stringstream ss;
        ss << in.rdbuf();
        return Parse(ss.str(), path);
    }

    void Set(const std::string &key, const std::string &value) { values_[key] = value; }
    [[nodiscard]] bool Has(const std::string &key) const { return values_.count(key) != 0; }

    [[nodiscard]] std::string Str(const std::string &key, const std::optional<std::string> &fallback = std::nullopt) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it != values_.end()) { return it->second; }
        if (fallback) { return *fallback; }
        throw ConfigError("missing required key '" + key + "'");
    }

    [[nodiscard]] double Num(const std::string &key, std::optional<double> fallback = std::nullopt) const {
        if (!Has(key)) {
            used_.insert(key);
            if (fallback) { return *fallback; }
            throw ConfigError("missing required key '" + key + "'");
        }
        return ToDouble(key, Str(key));
    }

    [[nodiscard]] long long Int(const std::string &key, std::optional<long long> fallback = std::nullopt) const {
        const double v = Num(key, fallback ? std::optional<double>(static_cast<double>(*fallback)) : std::nullopt);
        if (v != std::floor(v)) { throw ConfigError("key '" + key + "' must be an integer"); }
        return static_cast<long long>(v);
    }

    [[nodiscard]] bool Bool(const std::string &key, bool fallback) const {
        if (!Has(key)) {
            used_.insert(key);
            return fallback;
        }
        const std::string v = Str(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") { return true; }
        if (v == "false" || v == "0" || v == "no" || v == "off") { return false; }
        throw ConfigError("key '" + key + "' must be true or false, got '" + v + "'");
    }

    [[nodiscard]] std::vector<double> List(const std::string &key) const { return ParseList(key, Str(key), ','); }

    /// Keys present in the file that no accessor asked for.
    [[nodiscard]] std::vector<std::string> Unused() const {
        std::vector<std::string> out;
        for (const auto &[k, v] : values_) {
            if (used_.count(k) == 0) { out.push_back(k); }
        }
        return out;
    }

    static std::vector<double> ParseList(const std::string &key, const std::string &text, char sep) {
        std::vector<double> out;
        std::string item;
        std::istringstream in(text);
        while (std::getline(in, item, sep)) { out.push_back(ToDouble(key, Trim(item))); }
        if (out.empty()) { throw ConfigError("key '" + key + "' needs at least one number"); }
        return out;
    }

    static double ToDouble(const std::string &key, const std::string &text) {
        double v = 0.0;
        const char *end = text.data() + text.size();
        const auto res = std::from_chars(text.data(), end, v);
        if (text.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
            throw ConfigError("key '" + key + "': '" + text + "' is not a finite number");
        }
        return v;
    }

    static std::string Trim(const std::string &s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) { return ""; }
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

/// Everything a CLI run needs: the oracle, the box it is approximated on, and the build settings.
struct RunSetup {
    std::unique_ptr<Oracle> oracle;
    DomainTransform domain;
    ApproxConfig approx;
    std::string oracle_kind;
    const SyntheticRkhsMember *synthetic = nullptr;
    std::optional<CstrConfig> cstr;
};

inline Kernel ParseKernel(const ConfigFile &c, const std::string &prefix, std::optional<Kernel> fallback) {
    if (!c.Has(prefix + "family") && fallback) {
        return {fallback->family(), c.Num(prefix + "length_scale", fallback->length_scale())};
    }
    const std::string family = c.Str(prefix + "family", std::string("matern32"));
    const double nu = c.Num(prefix + "nu", 1.5);
    const double length = c.Num(prefix + "length_scale", fallback ? fallback->length_scale() : 1.0);
    try {
        return {ParseKernelFamily(family, nu), length};
    } catch (const DomainError &e) {
        throw ConfigError(prefix + "length_scale: " + e.what());
    }
}

inline CstrConfig ParseCstr(const ConfigFile &c) {
    CstrConfig k;
    k.h = c.Num("cstr.h", k.h);
    k.theta = c.Num("cstr.theta", k.theta);
    k.k = c.Num("cstr.k", k.k);
    k.M = c.Num("cstr.M", k.M);
    k.x_f = c.Num("cstr.x_f", k.x_f);
    k.x_c = c.Num("cstr.x_c", k.x_c);
    k.alpha = c.Num("cstr.alpha", k.alpha);
    k.first_row_uses_x1 = c.Bool("cstr.first_row_uses_x1", k.first_row_uses_x1);
    k.x_s2 = c.Num("cstr.x_s2", k.x_s2);
    k.state_half_width = c.Num("cstr.state_half_width", k.state_half_width);
    k.constraint_half_width = c.Num("cstr.constraint_half_width", k.constraint_half_width);
    k.u_min = c.Num("cstr.u_min", k.u_min);
    k.u_max = c.Num("cstr.u_max", k.u_max);
    k.horizon = static_cast<int>(c.Int("cstr.horizon", k.horizon));
    k.q1 = c.Num("cstr.q1", k.q1);
    k.q2 = c.Num("cstr.q2", k.q2);
    k.r = c.Num("cstr.r", k.r);
    k.terminal_weight = c.Num("cstr.terminal_weight", k.terminal_weight);
    k.rho = c.Num("cstr.rho", k.rho);
    k.slack_threshold = c.Num("cstr.slack_threshold", k.slack_threshold);
    k.starts = static_cast<int>(c.Int("cstr.starts", k.starts));
    k.seed = static_cast<std::uint64_t>(c.Int("cstr.seed", static_cast<long long>(k.seed)));
    k.max_iterations = static_cast<int>(c.Int("cstr.max_iterations", k.max_iterations));
    k.gradient_tolerance = c.Num("cstr.gradient_tolerance", k.gradient_tolerance);
    k.Validate();
    return k;
}

/// Builds the oracle and settings described by a configuration; rejects unknown keys.
inline RunSetup MakeRunSetup(const ConfigFile &c) {
    RunSetup s;
    ApproxConfig &a = s.approx;
    a.kernel = ParseKernel(c, "kernel.", std::nullopt);
    a.epsilon = c.Num("alkiax.epsilon", a.epsilon);
    a.p_lo = static_cast<int>(c.Int("alkiax.p_lo", a.p_lo));
    a.p_hi = static_cast<int>(c.Int("alkiax.p_hi", a.p_hi));
    a.max_depth = static_cast<int>(c.Int("alkiax.max_depth", a.max_depth));
    a.worker_count = static_cast<int>(c.Int("alkiax.workers", a.worker_count));
    a.cache = c.Bool("alkiax.cache", a.cache);
    a.mean_shift = c.Bool("alkiax.mean_shift", a.mean_shift);
    a.allow_assumption2_failure = c.Bool("alkiax.allow_assumption2_failure", a.allow_assumption2_failure);
    a.verbose = c.Bool("alkiax.verbose", a.verbose);
    const std::string gamma = c.Str("alkiax.gamma_mode", std::string("extrapolate"));
    if (gamma == "extrapolate") {
        a.gamma_mode = GammaMode::Extrapolate;
    } else if (gamma == "user_oracle") {
        a.gamma_mode = GammaMode::UserOracle;
    } else {
        throw ConfigError("alkiax.gamma_mode must be extrapolate or user_oracle, got '" + gamma + "'");
    }

    s.oracle_kind = c.Str("oracle.kind");
    if (s.oracle_kind == "sincos") {
        s.oracle = std::make_unique<FunctionOracle>(MakeSinCosOracle());
    } else if (s.oracle_kind == "constant") {
        const std::vector<double> value = c.List("oracle.value");
        const int n = c.Has("domain.lower") ? static_cast<int>(c.List("domain.lower").size()) : 1;
        s.oracle = std::make_unique<FunctionOracle>(MakeConstantOracle(n, value));
    } else if (s.oracle_kind == "synthetic") {
        const Kernel k = ParseKernel(c, "oracle.kernel.", a.kernel);
        std::vector<std::vector<double>> points;
        std::istringstream in(c.Str("oracle.centers"));
        std::string item;
        while (std::getline(in, item, ';')) { points.push_back(ConfigFile::ParseList("oracle.centers", item, ',')); }
        const std::vector<double> coeffs = c.List("oracle.coefficients");
        if (points.empty() || points.size() != coeffs.size()) {
            throw ConfigError("oracle.centers and oracle.coefficients must have the same nonzero length");
        }
        PointSet centers(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(points[0].size()));
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (points[i].size() != points[0].size()) { throw ConfigError("oracle.centers: points differ in dimension"); }
            for (std::size_t d = 0; d < points[i].size(); ++d) {
                centers(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = points[i][d];
            }
        }
        auto synth = std::make_unique<SyntheticRkhsMember>(k, centers,
                                                           Eigen::Map<const Eigen::VectorXd>(coeffs.data(), static_cast<Eigen::Index>(coeffs.size())));
        s.synthetic = synth.get();
        s.oracle = std::move(synth);
    } else if (s.oracle_kind == "cstr") {
        s.cstr = ParseCstr(c);
        s.oracle = std::make_unique<CstrMpcOracle>(*s.cstr);
    } else if (s.oracle_kind == "process") {
        if (!c.Has("domain.lower") || !c.Has("domain.upper")) { throw ConfigError("process oracle needs domain.lower and domain.upper"); }
        const long long nu = c.Int("oracle.output_dim", 1);
        if (nu < 1) { throw ConfigError("oracle.output_dim must be positive"); }
        s.oracle = std::make_unique<ProcessOracle>(c.Str("oracle.command"), DomainTransform(c.List("domain.lower"), c.List("domain.upper")),
                                                   static_cast<int>(nu));
    } else {
        throw ConfigError("oracle.kind must be one of sincos, constant, synthetic, cstr, process; got '" + s.oracle_kind + "'");
    }

    if (c.Has("domain.lower") || c.Has("domain.upper")) {
        s.domain = DomainTransform(c.List("domain.lower"), c.List("domain.upper"));
        if (s.domain.dim() != s.oracle->input_dim()) { throw ConfigError("domain dimension does not match the oracle"); }
    } else {
        s.domain = s.oracle->domain();
    }

    if (a.gamma_mode == GammaMode::UserOracle) {
        if (s.synthetic == nullptr) { throw ConfigError("alkiax.gamma_mode = user_oracle needs oracle.kind = synthetic"); }
        const SyntheticRkhsMember *synth = s.synthetic;
        if (synth->kernel().family() != a.kernel.family() || synth->kernel().length_scale() != a.kernel.length_scale()) {
            throw ConfigError("user_oracle: the synthetic oracle's kernel must equal kernel.* for its norm to be a valid bound");
        }
        if (a.mean_shift) { throw ConfigError("user_oracle: the known norm bounds f itself, so set alkiax.mean_shift = false"); }
        const DomainTransform unit = DomainTransform::UnitCube(s.domain.dim());
        if (s.domain.lower() != unit.lower() || s.domain.upper() != unit.upper()) {
            throw ConfigError("user_oracle: the synthetic norm bound holds on the unit cube only");
        }
        a.gamma_oracle = [synth](std::span<const double>, double edge, std::span<const double>) {
            return std::vector<double>{synth->RestrictedNormBound(edge)};
        };
    }

    const std::vector<std::string> unused = c.Unused();
    if (!unused.empty()) {
        std::string list;
        for (const auto &k : unused) { list += (list.empty() ? "" : ", ") + k; }
        throw ConfigError("unknown or inapplicable config keys: " + list);
    }
    a.Validate();
    return s;
}

}  // namespace alkiax
