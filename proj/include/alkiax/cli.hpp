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
#include <chrono>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alkiax/approximator.hpp"
#include "alkiax/config.hpp"
#include "alkiax/model_io.hpp"
#include "alkiax/validation.hpp"

namespace alkiax {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitViolations = 2;

namespace cli {

inline std::vector<double> ParsePoint(const std::string &text) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<double> x;
    std::string tok;
    while (in >> tok) { x.push_back(ConfigFile::ToDouble("point", tok)); }
    if (x.empty()) { throw ConfigError("empty point '" + text + "'"); }
    return x;
}

inline std::vector<std::vector<double>> ReadPoints(const std::string &path) {
    std::ifstream in(path);
    if (!in) { throw ConfigError("cannot open points file " + path); }
    std::vector<std::vector<double>> out;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = ConfigFile::Trim(line);
        if (t.empty() || t[0] == '#') { continue; }
        out.push_back(ParsePoint(t));
    }
    return out;
}

inline void WriteCsvRow(std::ostream &os, const std::vector<double> &xs) {
    for (std::size_t i = 0; i < xs.size(); ++i) { os << (i ? "," : "") << xs[i]; }
}

inline void WriteRecordsCsv(std::ostream &os, const BuildReport &rep) {
    os << "node,depth,edge,action,p,gamma_bar,norm_lo,norm_hi\n";
    os.precision(10);
    for (const auto &r : rep.records) {
        os << r.node << ',' << r.depth << ',' << r.edge << ',' << ToString(r.action) << ',' << r.p << ','
           << (r.gamma_bar.empty() ? 0.0 : r.gamma_bar[0]) << ',' << (r.norm_lo.empty() ? 0.0 : r.norm_lo[0]) << ','
           << (r.norm_hi.empty() ? 0.0 : r.norm_hi[0]) << '\n';
    }
}

struct Options {
    std::string config;
    std::string model;
    std::string out;
    std::string point;
    std::string points_file;
    std::string export_partition;
    std::string epsilons;
    std::string records;
    std::string violations_out;
    int workers = 0;
    int grid = 101;
    long long queries = 100000;
    std::uint64_t seed = 1;
    bool verbose = false;
    bool audit = false;
};

inline RunSetup LoadSetup(const Options &o) {
    RunSetup s = MakeRunSetup(ConfigFile::Load(o.config));
    if (o.workers > 0) { s.approx.worker_count = o.workers; }
    if (o.verbose) { s.approx.verbose = true; }
    return s;
}

inline int Approximate(const Options &o, std::ostream &out) {
    RunSetup s = LoadSetup(o);
    auto [model, report] = approximate(*s.oracle, s.domain, s.approx);
    save(model, o.out);
    out << report.Summary();
    out << "model " << o.out << "\n";
    if (!o.records.empty()) {
        std::ofstream f(o.records);
        if (!f) { throw ConfigError("cannot write " + o.records); }
        WriteRecordsCsv(f, report);
    }
    if (o.audit) {
        const auto audit = audit_extrapolation(*s.oracle, s.domain, report, s.approx, -1, s.synthetic);
        std::size_t failed = 0;
        for (const auto &a : audit) {
            if (!a.ok) {
                ++failed;
                out << "audit_fail node " << a.node << " depth " << a.depth << " gamma_bar " << a.gamma_bar[0]
                    << " lower_bound " << a.norm_lower_bound[0] << "\n";
            }
        }
        out << "audit_subdomains " << audit.size() << " audit_failures " << failed << "\n";
        if (failed != 0) { return kExitViolations; }
    }
    return kExitOk;
}

inline int Evaluate(const Options &o, std::ostream &out, std::ostream &err) {
    if (o.point.empty() == o.points_file.empty()) { throw ConfigError("evaluate needs exactly one of --point or --points-file"); }
    const Model model = load(o.model);
    std::vector<std::vector<double>> xs;
    if (!o.point.empty()) {
        xs.push_back(ParsePoint(o.point));
    } else {
        xs = ReadPoints(o.points_file);
    }
    std::optional<EvalResult> single;
    if (!o.point.empty()) { single = evaluate(model, xs[0]); }
    out.precision(17);
    for (int d = 0; d < model.input_dim(); ++d) { out << 'x' << d + 1 << ','; }
    out << "status";
    for (int j = 0; j < model.output_dim(); ++j) { out << ",u" << j + 1; }
    out << '\n';
    if (!o.point.empty()) {
        const EvalResult &r = *single;
        WriteCsvRow(out, xs[0]);
        out << ',' << (r.status == EvalStatus::Ok ? "ok" : "infeasible");
        for (double v : r.values) { out << ',' << v; }
        out << '\n';
        return kExitOk;
    }
    const auto results = evaluate_batch(model, xs, std::max(1, o.workers));
    bool any_error = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const EvalResult &r = results[i];
        WriteCsvRow(out, xs[i]);
        if (!r.error.empty()) {
            out << ",error\n";
            err << "point " << i + 1 << ": " << r.error << '\n';
            any_error = true;
            continue;
        }
        out << ',' << (r.status == EvalStatus::Ok ? "ok" : "infeasible");
        for (double v : r.values) { out << ',' << v; }
        out << '\n';
    }
    return any_error ? kExitError : kExitOk;
}

inline int Validate(const Options &o, std::ostream &out) {
    const RunSetup s = LoadSetup(o);
    const Model model = load(o.model);
    if (model.transform().lower() != s.domain.lower() || model.transform().upper() != s.domain.upper()) {
        throw ConfigError("model domain differs from the config domain");
    }
    const auto rep = validate_error_grid(model, *s.oracle, o.grid, s.approx.worker_count);
    out.precision(10);
    out << "output,max_err,argmax\n";
    for (std::size_t j = 0; j < rep.max_err.size(); ++j) {
        out << j + 1 << ',' << rep.max_err[j] << ',';
        std::string sep;
        for (double v : rep.argmax[j]) {
            out << sep << v;
            sep = " ";
        }
        out << '\n';
    }
    out << "epsilon " << model.epsilon() << "\n"
        << "checked " << rep.checked << "\n"
        << "skipped_infeasible " << rep.skipped_infeasible << "\n"
        << "uncovered " << rep.uncovered << "\n"
        << "violations " << rep.violation_count << "\n";
    if (!o.violations_out.empty()) {
        std::ofstream f(o.violations_out);
        if (!f) { throw ConfigError("cannot write " + o.violations_out); }
        f.precision(17);
        for (int d = 0; d < model.input_dim(); ++d) { f << 'x' << d + 1 << ','; }
        f << "output,error\n";
        for (const auto &v : rep.violations) {
            WriteCsvRow(f, v.point);
            f << ',' << v.output + 1 << ',' << v.error << '\n';
        }
    }
    return rep.ok() ? kExitOk : kExitViolations;
}

inline int Inspect(const Options &o, std::ostream &out) {
    const Model model = load(o.model);
    const ModelStats st = model.Stats();
    out << "input_dim " << model.input_dim() << "\n"
        << "output_dim " << model.output_dim() << "\n"
        << "kernel " << model.kernel().Name() << " length_scale " << model.kernel().length_scale() << "\n"
        << "epsilon " << model.epsilon() << "\n"
        << "p_lo " << model.p_lo() << " p_hi " << model.p_hi() << "\n"
        << "leaves " << st.leaf_count << "\n"
        << "approximated_leaves " << st.approximated_leaves << "\n"
        << "infeasible_leaves " << st.infeasible_leaves << "\n"
        << "local_cubes " << st.cube_count << "\n"
        << "max_depth " << st.max_depth << "\n"
        << "bytes " << st.bytes << "\n"
        << "mean_eval_ops " << st.mean_eval_ops << "\n"
        << "build_digest " << std::hex << model.build_digest() << std::dec << "\n";
    if (!o.export_partition.empty()) {
        std::ofstream f(o.export_partition);
        if (!f) { throw ConfigError("cannot write " + o.export_partition); }
        model.tree().ExportPartition(f);
        out << "partition " << o.export_partition << "\n";
    }
    return kExitOk;
}

inline int Bench(const Options &o, std::ostream &out) {
    if (o.queries < 1) { throw ConfigError("--queries must be positive"); }
    const Model model = load(o.model);
    const int n = model.input_dim();
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto count = static_cast<std::size_t>(o.queries);
    std::vector<double> pts(count * static_cast<std::size_t>(n));
    const auto &lo = model.transform().lower();
    const auto &hi = model.transform().upper();
    for (std::size_t i = 0; i < count; ++i) {
        for (int d = 0; d < n; ++d) {
            const auto ud = static_cast<std::size_t>(d);
            pts[i * static_cast<std::size_t>(n) + ud] = lo[ud] + (hi[ud] - lo[ud]) * unit(rng);
        }
    }
    std::vector<double> buf(static_cast<std::size_t>(model.output_dim()));
    std::vector<double> lat(count);
    std::size_t infeasible = 0;
    double sink = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const std::span<const double> x(pts.data() + i * static_cast<std::size_t>(n), static_cast<std::size_t>(n));
        const auto t0 = std::chrono::steady_clock::now();
        const EvalStatus st = model.Evaluate(x, buf);
        const auto t1 = std::chrono::steady_clock::now();
        lat[i] = std::chrono::duration<double, std::micro>(t1 - t0).count();
        if (st == EvalStatus::Ok) {
            sink += buf[0];
        } else {
            ++infeasible;
        }
    }
    double mean = 0.0;
    for (double v : lat) { mean += v; }
    mean /= static_cast<double>(count);
    std::sort(lat.begin(), lat.end());
    const double median = lat[count / 2];
    const double p99 = lat[std::min(count - 1, static_cast<std::size_t>(0.99 * static_cast<double>(count)))];
    out << "queries " << count << "\n"
        << "infeasible " << infeasible << "\n"
        << "mean_us " << mean << "\n"
        << "median_us " << median << "\n"
        << "p99_us " << p99 << "\n"
        << "checksum " << sink << "\n";
    return kExitOk;
}

inline int Sweep(const Options &o, std::ostream &out) {
    RunSetup s = LoadSetup(o);
    const std::vector<double> eps = ConfigFile::ParseList("--epsilons", o.epsilons, ',');
    const SweepResult res = complexity_sweep(*s.oracle, s.domain, s.approx, eps);
    if (!o.out.empty()) {
        std::ofstream f(o.out);
        if (!f) { throw ConfigError("cannot write " + o.out); }
        res.WriteCsv(f);
    }
    res.WriteCsv(out);
    return kExitOk;
}

}  // namespace cli

/// Entry point of the `alkiax` tool. Exit codes: 0 success, 1 error, 2 validation violations.
inline int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    cli::Options o;
    CLI::App app{"alkiax: certified piecewise kernel approximation of black-box functions"};
    app.require_subcommand(1);

    auto *ap = app.add_subcommand("approximate", "Build a model from a config and save it");
    ap->add_option("--config", o.config, "Config file (key = value)")->required();
    ap->add_option("--out", o.out, "Output model file")->required();
    ap->add_option("--workers", o.workers, "Override alkiax.workers")->check(CLI::PositiveNumber);
    ap->add_flag("--verbose", o.verbose, "Progress line per sub-domain on stderr");
    ap->add_option("--records", o.records,
                   "CSV of processed sub-domains: node,depth,edge,action,p,gamma_bar,norm_lo,norm_hi (first output)");
    ap->add_flag("--audit", o.audit, "Re-sample approximated sub-domains at p_hi and flag Gamma_bar below the lower bound");

    auto *ev = app.add_subcommand("evaluate", "Evaluate a model; CSV x1..xn,status,u1..u_nu on stdout");
    ev->add_option("--model", o.model, "Model file")->required();
    ev->add_option("--point", o.point, "One point, comma separated");
    ev->add_option("--points-file", o.points_file, "File with one point per line");
    ev->add_option("--workers", o.workers, "Threads for batch evaluation")->check(CLI::PositiveNumber);

    auto *va = app.add_subcommand("validate", "Compare model and oracle on a K^n grid; exit 2 on violations");
    va->add_option("--model", o.model, "Model file")->required();
    va->add_option("--config", o.config, "Config describing the oracle")->required();
    va->add_option("--grid", o.grid, "Points per axis")->check(CLI::Range(2, 100000));
    va->add_option("--workers", o.workers, "Override alkiax.workers")->check(CLI::PositiveNumber);
    va->add_option("--violations-out", o.violations_out, "CSV of violating points: x1..xn,output,error");

    auto *in = app.add_subcommand("inspect", "Print model statistics");
    in->add_option("--model", o.model, "Model file")->required();
    in->add_option("--export-partition", o.export_partition,
                   "Write one line per leaf: depth origin... edge status p (unit-cube coordinates)");

    auto *be = app.add_subcommand("bench", "Evaluation latency: mean/median/p99 in microseconds");
    be->add_option("--model", o.model, "Model file")->required();
    be->add_option("--queries", o.queries, "Number of random queries")->check(CLI::PositiveNumber);
    be->add_option("--seed", o.seed, "Seed of the query points");

    auto *sw = app.add_subcommand("sweep", "Sample complexity table: epsilon,samples,subdomains,max_depth,min_edge,wall_time_s");
    sw->add_option("--config", o.config, "Config file")->required();
    sw->add_option("--epsilons", o.epsilons, "Strictly decreasing list, comma separated")->required();
    sw->add_option("--out", o.out, "Also write the table to this file");
    sw->add_option("--workers", o.workers, "Override alkiax.workers")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitError;
    }
    try {
        if (*ap) { return cli::Approximate(o, out); }
        if (*ev) { return cli::Evaluate(o, out, err); }
        if (*va) { return cli::Validate(o, out); }
        if (*in) { return cli::Inspect(o, out); }
        if (*be) { return cli::Bench(o, out); }
        if (*sw) { return cli::Sweep(o, out); }
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}

}  // namespace alkiax
