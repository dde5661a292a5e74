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

#include <csignal>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "alkiax/errors.hpp"
#include "alkiax/oracle.hpp"

namespace alkiax {

/// Ground truth served by a child process over a line protocol.
///
///   request:  Q x_1 ... x_n
///   response: F v_1 ... v_nu slack      (feasible)
///             I                         (infeasible, no values)
///             I v_1 ... v_nu slack      (infeasible with penalty-relaxed values)
///
/// The child is started with /bin/sh -c and lives as long as the oracle.
class ProcessOracle final : public Oracle {
public:
    ProcessOracle(std::string command, DomainTransform domain, int output_dim)
        : command_(std::move(command)), domain_(std::move(domain)), output_dim_(output_dim) {
        if (output_dim_ < 1) { throw ConfigError("process oracle: output dimension must be positive"); }
        Start();
    }

    ~ProcessOracle() override { Stop(); }
    ProcessOracle(const ProcessOracle &) = delete;
    ProcessOracle &operator=(const ProcessOracle &) = delete;

    [[nodiscard]] int input_dim() const override { return domain_.dim(); }
    [[nodiscard]] int output_dim() const override { return output_dim_; }
    [[nodiscard]] DomainTransform domain() const override { return domain_; }
    [[nodiscard]] bool thread_safe() const override { return false; }
    [[nodiscard]] std::string Describe() const override { return "process(" + command_ + ")"; }

    [[nodiscard]] OracleSample Query(std::span<const double> x) const override {
        std::lock_guard<std::mutex> lock(mutex_);
        std::ostringstream req;
        req.precision(17);
        req << 'Q';
        for (double v : x) { req << ' ' << v; }
        req << '\n';
        const std::string line = req.str();
        if (std::fputs(line.c_str(), to_child_) == EOF || std::fflush(to_child_) != 0) {
            throw OracleError("process oracle: cannot write to child", {x.begin(), x.end()});
        }
        std::string reply;
        int c = 0;
        while ((c = std::fgetc(from_child_)) != EOF && c != '\n') { reply.push_back(static_cast<char>(c)); }
        if (reply.empty() && c == EOF) { throw OracleError("process oracle: child closed its output", {x.begin(), x.end()}); }
        return Parse(reply, x);
    }

private:
    OracleSample Parse(const std::string &reply, std::span<const double> x) const {
        std::istringstream in(reply);
        std::string tag;
        in >> tag;
        std::vector<double> nums;
        double v = 0.0;
        while (in >> v) { nums.push_back(v); }
        if (!in.eof()) { throw OracleError("process oracle: malformed reply '" + reply + "'", {x.begin(), x.end()}); }
        OracleSample s;
        const auto full = static_cast<std::size_t>(output_dim_) + 1;
        if (tag == "F" && nums.size() == full) {
            s.feasible = true;
        } else if (tag == "I" && (nums.empty() || nums.size() == full)) {
            s.feasible = false;
            if (nums.empty()) { return s; }
        } else {
            throw OracleError("process oracle: malformed reply '" + reply + "'", {x.begin(), x.end()});
        }
        s.slack = nums.back();
        nums.pop_back();
        s.values = std::move(nums);
        return s;
    }

    void Start() {
        int in_pipe[2];
        int out_pipe[2];
        if (pipe(in_pipe) != 0) { throw OracleError("process oracle: pipe failed", {}); }
        if (pipe(out_pipe) != 0) {
            close(in_pipe[0]);
            close(in_pipe[1]);
            throw OracleError("process oracle: pipe failed", {});
        }
        std::signal(SIGPIPE, SIG_IGN);
        pid_ = fork();
        if (pid_ < 0) { throw OracleError("process oracle: fork failed", {}); }
        if (pid_ == 0) {
            dup2(in_pipe[0], STDIN_FILENO);
            dup2(out_pipe[1], STDOUT_FILENO);
            close(in_pipe[0]);
            close(in_pipe[1]);
            close(out_pipe[0]);
            close(out_pipe[1]);
            execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char *>(nullptr));
            _exit(127);
        }
        close(in_pipe[0]);
        close(out_pipe[1]);
        fcntl(in_pipe[1], F_SETFD, FD_CLOEXEC);
        fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);
        to_child_ = fdopen(in_pipe[1], "w");
        from_child_ = fdopen(out_pipe[0], "r");
        if (to_child_ == nullptr || from_child_ == nullptr) {
            Stop();
            throw OracleError("process oracle: fdopen failed", {});
        }
    }

    void Stop() noexcept {
        if (to_child_ != nullptr) {
            std::fclose(to_child_);
            to_child_ = nullptr;
        }
        if (from_child_ != nullptr) {
            std::fclose(from_child_);
            from_child_ = nullptr;
        }
        if (pid_ > 0) {
            int status = 0;
            waitpid(pid_, &status, 0);
            pid_ = -1;
        }
    }

    std::string command_;
    DomainTransform domain_;
    int output_dim_;
    pid_t pid_ = -1;
    std::FILE *to_child_ = nullptr;
    std::FILE *from_child_ = nullptr;
    mutable std::mutex mutex_;
};

}  // namespace alkiax
