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

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace alkiax {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (negative distance, y >= 1, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

class DuplicatePointError : public Error {
public:
    using Error::Error;
};

/// Cholesky factorization failed; the matrix is numerically not positive definite.
class IllConditionedError : public Error {
public:
    using Error::Error;
};

class SingularMatrixError : public Error {
public:
    using Error::Error;
};

class OutOfDomainError : public Error {
public:
    using Error::Error;
};

/// Rejected configuration (bad hyperparameters, failed condition precheck, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The oracle threw or returned garbage; carries the query point.
class OracleError : public Error {
public:
    OracleError(const std::string &what, std::vector<double> point)
        : Error(Format(what, point)), point_(std::move(point)) {}

    [[nodiscard]] const std::vector<double> &point() const { return point_; }

private:
    static std::string Format(const std::string &what, const std::vector<double> &point) {
        std::ostringstream os;
        os.precision(17);
        os << what << " at x = (";
        for (std::size_t i = 0; i < point.size(); ++i) { os << (i ? ", " : "") << point[i]; }
        os << ")";
        return os.str();
    }

    std::vector<double> point_;
};

class MaxDepthExceededError : public Error {
public:
    MaxDepthExceededError(const std::string &what, std::vector<std::string> offenders)
        : Error(what), offenders_(std::move(offenders)) {}

    [[nodiscard]] const std::vector<std::string> &offenders() const { return offenders_; }

private:
    std::vector<std::string> offenders_;
};

/// Model file errors.
class ModelFormatError : public Error {
public:
    using Error::Error;
};

class VersionMismatchError : public ModelFormatError {
public:
    using ModelFormatError::ModelFormatError;
};

class CorruptModelError : public ModelFormatError {
public:
    using ModelFormatError::ModelFormatError;
};

class InvariantViolationError : public ModelFormatError {
public:
    using ModelFormatError::ModelFormatError;
};

}  // namespace alkiax
