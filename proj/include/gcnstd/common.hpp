// gcnstd/common.hpp

// Copyright 2026 The gcnstd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GCNSTD_COMMON_HPP_
#define GCNSTD_COMMON_HPP_

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gcnstd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic, truncated payload, bad JSON/TSV).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An operation was called with inputs outside its contract.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gcnstd

#endif  // GCNSTD_COMMON_HPP_
