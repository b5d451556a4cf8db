// Copyright 2026 The emoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EMOALIGN_COMMON_H_
#define EMOALIGN_COMMON_H_

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace emoalign {

// Row-major so that one row is one frame / token / query.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Input that violates a documented precondition (bad config, malformed file,
// unknown token). The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numeric check failed (NaN loss, gradient mismatch). CLI exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace emoalign

#endif  // EMOALIGN_COMMON_H_
