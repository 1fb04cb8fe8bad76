// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DORF_ERROR_HPP
#define DORF_ERROR_HPP

#include <stdexcept>
#include <string>

namespace dorf {

// Bad arguments or malformed input data (shape, range, non-finite values).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// File/container level problems: bad magic, truncated payloads, unreadable paths.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Singular systems and similar numerical failures.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Divergence during classifier training.
class TrainingError : public NumericError {
public:
    TrainingError(const std::string& what, std::size_t epoch)
        : NumericError(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

} // namespace dorf

#endif
