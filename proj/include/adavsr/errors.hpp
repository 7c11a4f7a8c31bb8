// Copyright 2026 The adavsr Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace adavsr {

/// Bad user-supplied data: malformed files, too-short waveforms, zero-power
/// signals. The CLI maps these to exit code 1.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor shapes that do not compose.
class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

/// Invalid hyperparameters or config files.
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

/// NaN/Inf produced by a forward op, or training divergence. Exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse, e.g. calling backward() on a non-scalar.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace adavsr
