// SPDX-License-Identifier: Apache-2.0
//
// Copyright (C) 2026 relaydof contributors
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
// ------------------------------------------------------------------------

#pragma once

#include <stdexcept>
#include <string>

namespace relaydof {

/// Base class for every failure raised by the library. Precondition
/// violations on plain arguments use std::invalid_argument instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two singular values coincide within the tie tolerance, so the canonical
/// SVD (and everything built on it) is not unique.
class DegenerateSingularValues : public Error {
public:
    using Error::Error;
};

/// The interference-cancellation system has an empty null space.
class NoNontrivialSolution : public Error {
public:
    using Error::Error;
};

/// Every null-space combination tried annihilated a desired column.
class DesiredGainDegenerate : public Error {
public:
    using Error::Error;
};

/// A ratio map needed by the alignment construction is not invertible.
class SingularEffectiveChannel : public Error {
public:
    using Error::Error;
};

/// The zero-forcing receiver cannot separate desired from interference.
class RankDeficient : public Error {
public:
    using Error::Error;
};

/// Configuration rejected; `field()` names the offending entry.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& message)
        : Error(field + ": " + message), field_(std::move(field))
    {
    }

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

} // namespace relaydof
