// Copyright 2026 The DQS Authors
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

namespace dqs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree for the requested operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An integer id or index falls outside its valid range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// A documented precondition of an API was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A configuration value is invalid.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A checkpoint or manifest file is malformed.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite value.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace dqs
