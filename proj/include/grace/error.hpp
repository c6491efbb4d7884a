// Copyright 2026 The GRACE Authors
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

#ifndef GRACE_ERROR_HPP
#define GRACE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace grace {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Input data violates a documented invariant (non-finite values, bad shapes,
// missing variants, unbalanced grids).
class ValidationError : public Error {
public:
  using Error::Error;
};

// On-disk bytes do not match the declared format (magic, version).
class FormatError : public Error {
public:
  using Error::Error;
};

// File is structurally recognized but internally inconsistent (truncation).
class CorruptionError : public Error {
public:
  using Error::Error;
};

// Filesystem-level failure while reading or writing.
class PersistenceError : public Error {
public:
  using Error::Error;
};

// External evaluator spoke out of contract (missing fields, out-of-range
// scores, garbage lines).
class ProtocolError : public Error {
public:
  using Error::Error;
};

// External evaluator process failed (timeout after retries, died).
class EvaluatorError : public Error {
public:
  using Error::Error;
};

// A statistic was requested on too little data to be meaningful.
class InsufficientDataError : public Error {
public:
  using Error::Error;
};

} // namespace grace

#endif // GRACE_ERROR_HPP
