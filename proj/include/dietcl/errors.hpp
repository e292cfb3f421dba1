// Copyright 2026 The Authors.
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

namespace dietcl {

// Exception taxonomy used across the library. Callers that need to
// distinguish "bad caller input" from "broken internal contract" catch the
// specific type; everything derives from Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/layer dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied value violates a precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

// An internal invariant or call-ordering contract was broken.
class ContractError : public Error {
 public:
  using Error::Error;
};

// The class-incremental protocol was violated (e.g. overlapping task labels).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// A config / dataset / instance file could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A parsed file is well-formed but structurally inconsistent.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Filesystem trouble; message carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or gradient.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace dietcl
