// Copyright (c) the tdp authors.
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

#ifndef TDP_ERROR_HPP_
#define TDP_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tdp {

// Base of all tdp errors. The CLI maps UsageError to exit code 2 and every
// other Error to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data; carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t byte_offset)
      : Error(msg + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Shape or geometry violations (frame smaller than a kernel, mismatched
// planes, incompatible tensor shapes).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Filesystem and subprocess failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// QP probe could not run and no fallback was enabled.
class ProbeError : public Error {
 public:
  using Error::Error;
};

// Autodiff contract violations: backward on a non-scalar, missing grads, ...
class GraphError : public Error {
 public:
  using Error::Error;
};

// Numeric failures at runtime (non-finite loss, degenerate inputs).
class ComputeError : public Error {
 public:
  using Error::Error;
};

// Bad flags, bad config files, missing required inputs. Exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace tdp

#endif  // TDP_ERROR_HPP_
