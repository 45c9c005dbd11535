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

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tdp/tensor.hpp"

namespace tdp::numerics {

// Named parameter registry shared by the trainable networks. Parameter order
// is the lexicographic name order of the map, which keeps checkpoints and
// optimizer sweeps deterministic regardless of registration order.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Tensor init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t total_scalars() const;

  std::vector<std::string> names() const;

  // Allocates (zeroed) grad buffers for every parameter. Called before
  // backward() so that parameters untouched by the active graph still carry a
  // well-defined zero gradient.
  void zero_grads();

  // Toggles trainability for every parameter whose name starts with prefix
  // (empty prefix matches all). Frozen parameters neither accumulate
  // gradients nor receive optimizer updates.
  void set_trainable(const std::string& prefix, bool trainable);

  std::map<std::string, Tensor>& entries() { return params_; }
  const std::map<std::string, Tensor>& entries() const { return params_; }

  // FNV-1a over names, shapes and raw values; used by the resume tests to
  // assert bitwise-identical parameter state.
  std::uint64_t content_hash() const;

 private:
  std::map<std::string, Tensor> params_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Classic Adam. First/second moment buffers live alongside the parameters so
// they serialize into the same checkpoint container.
class Adam {
 public:
  Adam(ParamStore& params, AdamConfig cfg);

  // Applies one update from the gradients currently stored on the parameters.
  // Every trainable parameter must have a populated grad buffer (see
  // ParamStore::zero_grads), otherwise the step throws GraphError. Frozen
  // parameters are skipped.
  void step();

  std::uint64_t t() const { return t_; }

  // Checkpoint plumbing: moments keyed by parameter name.
  const std::map<std::string, std::vector<real>>& m() const { return m_; }
  const std::map<std::string, std::vector<real>>& v() const { return v_; }
  void restore(std::map<std::string, std::vector<real>> m,
               std::map<std::string, std::vector<real>> v, std::uint64_t t);

 private:
  ParamStore& params_;
  AdamConfig cfg_;
  std::map<std::string, std::vector<real>> m_;
  std::map<std::string, std::vector<real>> v_;
  std::uint64_t t_ = 0;
};

// Flat binary tensor container used for checkpoints. Little-endian, versioned
// via the magic string; values are raw float64.
struct CheckpointEntry {
  Shape shape;
  std::vector<real> values;
};

using CheckpointMap = std::map<std::string, CheckpointEntry>;

void save_checkpoint(const std::string& path, const CheckpointMap& entries);
CheckpointMap load_checkpoint(const std::string& path);

// Bundles parameters + optimizer state under reserved "opt." key prefixes.
CheckpointMap checkpoint_from_state(const ParamStore& params, const Adam* opt,
                                    std::uint64_t step);

// Restores parameters (strict: names and shapes must match the store) and, if
// `opt` is non-null and the checkpoint carries moments, the optimizer state.
// Returns the stored step counter.
std::uint64_t state_from_checkpoint(const CheckpointMap& entries,
                                    ParamStore& params, Adam* opt);

}  // namespace tdp::numerics
