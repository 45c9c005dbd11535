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

#include <array>
#include <string>
#include <vector>

#include "tdp/optim.hpp"
#include "tdp/preanalysis.hpp"
#include "tdp/rng.hpp"
#include "tdp/tensor.hpp"

namespace tdp::fen {

using preanalysis::FeatureVector;

// Per-component affine standardization fitted on training features.
struct Normalizer {
  std::array<double, FeatureVector::kDim> mean{};
  std::array<double, FeatureVector::kDim> std{};

  Normalizer() { std.fill(1.0); }

  // Fits component-wise mean and population stddev; stddev floored at 1e-6.
  // Requires at least 2 samples.
  static Normalizer fit(
      const std::vector<std::array<double, FeatureVector::kDim>>& samples);

  std::array<double, FeatureVector::kDim> normalize(
      const std::array<double, FeatureVector::kDim>& x) const;
  std::array<double, FeatureVector::kDim> denormalize(
      const std::array<double, FeatureVector::kDim>& x) const;

  std::string to_json_text() const;
  static Normalizer from_json_text(const std::string& text);
  void save(const std::string& path) const;
  static Normalizer load(const std::string& path);
};

// Two-layer MLP (7 -> hidden -> 1), ReLU hidden, sigmoid output. Produces the
// processing intensity f_d in (0,1). Parameters are registered in the shared
// store under "fen.*".
class FenModel {
 public:
  FenModel(numerics::ParamStore& params, std::size_t hidden, Rng& init_rng);

  // Re-binds to parameters already present in the store (checkpoint load).
  FenModel(numerics::ParamStore& params, std::size_t hidden);

  std::size_t hidden() const { return hidden_; }

  // Differentiable forward pass on an already-normalized feature array.
  numerics::Tensor forward_normalized(
      const std::array<double, FeatureVector::kDim>& normalized) const;

 private:
  std::size_t hidden_;
  numerics::Tensor w1_, b1_, w2_, b2_;
};

// Normalizes and runs the MLP. Throws ComputeError on non-finite features.
numerics::Tensor fen_forward(const FenModel& model,
                             const FeatureVector& features,
                             const Normalizer& normalizer);

}  // namespace tdp::fen
