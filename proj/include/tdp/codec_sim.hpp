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

#include <cstddef>

#include "tdp/optim.hpp"
#include "tdp/rng.hpp"
#include "tdp/tensor.hpp"

namespace tdp::codec_sim {

struct QuantLevel {
  double f_q = 1.0;  // always in [1, 50]
};

// f_q = clip(qp) into [1, 50]. Idempotent and monotone; throws ComputeError
// on non-finite input.
QuantLevel dynamic_quant_level(double qp);

// Quantizer step size: latent_unit * 2^((f_q - 4) / 6), i.e. the step doubles
// every 6 quant-level units, mirroring codec QP-to-stepsize behavior.
double step_size(const QuantLevel& level, double latent_unit);

enum class QuantMode { kTrain, kEval };

// Train mode adds i.i.d. uniform noise in [-delta/2, delta/2] (differentiable
// proxy, identity gradient). Eval mode rounds to the nearest multiple of
// delta and detaches from the graph. rng is required in train mode.
numerics::Tensor quantize(const numerics::Tensor& latent,
                          const QuantLevel& level, QuantMode mode,
                          double latent_unit, Rng* rng);

// Per-channel monotone CDF network (factorized prior). Three stages of
// softplus-constrained scalar chains with tanh gating, sigmoid output, so the
// CDF is smooth, strictly increasing and spans (0,1). Parameters live under
// "sim.prior.*".
class EntropyModel {
 public:
  static constexpr std::size_t kUnits = 3;

  EntropyModel(numerics::ParamStore& params, std::size_t channels,
               Rng& init_rng);
  EntropyModel(numerics::ParamStore& params, std::size_t channels);

  std::size_t channels() const { return channels_; }

  // CDF of one channel, applied elementwise to a column vector (M x 1).
  numerics::Tensor cdf(std::size_t channel,
                       const numerics::Tensor& values_col) const;

  // Plain-number CDF for a single value; used by sampling and by oracles.
  double cdf_value(std::size_t channel, double v) const;

 private:
  std::size_t channels_;
  struct ChannelParams {
    numerics::Tensor w1, b1, a1;  // 1 -> kUnits
    numerics::Tensor w2, b2, a2;  // kUnits -> kUnits
    numerics::Tensor w3, b3;      // kUnits -> 1
  };
  std::vector<ChannelParams> ch_;
};

// Total estimated bits for a quantized latent (N x C x H x W):
//   sum over values v of -log2(CDF(v + delta/2) - CDF(v - delta/2)),
// with each probability floored at 2^-50. clamp_count reports how many
// values hit the floor.
numerics::Tensor rate_estimate(const numerics::Tensor& quantized_latent,
                               const EntropyModel& model, double delta,
                               std::size_t* clamp_count = nullptr);

// Two-conv analysis (stride 2 each, ReLU between) and mirrored synthesis
// (nearest-neighbor upsample + conv). Spatial dims must be divisible by 4.
// Parameters live under "sim.transform.*".
class SimulatorModel {
 public:
  SimulatorModel(numerics::ParamStore& params, std::size_t channels,
                 Rng& init_rng);
  SimulatorModel(numerics::ParamStore& params, std::size_t channels);

  std::size_t channels() const { return channels_; }

  numerics::Tensor analysis(const numerics::Tensor& x) const;
  numerics::Tensor synthesis(const numerics::Tensor& latent) const;

  const EntropyModel& prior() const { return prior_; }

 private:
  std::size_t channels_;
  numerics::Tensor a1_w_, a1_b_, a2_w_, a2_b_;
  numerics::Tensor s1_w_, s1_b_, s2_w_, s2_b_;
  EntropyModel prior_;
};

struct SimResult {
  numerics::Tensor reconstruction;  // same shape as the input
  numerics::Tensor rate_bits;       // scalar
  double delta = 0.0;
  std::size_t clamp_count = 0;
};

// Full simulator pass: analysis -> quantize at f_q -> rate estimate +
// synthesis. Differentiable end to end in train mode.
SimResult simulate(const SimulatorModel& model, const numerics::Tensor& x_pre,
                   const QuantLevel& level, QuantMode mode, double latent_unit,
                   Rng* rng);

}  // namespace tdp::codec_sim
