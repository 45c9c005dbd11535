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

#include <optional>

#include "tdp/config.hpp"
#include "tdp/fen.hpp"
#include "tdp/optim.hpp"
#include "tdp/rng.hpp"
#include "tdp/tensor.hpp"
#include "tdp/video_io.hpp"

namespace tdp::dpn {

// Residual mask CNN: 3x3 head conv, four residual blocks (conv-ReLU-conv with
// identity skip), 3x3 tail conv, tanh bound. Single-channel in and out, same
// spatial size (all convs pad 1). Parameters live under "dpn.*".
class DpnModel {
 public:
  static constexpr std::size_t kBlocks = 4;

  DpnModel(numerics::ParamStore& params, std::size_t channels, Rng& init_rng);
  DpnModel(numerics::ParamStore& params, std::size_t channels);

  std::size_t channels() const { return channels_; }

  // x: N x 1 x H x W with H, W >= 16. Returns the mask x_m, same shape,
  // values in [-1, 1].
  numerics::Tensor mask(const numerics::Tensor& x) const;

 private:
  std::size_t channels_;
  numerics::Tensor head_w_, head_b_;
  numerics::Tensor block_w_[kBlocks][2];
  numerics::Tensor block_b_[kBlocks][2];
  numerics::Tensor tail_w_, tail_b_;
};

numerics::Tensor dpn_mask(const DpnModel& model, const numerics::Tensor& x);

// P(x) = f_d * x_m + x. No clamping here; [0,1] clamping happens only when a
// frame is exported back to integer samples.
numerics::Tensor apply_intensity(const numerics::Tensor& x,
                                 const numerics::Tensor& x_m,
                                 const numerics::Tensor& f_d);
numerics::Tensor apply_intensity(const numerics::Tensor& x,
                                 const numerics::Tensor& x_m, double f_d);

struct PreprocessOutcome {
  video_io::Clip clip;
  double f_d = 0.0;  // intensity actually applied
  double qp = 0.0;   // probe QP behind the feature vector
};

// Inference path: per-clip f_d from the FEN (or a fixed/forced value), mask
// per frame, luma replaced by clamped P(x) at source bit depth, chroma kept.
// force_f_d wins over the config toggle; f_d == 0 short-circuits to a
// sample-exact copy.
PreprocessOutcome preprocess_clip(const fen::FenModel& fen_model,
                                  const fen::Normalizer& normalizer,
                                  const DpnModel& dpn_model,
                                  const video_io::Clip& clip, double probe_qp,
                                  const TdpConfig& cfg,
                                  std::optional<double> force_f_d = {});

}  // namespace tdp::dpn
