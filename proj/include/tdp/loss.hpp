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
#include <vector>

#include "tdp/tensor.hpp"

namespace tdp::loss {

// QP-driven RD trade-off: log10(lambda) = k * qp + b, with qp clamped to
// [0, 50] and the result clamped into [lambda_min, lambda_max].
struct LambdaMap {
  double k = 0.12;
  double b = -8.0;
  double lambda_min = 1e-8;
  double lambda_max = 1e-2;
};

double lambda_adapt(double qp, const LambdaMap& map = LambdaMap{});

struct MsSsimOptions {
  // Canonical 5-scale weights, finest first. When fewer scales fit, the
  // leading weights are kept and renormalized to sum 1.
  std::vector<double> weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Number of usable scales for an H x W image: scales are generated by
// ceil-halving and a scale is usable while both dims still fit the window.
std::size_t ms_ssim_scale_count(std::size_t h, std::size_t w,
                                const MsSsimOptions& opts = MsSsimOptions{});

// Single-scale SSIM: mean of the luminance * contrast-structure map computed
// with a Gaussian window, valid convolution. Inputs are H x W or N x 1 x H x W
// in the normalized [0,1] domain (dynamic range L = 1). Differentiable.
numerics::Tensor ssim(const numerics::Tensor& a, const numerics::Tensor& b,
                      const MsSsimOptions& opts = MsSsimOptions{});

// Multi-scale SSIM: contrast-structure means at the finer scales, full SSIM
// at the coarsest, combined as a weighted geometric mean. When the input is a
// batch, per-scale maps are averaged over the whole batch before combining.
numerics::Tensor ms_ssim(const numerics::Tensor& a, const numerics::Tensor& b,
                         const MsSsimOptions& opts = MsSsimOptions{});

struct RdLossTerms {
  numerics::Tensor distortion;  // scalar, 1 - MS-SSIM
  numerics::Tensor rate_bpp;    // scalar, bits per pixel
  double lambda = 0.0;
  numerics::Tensor total;       // scalar, distortion + lambda * rate_bpp
};

// Eq-of-record RD objective. x is the ORIGINAL source, recon the simulator
// output; rate_bits the total estimated bits over pixel_count pixels. Throws
// ComputeError when any term comes out non-finite.
RdLossTerms rd_loss_with_lambda(const numerics::Tensor& x,
                                const numerics::Tensor& recon,
                                const numerics::Tensor& rate_bits,
                                double lambda, std::size_t pixel_count,
                                const MsSsimOptions& opts = MsSsimOptions{});

// Same, with lambda derived from qp through the default map.
RdLossTerms rd_loss(const numerics::Tensor& x, const numerics::Tensor& recon,
                    const numerics::Tensor& rate_bits, double qp,
                    std::size_t pixel_count,
                    const MsSsimOptions& opts = MsSsimOptions{});

}  // namespace tdp::loss
