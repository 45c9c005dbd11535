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

#include "tdp/loss.hpp"

#include <algorithm>
#include <cmath>

#include "tdp/error.hpp"

namespace tdp::loss {

namespace {

using numerics::Shape;
using numerics::Tensor;

constexpr double kPowFloor = 1e-12;

double lambda_clamp(double v, const LambdaMap& map) {
  return std::min(map.lambda_max, std::max(map.lambda_min, v));
}

Tensor as_nchw(const Tensor& t, const char* what) {
  if (!t.defined()) throw DimensionError(std::string(what) + ": undefined");
  const Shape& s = t.shape();
  if (s.size() == 2) return numerics::reshape(t, {1, 1, s[0], s[1]});
  if (s.size() == 4 && s[1] == 1) return t;
  throw DimensionError(std::string(what) +
                       ": expected H x W or N x 1 x H x W, got " +
                       numerics::shape_str(s));
}

Tensor gaussian_window(std::size_t window, double sigma) {
  std::vector<numerics::real> g1(window);
  const double c = (static_cast<double>(window) - 1.0) / 2.0;
  double norm = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    g1[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    norm += g1[i];
  }
  for (auto& v : g1) v /= norm;
  std::vector<numerics::real> g2(window * window);
  for (std::size_t y = 0; y < window; ++y)
    for (std::size_t x = 0; x < window; ++x) g2[y * window + x] = g1[y] * g1[x];
  return Tensor::from_data({1, 1, window, window}, std::move(g2));
}

struct SsimMaps {
  Tensor luminance;
  Tensor contrast;
};

SsimMaps ssim_maps(const Tensor& a, const Tensor& b, const Tensor& win,
                   const MsSsimOptions& opts) {
  using namespace numerics;
  const double c1 = opts.k1 * opts.k1;
  const double c2 = opts.k2 * opts.k2;
  Tensor mu_a = conv2d(a, win, Tensor{});
  Tensor mu_b = conv2d(b, win, Tensor{});
  Tensor mu_aa = square(mu_a);
  Tensor mu_bb = square(mu_b);
  Tensor mu_ab = mul(mu_a, mu_b);
  Tensor var_a = sub(conv2d(mul(a, a), win, Tensor{}), mu_aa);
  Tensor var_b = sub(conv2d(mul(b, b), win, Tensor{}), mu_bb);
  Tensor cov = sub(conv2d(mul(a, b), win, Tensor{}), mu_ab);
  SsimMaps maps;
  maps.luminance =
      divide(add_scalar(mul_scalar(mu_ab, 2.0), c1),
             add_scalar(add(mu_aa, mu_bb), c1));
  maps.contrast = divide(add_scalar(mul_scalar(cov, 2.0), c2),
                         add_scalar(add(var_a, var_b), c2));
  return maps;
}

}  // namespace

double lambda_adapt(double qp, const LambdaMap& map) {
  if (!std::isfinite(qp)) throw ComputeError("lambda_adapt: non-finite qp");
  const double q = std::min(50.0, std::max(0.0, qp));
  return lambda_clamp(std::pow(10.0, map.k * q + map.b), map);
}

std::size_t ms_ssim_scale_count(std::size_t h, std::size_t w,
                                const MsSsimOptions& opts) {
  std::size_t scales = 0;
  while (h >= opts.window && w >= opts.window &&
         scales < opts.weights.size()) {
    ++scales;
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  return scales;
}

numerics::Tensor ssim(const Tensor& a, const Tensor& b,
                      const MsSsimOptions& opts) {
  Tensor x = as_nchw(a, "ssim");
  Tensor y = as_nchw(b, "ssim");
  if (x.shape() != y.shape()) {
    throw DimensionError("ssim: shape mismatch " +
                         numerics::shape_str(x.shape()) + " vs " +
                         numerics::shape_str(y.shape()));
  }
  if (x.dim(2) < opts.window || x.dim(3) < opts.window) {
    throw DimensionError("ssim: image smaller than the window");
  }
  const Tensor win = gaussian_window(opts.window, opts.sigma);
  const SsimMaps maps = ssim_maps(x, y, win, opts);
  return numerics::mean(numerics::mul(maps.luminance, maps.contrast));
}

numerics::Tensor ms_ssim(const Tensor& a, const Tensor& b,
                         const MsSsimOptions& opts) {
  using namespace numerics;
  Tensor x = as_nchw(a, "ms_ssim");
  Tensor y = as_nchw(b, "ms_ssim");
  if (x.shape() != y.shape()) {
    throw DimensionError("ms_ssim: shape mismatch " + shape_str(x.shape()) +
                         " vs " + shape_str(y.shape()));
  }
  const std::size_t scales = ms_ssim_scale_count(x.dim(2), x.dim(3), opts);
  if (scales == 0) {
    throw DimensionError("ms_ssim: image too small for even one scale");
  }
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < scales; ++i) weight_sum += opts.weights[i];

  const Tensor win = gaussian_window(opts.window, opts.sigma);
  Tensor score;
  for (std::size_t s = 0; s < scales; ++s) {
    const SsimMaps maps = ssim_maps(x, y, win, opts);
    const double w = opts.weights[s] / weight_sum;
    Tensor factor;
    if (s + 1 == scales) {
      factor = mean(mul(maps.luminance, maps.contrast));
    } else {
      factor = mean(maps.contrast);
      x = avg_pool2x2(x);
      y = avg_pool2x2(y);
    }
    // clamp keeps the fractional power defined when a mean dips negative
    factor = pow_const(clamp_min(factor, kPowFloor), w);
    score = score.defined() ? mul(score, factor) : factor;
  }
  return score;
}

RdLossTerms rd_loss_with_lambda(const Tensor& x, const Tensor& recon,
                                const Tensor& rate_bits, double lambda,
                                std::size_t pixel_count,
                                const MsSsimOptions& opts) {
  if (!rate_bits.defined() || rate_bits.numel() != 1) {
    throw DimensionError("rd_loss: rate_bits must be scalar");
  }
  if (pixel_count == 0) throw DimensionError("rd_loss: zero pixel count");
  RdLossTerms terms;
  terms.lambda = lambda;
  terms.distortion =
      numerics::add_scalar(numerics::neg(ms_ssim(recon, x, opts)), 1.0);
  terms.rate_bpp = numerics::mul_scalar(
      rate_bits, 1.0 / static_cast<double>(pixel_count));
  terms.total = numerics::add(
      terms.distortion, numerics::mul_scalar(terms.rate_bpp, lambda));
  if (!terms.distortion.all_finite() || !terms.rate_bpp.all_finite() ||
      !terms.total.all_finite()) {
    throw ComputeError(
        "rd_loss: non-finite loss terms (D=" +
        std::to_string(terms.distortion.value()) +
        ", R=" + std::to_string(terms.rate_bpp.value()) +
        ", lambda=" + std::to_string(lambda) + ")");
  }
  return terms;
}

RdLossTerms rd_loss(const Tensor& x, const Tensor& recon,
                    const Tensor& rate_bits, double qp,
                    std::size_t pixel_count, const MsSsimOptions& opts) {
  return rd_loss_with_lambda(x, recon, rate_bits, lambda_adapt(qp),
                             pixel_count, opts);
}

}  // namespace tdp::loss
