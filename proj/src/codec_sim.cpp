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

#include "tdp/codec_sim.hpp"

#include <cmath>
#include <string>

#include "tdp/error.hpp"

namespace tdp::codec_sim {

namespace {

using numerics::Shape;
using numerics::Tensor;

constexpr double kLn2 = 0.6931471805599453;
constexpr double kProbFloor = 8.881784197001252e-16;  // 2^-50

double softplus_inv(double y) { return std::log(std::expm1(y)); }

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

std::string ch_key(std::size_t c, const char* leaf) {
  return "sim.prior.ch" + std::to_string(c) + "." + leaf;
}

Tensor conv_init(Shape shape, Rng& rng) {
  const std::size_t fan_in = shape[1] * shape[2] * shape[3];
  const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
  return Tensor::randn(std::move(shape), rng, s);
}

void check_latent(const Tensor& latent, std::size_t channels,
                  const char* what) {
  if (!latent.defined() || latent.shape().size() != 4 ||
      latent.dim(1) != channels) {
    throw DimensionError(std::string(what) +
                         ": latent must be N x C x H x W with C = " +
                         std::to_string(channels));
  }
}

}  // namespace

QuantLevel dynamic_quant_level(double qp) {
  if (!std::isfinite(qp)) {
    throw ComputeError("dynamic_quant_level: non-finite qp");
  }
  return QuantLevel{std::min(50.0, std::max(1.0, qp))};
}

double step_size(const QuantLevel& level, double latent_unit) {
  return latent_unit * std::exp2((level.f_q - 4.0) / 6.0);
}

Tensor quantize(const Tensor& latent, const QuantLevel& level, QuantMode mode,
                double latent_unit, Rng* rng) {
  if (!latent.defined()) throw GraphError("quantize: undefined latent");
  const double delta = step_size(level, latent_unit);
  if (mode == QuantMode::kTrain) {
    if (!rng) throw ComputeError("quantize: train mode requires an rng");
    std::vector<numerics::real> noise(latent.numel());
    for (auto& v : noise) v = rng->uniform_in(-delta / 2.0, delta / 2.0);
    Tensor n = Tensor::from_data(latent.shape(), std::move(noise));
    return numerics::add(latent, n);
  }
  // Hard rounding; detached, since eval-mode outputs are never backpropagated.
  std::vector<numerics::real> out(latent.numel());
  const auto& v = latent.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = delta * std::round(v[i] / delta);
  }
  return Tensor::from_data(latent.shape(), std::move(out));
}

EntropyModel::EntropyModel(numerics::ParamStore& params, std::size_t channels,
                           Rng& init_rng)
    : channels_(channels) {
  if (channels == 0) throw DimensionError("entropy model needs >= 1 channel");
  ch_.reserve(channels);
  const double w_in = softplus_inv(1.0);
  const double w_mix = softplus_inv(1.0 / static_cast<double>(kUnits));
  for (std::size_t c = 0; c < channels; ++c) {
    ChannelParams p;
    p.w1 = params.create(ch_key(c, "w1"), Tensor::full({kUnits}, w_in));
    p.b1 = params.create(ch_key(c, "b1"),
                         Tensor::uniform({kUnits}, init_rng, -0.5, 0.5));
    p.a1 = params.create(ch_key(c, "a1"), Tensor::zeros({kUnits}));
    p.w2 = params.create(ch_key(c, "w2"),
                         Tensor::full({kUnits, kUnits}, w_mix));
    p.b2 = params.create(ch_key(c, "b2"),
                         Tensor::uniform({kUnits}, init_rng, -0.1, 0.1));
    p.a2 = params.create(ch_key(c, "a2"), Tensor::zeros({kUnits}));
    p.w3 = params.create(ch_key(c, "w3"), Tensor::full({kUnits, 1}, w_mix));
    p.b3 = params.create(ch_key(c, "b3"), Tensor::zeros({1}));
    ch_.push_back(std::move(p));
  }
}

EntropyModel::EntropyModel(numerics::ParamStore& params, std::size_t channels)
    : channels_(channels) {
  ch_.reserve(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    ChannelParams p;
    p.w1 = params.get(ch_key(c, "w1"));
    p.b1 = params.get(ch_key(c, "b1"));
    p.a1 = params.get(ch_key(c, "a1"));
    p.w2 = params.get(ch_key(c, "w2"));
    p.b2 = params.get(ch_key(c, "b2"));
    p.a2 = params.get(ch_key(c, "a2"));
    p.w3 = params.get(ch_key(c, "w3"));
    p.b3 = params.get(ch_key(c, "b3"));
    ch_.push_back(std::move(p));
  }
}

Tensor EntropyModel::cdf(std::size_t channel, const Tensor& values_col) const {
  if (channel >= channels_) throw DimensionError("entropy channel OOB");
  if (!values_col.defined() || values_col.shape().size() != 2 ||
      values_col.dim(1) != 1) {
    throw DimensionError("entropy cdf expects an M x 1 column");
  }
  const ChannelParams& p = ch_[channel];
  using namespace numerics;
  // Stage 1: scalar input fans out to kUnits monotone chains.
  Tensor h = matmul(values_col, reshape(softplus(p.w1), {1, kUnits}));
  h = add_rowvec(h, p.b1);
  h = add(h, mul_rowvec(tanh_of(h), tanh_of(p.a1)));
  // Stage 2: positive mixing keeps monotonicity.
  h = add_rowvec(matmul(h, softplus(p.w2)), p.b2);
  h = add(h, mul_rowvec(tanh_of(h), tanh_of(p.a2)));
  // Stage 3: collapse to one logit per value.
  Tensor out = add_rowvec(matmul(h, softplus(p.w3)), p.b3);
  return sigmoid(out);
}

double EntropyModel::cdf_value(std::size_t channel, double v) const {
  if (channel >= channels_) throw DimensionError("entropy channel OOB");
  const ChannelParams& p = ch_[channel];
  const auto& w1 = p.w1.data();
  const auto& b1 = p.b1.data();
  const auto& a1 = p.a1.data();
  const auto& w2 = p.w2.data();
  const auto& b2 = p.b2.data();
  const auto& a2 = p.a2.data();
  const auto& w3 = p.w3.data();
  const auto& b3 = p.b3.data();
  double h1[kUnits], h2[kUnits];
  for (std::size_t j = 0; j < kUnits; ++j) {
    double h = softplus(w1[j]) * v + b1[j];
    h1[j] = h + std::tanh(a1[j]) * std::tanh(h);
  }
  for (std::size_t j = 0; j < kUnits; ++j) {
    double h = b2[j];
    for (std::size_t i = 0; i < kUnits; ++i) {
      h += h1[i] * softplus(w2[i * kUnits + j]);
    }
    h2[j] = h + std::tanh(a2[j]) * std::tanh(h);
  }
  double logit = b3[0];
  for (std::size_t i = 0; i < kUnits; ++i) logit += h2[i] * softplus(w3[i]);
  return 1.0 / (1.0 + std::exp(-logit));
}

Tensor rate_estimate(const Tensor& quantized_latent, const EntropyModel& model,
                     double delta, std::size_t* clamp_count) {
  check_latent(quantized_latent, model.channels(), "rate_estimate");
  if (!(delta > 0.0)) throw ComputeError("rate_estimate: delta must be > 0");
  using namespace numerics;
  Tensor total;
  std::size_t clamped_total = 0;
  for (std::size_t c = 0; c < model.channels(); ++c) {
    Tensor v = channel_as_column(quantized_latent, c);
    Tensor p = sub(model.cdf(c, add_scalar(v, delta / 2.0)),
                   model.cdf(c, add_scalar(v, -delta / 2.0)));
    std::size_t clamped = 0;
    p = clamp_min(p, kProbFloor, &clamped);
    clamped_total += clamped;
    Tensor bits = mul_scalar(neg(sum(log_of(p))), 1.0 / kLn2);
    total = total.defined() ? add(total, bits) : bits;
  }
  if (clamp_count) *clamp_count = clamped_total;
  return total;
}

SimulatorModel::SimulatorModel(numerics::ParamStore& params,
                               std::size_t channels, Rng& init_rng)
    : channels_(channels),
      a1_w_(params.create("sim.transform.a1.w",
                          conv_init({channels, 1, 3, 3}, init_rng))),
      a1_b_(params.create("sim.transform.a1.b", Tensor::zeros({channels}))),
      a2_w_(params.create("sim.transform.a2.w",
                          conv_init({channels, channels, 3, 3}, init_rng))),
      a2_b_(params.create("sim.transform.a2.b", Tensor::zeros({channels}))),
      s1_w_(params.create("sim.transform.s1.w",
                          conv_init({channels, channels, 3, 3}, init_rng))),
      s1_b_(params.create("sim.transform.s1.b", Tensor::zeros({channels}))),
      s2_w_(params.create("sim.transform.s2.w",
                          conv_init({1, channels, 3, 3}, init_rng))),
      s2_b_(params.create("sim.transform.s2.b", Tensor::zeros({1}))),
      prior_(params, channels, init_rng) {
  if (channels == 0) throw DimensionError("simulator needs >= 1 channel");
}

SimulatorModel::SimulatorModel(numerics::ParamStore& params,
                               std::size_t channels)
    : channels_(channels),
      a1_w_(params.get("sim.transform.a1.w")),
      a1_b_(params.get("sim.transform.a1.b")),
      a2_w_(params.get("sim.transform.a2.w")),
      a2_b_(params.get("sim.transform.a2.b")),
      s1_w_(params.get("sim.transform.s1.w")),
      s1_b_(params.get("sim.transform.s1.b")),
      s2_w_(params.get("sim.transform.s2.w")),
      s2_b_(params.get("sim.transform.s2.b")),
      prior_(params, channels) {}

Tensor SimulatorModel::analysis(const Tensor& x) const {
  if (!x.defined() || x.shape().size() != 4 || x.dim(1) != 1) {
    throw DimensionError("analysis expects an N x 1 x H x W tensor");
  }
  if (x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0 || x.dim(2) < 4 || x.dim(3) < 4) {
    throw DimensionError("analysis needs H, W divisible by 4, got " +
                         numerics::shape_str(x.shape()));
  }
  Tensor h = numerics::relu(numerics::conv2d(x, a1_w_, a1_b_, 2, 1));
  return numerics::conv2d(h, a2_w_, a2_b_, 2, 1);
}

Tensor SimulatorModel::synthesis(const Tensor& latent) const {
  check_latent(latent, channels_, "synthesis");
  Tensor h = numerics::upsample_nearest2x(latent);
  h = numerics::relu(numerics::conv2d(h, s1_w_, s1_b_, 1, 1));
  h = numerics::upsample_nearest2x(h);
  return numerics::conv2d(h, s2_w_, s2_b_, 1, 1);
}

SimResult simulate(const SimulatorModel& model, const Tensor& x_pre,
                   const QuantLevel& level, QuantMode mode, double latent_unit,
                   Rng* rng) {
  SimResult res;
  Tensor latent = model.analysis(x_pre);
  res.delta = step_size(level, latent_unit);
  Tensor q = quantize(latent, level, mode, latent_unit, rng);
  res.rate_bits = rate_estimate(q, model.prior(), res.delta, &res.clamp_count);
  res.reconstruction = model.synthesis(q);
  return res;
}

}  // namespace tdp::codec_sim
