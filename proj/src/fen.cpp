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

#include "tdp/fen.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tdp/error.hpp"

namespace tdp::fen {

namespace {

using numerics::Tensor;
constexpr std::size_t kDim = FeatureVector::kDim;

}  // namespace

Normalizer Normalizer::fit(
    const std::vector<std::array<double, kDim>>& samples) {
  if (samples.size() < 2) {
    throw DimensionError("normalizer fit needs at least 2 samples, got " +
                         std::to_string(samples.size()));
  }
  Normalizer n;
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (std::size_t c = 0; c < kDim; ++c) {
    double sum = 0.0;
    for (const auto& s : samples) sum += s[c];
    n.mean[c] = sum * inv;
    double var = 0.0;
    for (const auto& s : samples) {
      const double d = s[c] - n.mean[c];
      var += d * d;
    }
    n.std[c] = std::max(std::sqrt(var * inv), 1e-6);
  }
  return n;
}

std::array<double, kDim> Normalizer::normalize(
    const std::array<double, kDim>& x) const {
  std::array<double, kDim> out;
  for (std::size_t c = 0; c < kDim; ++c) out[c] = (x[c] - mean[c]) / std[c];
  return out;
}

std::array<double, kDim> Normalizer::denormalize(
    const std::array<double, kDim>& x) const {
  std::array<double, kDim> out;
  for (std::size_t c = 0; c < kDim; ++c) out[c] = x[c] * std[c] + mean[c];
  return out;
}

std::string Normalizer::to_json_text() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["mean"] = mean;
  j["std"] = std;
  return j.dump(2) + "\n";
}

Normalizer Normalizer::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    Normalizer n;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto std_v = j.at("std").get<std::vector<double>>();
    if (mean.size() != kDim || std_v.size() != kDim) {
      throw DimensionError("normalizer JSON has wrong component count");
    }
    std::copy(mean.begin(), mean.end(), n.mean.begin());
    std::copy(std_v.begin(), std_v.end(), n.std.begin());
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad normalizer JSON: ") + e.what(), 0);
  }
}

void Normalizer::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write normalizer to " + path);
  os << to_json_text();
}

Normalizer Normalizer::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read normalizer from " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_json_text(buf.str());
}

FenModel::FenModel(numerics::ParamStore& params, std::size_t hidden,
                   Rng& init_rng)
    : hidden_(hidden) {
  if (hidden == 0) throw DimensionError("fen hidden width must be >= 1");
  const double s1 = std::sqrt(2.0 / static_cast<double>(kDim));
  const double s2 = std::sqrt(2.0 / static_cast<double>(hidden));
  w1_ = params.create("fen.w1", Tensor::randn({kDim, hidden}, init_rng, s1));
  b1_ = params.create("fen.b1", Tensor::zeros({hidden}));
  w2_ = params.create("fen.w2", Tensor::randn({hidden, 1}, init_rng, s2));
  b2_ = params.create("fen.b2", Tensor::zeros({1}));
}

FenModel::FenModel(numerics::ParamStore& params, std::size_t hidden)
    : hidden_(hidden),
      w1_(params.get("fen.w1")),
      b1_(params.get("fen.b1")),
      w2_(params.get("fen.w2")),
      b2_(params.get("fen.b2")) {
  if (w1_.shape() != numerics::Shape{kDim, hidden}) {
    throw DimensionError("fen.w1 shape does not match hidden width " +
                         std::to_string(hidden));
  }
}

Tensor FenModel::forward_normalized(
    const std::array<double, kDim>& normalized) const {
  std::vector<numerics::real> row(normalized.begin(), normalized.end());
  Tensor x = Tensor::from_data({1, kDim}, std::move(row));
  Tensor h = numerics::relu(
      numerics::add_rowvec(numerics::matmul(x, w1_), b1_));
  Tensor out = numerics::add_rowvec(numerics::matmul(h, w2_), b2_);
  return numerics::reshape(numerics::sigmoid(out), {1});
}

Tensor fen_forward(const FenModel& model, const FeatureVector& features,
                   const Normalizer& normalizer) {
  const auto raw = features.to_array();
  for (double v : raw) {
    if (!std::isfinite(v)) {
      throw ComputeError("non-finite feature component passed to FEN");
    }
  }
  return model.forward_normalized(normalizer.normalize(raw));
}

}  // namespace tdp::fen
