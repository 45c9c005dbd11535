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
#include <string>
#include <vector>

namespace tdp {

// One declarative knob set for the whole pipeline. Serialized as flat JSON
// (schema_version 1); unknown keys are rejected so typos fail loudly.
struct TdpConfig {
  // Control-scheme toggles. When a toggle is off the corresponding fixed_*
  // value is used instead of the dynamic estimate.
  bool enable_dpi = true;
  bool enable_dql = true;
  bool enable_dlamt = true;
  double fixed_f_d = 1.0;
  double fixed_f_q = 30.0;
  double fixed_lambda = 1e-4;

  // Network widths.
  std::size_t fen_hidden = 16;
  std::size_t dpn_channels = 32;
  std::size_t sim_channels = 16;

  // RD trade-off map: log10(lambda) = lambda_k * qp + lambda_b, clamped to
  // (lambda_min, lambda_max].
  double lambda_k = 0.12;
  double lambda_b = -8.0;
  double lambda_min = 1e-8;
  double lambda_max = 1e-2;

  // Quantizer step map: delta(f_q) = latent_unit * 2^((f_q - 4) / 6).
  double latent_unit = 1.0 / 64.0;

  // MS-SSIM scale weights, coarsest last; renormalized when scales drop.
  std::vector<double> msssim_weights = {0.0448, 0.2856, 0.3001, 0.2363,
                                        0.1333};

  // Training loop.
  double lr = 1e-4;
  std::size_t steps = 2000;
  std::uint64_t seed = 1234;
  std::size_t patch_size = 64;
  std::size_t samples_per_clip = 4;
  std::size_t checkpoint_every = 100;
  bool freeze_simulator = false;

  // Probe and evaluation.
  double probe_bitrate = 1500.0;
  std::vector<double> bitrate_ladder = {1000.0, 2500.0, 4000.0, 5000.0};

  std::size_t jobs = 1;

  // Throws UsageError when any field is out of its documented range.
  void validate() const;

  static TdpConfig from_json_text(const std::string& text);
  static TdpConfig from_json_file(const std::string& path);
  std::string to_json_text() const;
};

}  // namespace tdp
