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

#include "tdp/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tdp/error.hpp"

namespace tdp {

namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

void require_range(bool ok, const std::string& what) {
  if (!ok) throw UsageError("config: " + what);
}

}  // namespace

void TdpConfig::validate() const {
  require_range(std::isfinite(fixed_f_d) && fixed_f_d >= 0.0 && fixed_f_d <= 1.0,
                "fixed_f_d must be in [0,1]");
  require_range(std::isfinite(fixed_f_q) && fixed_f_q >= 1.0 && fixed_f_q <= 50.0,
                "fixed_f_q must be in [1,50]");
  require_range(std::isfinite(fixed_lambda) && fixed_lambda > lambda_min &&
                    fixed_lambda <= lambda_max,
                "fixed_lambda must be in (lambda_min, lambda_max]");
  require_range(lambda_min > 0.0 && lambda_max > lambda_min,
                "lambda bounds must satisfy 0 < lambda_min < lambda_max");
  require_range(lambda_k > 0.0, "lambda_k must be positive");
  require_range(latent_unit > 0.0, "latent_unit must be positive");
  require_range(fen_hidden >= 1, "fen_hidden must be >= 1");
  require_range(dpn_channels >= 1, "dpn_channels must be >= 1");
  require_range(sim_channels >= 1, "sim_channels must be >= 1");
  require_range(!msssim_weights.empty(), "msssim_weights must be nonempty");
  for (double w : msssim_weights) {
    require_range(std::isfinite(w) && w > 0.0,
                  "msssim_weights must be positive");
  }
  require_range(std::isfinite(lr) && lr > 0.0, "lr must be positive");
  require_range(patch_size >= 16, "patch_size must be >= 16");
  require_range(samples_per_clip >= 1, "samples_per_clip must be >= 1");
  require_range(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  require_range(probe_bitrate > 0.0, "probe_bitrate must be positive");
  require_range(!bitrate_ladder.empty(), "bitrate_ladder must be nonempty");
  for (double b : bitrate_ladder) {
    require_range(std::isfinite(b) && b > 0.0,
                  "bitrate_ladder entries must be positive");
  }
  require_range(jobs >= 1, "jobs must be >= 1");
}

TdpConfig TdpConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config: top level must be an object");

  TdpConfig cfg;
  const std::set<std::string> known = {
      "schema_version", "enable_dpi",       "enable_dql",
      "enable_dlamt",   "fixed_f_d",        "fixed_f_q",
      "fixed_lambda",   "fen_hidden",       "dpn_channels",
      "sim_channels",   "lambda_k",         "lambda_b",
      "lambda_min",     "lambda_max",       "latent_unit",
      "msssim_weights", "lr",               "steps",
      "seed",           "patch_size",       "samples_per_clip",
      "checkpoint_every", "freeze_simulator", "probe_bitrate",
      "bitrate_ladder", "jobs",
  };
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw UsageError("config: unknown key '" + key + "'");
    }
    (void)value;
  }

  try {
    if (j.contains("schema_version") &&
        j["schema_version"].get<int>() != kSchemaVersion) {
      throw UsageError("config: unsupported schema_version");
    }
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    get("enable_dpi", cfg.enable_dpi);
    get("enable_dql", cfg.enable_dql);
    get("enable_dlamt", cfg.enable_dlamt);
    get("fixed_f_d", cfg.fixed_f_d);
    get("fixed_f_q", cfg.fixed_f_q);
    get("fixed_lambda", cfg.fixed_lambda);
    get("fen_hidden", cfg.fen_hidden);
    get("dpn_channels", cfg.dpn_channels);
    get("sim_channels", cfg.sim_channels);
    get("lambda_k", cfg.lambda_k);
    get("lambda_b", cfg.lambda_b);
    get("lambda_min", cfg.lambda_min);
    get("lambda_max", cfg.lambda_max);
    get("latent_unit", cfg.latent_unit);
    get("msssim_weights", cfg.msssim_weights);
    get("lr", cfg.lr);
    get("steps", cfg.steps);
    get("seed", cfg.seed);
    get("patch_size", cfg.patch_size);
    get("samples_per_clip", cfg.samples_per_clip);
    get("checkpoint_every", cfg.checkpoint_every);
    get("freeze_simulator", cfg.freeze_simulator);
    get("probe_bitrate", cfg.probe_bitrate);
    get("bitrate_ladder", cfg.bitrate_ladder);
    get("jobs", cfg.jobs);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: type mismatch: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TdpConfig TdpConfig::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_json_text(buf.str());
}

std::string TdpConfig::to_json_text() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["enable_dpi"] = enable_dpi;
  j["enable_dql"] = enable_dql;
  j["enable_dlamt"] = enable_dlamt;
  j["fixed_f_d"] = fixed_f_d;
  j["fixed_f_q"] = fixed_f_q;
  j["fixed_lambda"] = fixed_lambda;
  j["fen_hidden"] = fen_hidden;
  j["dpn_channels"] = dpn_channels;
  j["sim_channels"] = sim_channels;
  j["lambda_k"] = lambda_k;
  j["lambda_b"] = lambda_b;
  j["lambda_min"] = lambda_min;
  j["lambda_max"] = lambda_max;
  j["latent_unit"] = latent_unit;
  j["msssim_weights"] = msssim_weights;
  j["lr"] = lr;
  j["steps"] = steps;
  j["seed"] = seed;
  j["patch_size"] = patch_size;
  j["samples_per_clip"] = samples_per_clip;
  j["checkpoint_every"] = checkpoint_every;
  j["freeze_simulator"] = freeze_simulator;
  j["probe_bitrate"] = probe_bitrate;
  j["bitrate_ladder"] = bitrate_ladder;
  j["jobs"] = jobs;
  return j.dump(2) + "\n";
}

}  // namespace tdp
