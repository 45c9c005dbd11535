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

#include "tdp/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "tdp/error.hpp"
#include "tdp/hash.hpp"

namespace tdp::numerics {

namespace {

constexpr char kMagic[8] = {'T', 'D', 'P', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

constexpr const char* kOptStepKey = "opt.t";
constexpr const char* kOptMPrefix = "opt.m/";
constexpr const char* kOptVPrefix = "opt.v/";

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw IoError("truncated checkpoint: " + path);
  return v;
}

bool has_prefix(const std::string& s, const char* prefix) {
  return s.rfind(prefix, 0) == 0;
}

}  // namespace

Tensor& ParamStore::create(const std::string& name, Tensor init) {
  if (params_.count(name)) throw GraphError("duplicate parameter: " + name);
  if (!init.defined()) throw GraphError("undefined init for " + name);
  init.node()->requires_grad = true;
  init.node()->needs_grad = true;
  auto [it, ok] = params_.emplace(name, std::move(init));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw GraphError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw GraphError("unknown parameter: " + name);
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

std::size_t ParamStore::total_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(name);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& [name, t] : params_) {
    if (name.rfind(prefix, 0) == 0) {
      t.node()->requires_grad = trainable;
      t.node()->needs_grad = trainable;
    }
  }
}

std::uint64_t ParamStore::content_hash() const {
  Fnv1a h;
  for (const auto& [name, t] : params_) {
    h.update_string(name);
    for (std::size_t d : t.shape()) h.update_pod<std::uint64_t>(d);
    const auto& data = t.data();
    h.update(data.data(), data.size() * sizeof(real));
  }
  return h.digest();
}

Adam::Adam(ParamStore& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  // Frozen parameters carry no moment state; it would only bloat checkpoints.
  for (const auto& [name, t] : params_.entries()) {
    if (!t.requires_grad()) continue;
    m_[name].assign(t.numel(), 0.0);
    v_[name].assign(t.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, t] : params_.entries()) {
    if (!t.requires_grad()) continue;
    if (!t.has_grad()) {
      throw GraphError("adam step with missing gradient for " + name);
    }
    const auto& g = t.grad();
    auto& m = m_[name];
    auto& v = v_[name];
    auto& w = t.mutable_data();
    // A parameter unfrozen after construction starts with fresh moments.
    if (m.size() != w.size()) m.assign(w.size(), 0.0);
    if (v.size() != w.size()) v.assign(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::restore(std::map<std::string, std::vector<real>> m,
                   std::map<std::string, std::vector<real>> v,
                   std::uint64_t t) {
  for (const auto& [name, tensor] : params_.entries()) {
    if (!tensor.requires_grad()) continue;
    auto mi = m.find(name);
    auto vi = v.find(name);
    if (mi == m.end() || vi == v.end()) {
      // Checkpoint was written with this parameter frozen; start it fresh.
      m[name].assign(tensor.numel(), 0.0);
      v[name].assign(tensor.numel(), 0.0);
      continue;
    }
    if (mi->second.size() != tensor.numel() ||
        vi->second.size() != tensor.numel()) {
      throw DimensionError("optimizer moment size mismatch for " + name);
    }
  }
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

void save_checkpoint(const std::string& path, const CheckpointMap& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for write: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kVersion);
  write_pod<std::uint64_t>(os, entries.size());
  for (const auto& [name, e] : entries) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(e.shape.size()));
    for (std::size_t d : e.shape) write_pod<std::uint64_t>(os, d);
    write_pod<std::uint64_t>(os, e.values.size());
    os.write(reinterpret_cast<const char*>(e.values.data()),
             static_cast<std::streamsize>(e.values.size() * sizeof(real)));
  }
  if (!os) throw IoError("short write on checkpoint: " + path);
}

CheckpointMap load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("bad checkpoint magic in " + path, 0);
  }
  const auto version = read_pod<std::uint32_t>(is, path);
  if (version != kVersion) {
    throw ParseError("unsupported checkpoint version " +
                         std::to_string(version) + " in " + path,
                     8);
  }
  const auto count = read_pod<std::uint64_t>(is, path);
  CheckpointMap out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("truncated checkpoint: " + path);
    const auto ndim = read_pod<std::uint8_t>(is, path);
    CheckpointEntry e;
    e.shape.resize(ndim);
    for (auto& d : e.shape)
      d = static_cast<std::size_t>(read_pod<std::uint64_t>(is, path));
    const auto n = read_pod<std::uint64_t>(is, path);
    if (n != shape_numel(e.shape)) {
      throw ParseError("checkpoint entry " + name + " count/shape mismatch",
                       static_cast<std::size_t>(is.tellg()));
    }
    e.values.resize(n);
    is.read(reinterpret_cast<char*>(e.values.data()),
            static_cast<std::streamsize>(n * sizeof(real)));
    if (!is) throw IoError("truncated checkpoint: " + path);
    out.emplace(std::move(name), std::move(e));
  }
  return out;
}

CheckpointMap checkpoint_from_state(const ParamStore& params, const Adam* opt,
                                    std::uint64_t step) {
  CheckpointMap out;
  for (const auto& [name, t] : params.entries()) {
    out[name] = CheckpointEntry{t.shape(), t.data()};
  }
  out["step"] = CheckpointEntry{{1}, {static_cast<real>(step)}};
  if (opt) {
    out[kOptStepKey] =
        CheckpointEntry{{1}, {static_cast<real>(opt->t())}};
    for (const auto& [name, m] : opt->m()) {
      out[kOptMPrefix + name] = CheckpointEntry{{m.size()}, m};
    }
    for (const auto& [name, v] : opt->v()) {
      out[kOptVPrefix + name] = CheckpointEntry{{v.size()}, v};
    }
  }
  return out;
}

std::uint64_t state_from_checkpoint(const CheckpointMap& entries,
                                    ParamStore& params, Adam* opt) {
  for (auto& [name, t] : params.entries()) {
    auto it = entries.find(name);
    if (it == entries.end()) {
      throw ParseError("checkpoint missing parameter " + name, 0);
    }
    if (it->second.shape != t.shape()) {
      throw DimensionError("checkpoint shape mismatch for " + name + ": " +
                           shape_str(it->second.shape) + " vs " +
                           shape_str(t.shape()));
    }
    t.mutable_data() = it->second.values;
  }
  std::uint64_t step = 0;
  if (auto it = entries.find("step"); it != entries.end()) {
    step = static_cast<std::uint64_t>(it->second.values.at(0));
  }
  if (opt) {
    auto ot = entries.find(kOptStepKey);
    if (ot != entries.end()) {
      std::map<std::string, std::vector<real>> m, v;
      for (const auto& [name, e] : entries) {
        if (has_prefix(name, kOptMPrefix)) {
          m[name.substr(std::strlen(kOptMPrefix))] = e.values;
        } else if (has_prefix(name, kOptVPrefix)) {
          v[name.substr(std::strlen(kOptVPrefix))] = e.values;
        }
      }
      opt->restore(std::move(m), std::move(v),
                   static_cast<std::uint64_t>(ot->second.values.at(0)));
    }
  }
  return step;
}

}  // namespace tdp::numerics
