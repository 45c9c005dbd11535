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

#include "tdp/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace tdp::numerics {

namespace {

std::atomic<std::uint64_t> g_seq{1};

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<real> data) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}

void check_defined(const Tensor& t, const char* what) {
  if (!t.defined()) throw GraphError(std::string("undefined tensor: ") + what);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void accum(detail::Node& n, const std::vector<real>& g) {
  n.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

// Builds the result node of an op over `inputs`, wiring parent links and the
// needs-grad flag. The closure only runs during backward.
Tensor make_op(Shape shape, std::vector<real> data,
               std::initializer_list<Tensor> inputs,
               std::function<void(detail::Node&)> backprop) {
  auto n = new_node(std::move(shape), std::move(data));
  bool needs = false;
  for (const Tensor& t : inputs) {
    if (!t.defined()) continue;
    n->parents.push_back(t.node_ptr());
    needs = needs || t.node()->needs_grad;
  }
  if (needs) {
    n->needs_grad = true;
    n->backprop = std::move(backprop);
  }
  return Tensor::wrap(std::move(n));
}

using UnaryFwd = real (*)(real);

Tensor unary_op(const Tensor& x, const char* name, UnaryFwd fwd,
                std::function<real(real /*x*/, real /*y*/)> dydx) {
  check_defined(x, name);
  std::vector<real> out(x.numel());
  const auto& xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  auto xn = x.node_ptr();
  return make_op(x.shape(), std::move(out), {x},
                 [xn, dydx](detail::Node& self) {
                   if (!xn->needs_grad) return;
                   xn->ensure_grad();
                   for (std::size_t i = 0; i < self.data.size(); ++i) {
                     xn->grad[i] +=
                         self.grad[i] * dydx(xn->data[i], self.data[i]);
                   }
                 });
}

}  // namespace

void detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// ---- Tensor members ----

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) {
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  Tensor t = wrap(new_node(std::move(shape), std::vector<real>(n, 0.0)));
  t.node_->requires_grad = requires_grad;
  t.node_->needs_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  Tensor t = wrap(new_node(std::move(shape), std::vector<real>(n, value)));
  t.node_->requires_grad = requires_grad;
  t.node_->needs_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<real> data,
                         bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("from_data: " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  Tensor t = wrap(new_node(std::move(shape), std::move(data)));
  t.node_->requires_grad = requires_grad;
  t.node_->needs_grad = requires_grad;
  return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, real stddev, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  std::vector<real> data(n);
  for (auto& v : data) v = stddev * rng.normal();
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::uniform(Shape shape, Rng& rng, real lo, real hi,
                       bool requires_grad) {
  std::size_t n = shape_numel(shape);
  std::vector<real> data(n);
  for (auto& v : data) v = rng.uniform_in(lo, hi);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

const Shape& Tensor::shape() const {
  check_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::numel() const { return defined() ? node_->data.size() : 0; }

std::size_t Tensor::dim(std::size_t i) const {
  const Shape& s = shape();
  if (i >= s.size()) throw DimensionError("dim index out of range");
  return s[i];
}

const std::vector<real>& Tensor::data() const {
  check_defined(*this, "data");
  return node_->data;
}

std::vector<real>& Tensor::mutable_data() {
  check_defined(*this, "mutable_data");
  return node_->data;
}

bool Tensor::requires_grad() const {
  return defined() && node_->requires_grad;
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

const std::vector<real>& Tensor::grad() const {
  check_defined(*this, "grad");
  if (node_->grad.empty()) {
    throw GraphError("grad requested but never populated; call backward()");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  check_defined(*this, "zero_grad");
  node_->grad.assign(node_->data.size(), 0.0);
}

real Tensor::value() const {
  if (numel() != 1) {
    throw GraphError("value(): tensor is not scalar, shape " +
                     shape_str(shape()));
  }
  return node_->data[0];
}

real Tensor::item(std::size_t i) const {
  const auto& d = data();
  if (i >= d.size()) throw DimensionError("item index out of range");
  return d[i];
}

bool Tensor::all_finite() const {
  for (real v : data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined(a, "add");
  check_defined(b, "add");
  check_same_shape(a, b, "add");
  std::vector<real> out(a.numel());
  const auto &ad = a.data(), &bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_op(a.shape(), std::move(out), {a, b},
                 [an, bn](detail::Node& self) {
                   if (an->needs_grad) accum(*an, self.grad);
                   if (bn->needs_grad) accum(*bn, self.grad);
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_defined(a, "sub");
  check_defined(b, "sub");
  check_same_shape(a, b, "sub");
  std::vector<real> out(a.numel());
  const auto &ad = a.data(), &bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_op(a.shape(), std::move(out), {a, b},
                 [an, bn](detail::Node& self) {
                   if (an->needs_grad) accum(*an, self.grad);
                   if (bn->needs_grad) {
                     bn->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       bn->grad[i] -= self.grad[i];
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined(a, "mul");
  check_defined(b, "mul");
  check_same_shape(a, b, "mul");
  std::vector<real> out(a.numel());
  const auto &ad = a.data(), &bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_op(a.shape(), std::move(out), {a, b},
                 [an, bn](detail::Node& self) {
                   if (an->needs_grad) {
                     an->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       an->grad[i] += self.grad[i] * bn->data[i];
                   }
                   if (bn->needs_grad) {
                     bn->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       bn->grad[i] += self.grad[i] * an->data[i];
                   }
                 });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  check_defined(a, "divide");
  check_defined(b, "divide");
  check_same_shape(a, b, "divide");
  std::vector<real> out(a.numel());
  const auto &ad = a.data(), &bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] / bd[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_op(a.shape(), std::move(out), {a, b},
                 [an, bn](detail::Node& self) {
                   if (an->needs_grad) {
                     an->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       an->grad[i] += self.grad[i] / bn->data[i];
                   }
                   if (bn->needs_grad) {
                     bn->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       bn->grad[i] -= self.grad[i] * self.data[i] / bn->data[i];
                   }
                 });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor add_scalar(const Tensor& x, real c) {
  check_defined(x, "add_scalar");
  std::vector<real> out(x.numel());
  const auto& xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] + c;
  auto xn = x.node_ptr();
  return make_op(x.shape(), std::move(out), {x}, [xn](detail::Node& self) {
    if (xn->needs_grad) accum(*xn, self.grad);
  });
}

Tensor mul_scalar(const Tensor& x, real c) {
  check_defined(x, "mul_scalar");
  std::vector<real> out(x.numel());
  const auto& xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * c;
  auto xn = x.node_ptr();
  return make_op(x.shape(), std::move(out), {x}, [xn, c](detail::Node& self) {
    if (!xn->needs_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[i] += self.grad[i] * c;
  });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  check_defined(x, "scale_by");
  check_defined(s, "scale_by");
  if (s.numel() != 1) throw DimensionError("scale_by: scale must be scalar");
  const real sv = s.item(0);
  std::vector<real> out(x.numel());
  const auto& xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * sv;
  auto xn = x.node_ptr(), sn = s.node_ptr();
  return make_op(x.shape(), std::move(out), {x, s},
                 [xn, sn, sv](detail::Node& self) {
                   if (xn->needs_grad) {
                     xn->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       xn->grad[i] += self.grad[i] * sv;
                   }
                   if (sn->needs_grad) {
                     sn->ensure_grad();
                     real acc = 0.0;
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       acc += self.grad[i] * xn->data[i];
                     sn->grad[0] += acc;
                   }
                 });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](real v) { return v > 0.0 ? v : 0.0; },
      [](real xi, real) { return xi > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh_of(const Tensor& x) {
  return unary_op(
      x, "tanh", [](real v) { return std::tanh(v); },
      [](real, real y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid", [](real v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](real, real y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  // log1p(exp(x)) with the usual overflow-safe split.
  return unary_op(
      x, "softplus",
      [](real v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](real xi, real) { return 1.0 / (1.0 + std::exp(-xi)); });
}

Tensor exp_of(const Tensor& x) {
  return unary_op(
      x, "exp", [](real v) { return std::exp(v); },
      [](real, real y) { return y; });
}

Tensor log_of(const Tensor& x) {
  return unary_op(
      x, "log", [](real v) { return std::log(v); },
      [](real xi, real) { return 1.0 / xi; });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, "square", [](real v) { return v * v; },
      [](real xi, real) { return 2.0 * xi; });
}

Tensor pow_const(const Tensor& x, real exponent) {
  check_defined(x, "pow_const");
  std::vector<real> out(x.numel());
  const auto& xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(xd[i], exponent);
  auto xn = x.node_ptr();
  return make_op(x.shape(), std::move(out), {x},
                 [xn, exponent](detail::Node& self) {
                   if (!xn->needs_grad) return;
                   xn->ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     xn->grad[i] += self.grad[i] * exponent *
                                    std::pow(xn->data[i], exponent - 1.0);
                   }
                 });
}

Tensor clamp_min(const Tensor& x, real floor, std::size_t* clamped_count) {
  check_defined(x, "clamp_min");
  std::vector<real> out(x.numel());
  const auto& xd = x.data();
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (xd[i] < floor) {
      out[i] = floor;
      ++clamped;
    } else {
      out[i] = xd[i];
    }
  }
  if (clamped_count) *clamped_count = clamped;
  auto xn = x.node_ptr();
  return make_op(x.shape(), std::move(out), {x},
                 [xn, floor](detail::Node& self) {
                   if (!xn->needs_grad) return;
                   xn->ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     if (xn->data[i] >= floor) xn->grad[i] += self.grad[i];
                   }
                 });
}

// ---- reductions ----

Tensor sum(const Tensor& x) {
  check_defined(x, "sum");
  real acc = 0.0;
  for (real v : x.data()) acc += v;
  auto xn = x.node_ptr();
  return make_op({1}, {acc}, {x}, [xn](detail::Node& self) {
    if (!xn->needs_grad) return;
    xn->ensure_grad();
    const real g = self.grad[0];
    for (auto& gv : xn->grad) gv += g;
  });
}

Tensor mean(const Tensor& x) {
  check_defined(x, "mean");
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return mul_scalar(sum(x), 1.0 / static_cast<real>(x.numel()));
}

// ---- linear algebra / shaping ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<real> out(M * N, 0.0);
  const auto &ad = a.data(), &bd = b.data();
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t k = 0; k < K; ++k) {
      const real av = ad[m * K + k];
      for (std::size_t n = 0; n < N; ++n) out[m * N + n] += av * bd[k * N + n];
    }
  }
  auto an = a.node_ptr(), bn = b.node_ptr();
  return make_op({M, N}, std::move(out), {a, b},
                 [an, bn, M, K, N](detail::Node& self) {
                   if (an->needs_grad) {
                     an->ensure_grad();
                     for (std::size_t m = 0; m < M; ++m)
                       for (std::size_t n = 0; n < N; ++n) {
                         const real g = self.grad[m * N + n];
                         for (std::size_t k = 0; k < K; ++k)
                           an->grad[m * K + k] += g * bn->data[k * N + n];
                       }
                   }
                   if (bn->needs_grad) {
                     bn->ensure_grad();
                     for (std::size_t m = 0; m < M; ++m)
                       for (std::size_t k = 0; k < K; ++k) {
                         const real av = an->data[m * K + k];
                         for (std::size_t n = 0; n < N; ++n)
                           bn->grad[k * N + n] += av * self.grad[m * N + n];
                       }
                   }
                 });
}

Tensor add_rowvec(const Tensor& x, const Tensor& r) {
  check_defined(x, "add_rowvec");
  check_defined(r, "add_rowvec");
  if (x.shape().size() != 2 || r.numel() != x.dim(1)) {
    throw DimensionError("add_rowvec: " + shape_str(x.shape()) + " + " +
                         shape_str(r.shape()));
  }
  const std::size_t M = x.dim(0), K = x.dim(1);
  std::vector<real> out(M * K);
  const auto &xd = x.data(), &rd = r.data();
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) out[m * K + k] = xd[m * K + k] + rd[k];
  auto xn = x.node_ptr(), rn = r.node_ptr();
  return make_op(x.shape(), std::move(out), {x, r},
                 [xn, rn, M, K](detail::Node& self) {
                   if (xn->needs_grad) accum(*xn, self.grad);
                   if (rn->needs_grad) {
                     rn->ensure_grad();
                     for (std::size_t m = 0; m < M; ++m)
                       for (std::size_t k = 0; k < K; ++k)
                         rn->grad[k] += self.grad[m * K + k];
                   }
                 });
}

Tensor mul_rowvec(const Tensor& x, const Tensor& r) {
  check_defined(x, "mul_rowvec");
  check_defined(r, "mul_rowvec");
  if (x.shape().size() != 2 || r.numel() != x.dim(1)) {
    throw DimensionError("mul_rowvec: " + shape_str(x.shape()) + " * " +
                         shape_str(r.shape()));
  }
  const std::size_t M = x.dim(0), K = x.dim(1);
  std::vector<real> out(M * K);
  const auto &xd = x.data(), &rd = r.data();
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) out[m * K + k] = xd[m * K + k] * rd[k];
  auto xn = x.node_ptr(), rn = r.node_ptr();
  return make_op(x.shape(), std::move(out), {x, r},
                 [xn, rn, M, K](detail::Node& self) {
                   if (xn->needs_grad) {
                     xn->ensure_grad();
                     for (std::size_t m = 0; m < M; ++m)
                       for (std::size_t k = 0; k < K; ++k)
                         xn->grad[m * K + k] +=
                             self.grad[m * K + k] * rn->data[k];
                   }
                   if (rn->needs_grad) {
                     rn->ensure_grad();
                     for (std::size_t m = 0; m < M; ++m)
                       for (std::size_t k = 0; k < K; ++k)
                         rn->grad[k] +=
                             self.grad[m * K + k] * xn->data[m * K + k];
                   }
                 });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  check_defined(x, "reshape");
  if (shape_numel(new_shape) != x.numel()) {
    throw DimensionError("reshape: element count mismatch " +
                         shape_str(x.shape()) + " -> " + shape_str(new_shape));
  }
  auto xn = x.node_ptr();
  return make_op(std::move(new_shape), x.data(), {x},
                 [xn](detail::Node& self) {
                   if (xn->needs_grad) accum(*xn, self.grad);
                 });
}

Tensor channel_as_column(const Tensor& x, std::size_t channel) {
  check_defined(x, "channel_as_column");
  if (x.shape().size() != 4) {
    throw DimensionError("channel_as_column: expected NCHW, got " +
                         shape_str(x.shape()));
  }
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (channel >= C) throw DimensionError("channel_as_column: channel OOB");
  const std::size_t plane = H * W;
  std::vector<real> out(N * plane);
  const auto& xd = x.data();
  for (std::size_t n = 0; n < N; ++n) {
    const real* src = xd.data() + (n * C + channel) * plane;
    std::copy(src, src + plane, out.data() + n * plane);
  }
  auto xn = x.node_ptr();
  return make_op({N * plane, 1}, std::move(out), {x},
                 [xn, channel, C, plane, N](detail::Node& self) {
                   if (!xn->needs_grad) return;
                   xn->ensure_grad();
                   for (std::size_t n = 0; n < N; ++n) {
                     real* dst = xn->grad.data() + (n * C + channel) * plane;
                     const real* g = self.grad.data() + n * plane;
                     for (std::size_t i = 0; i < plane; ++i) dst[i] += g[i];
                   }
                 });
}

// ---- image ops ----

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t stride, std::size_t pad) {
  check_defined(input, "conv2d input");
  check_defined(kernel, "conv2d kernel");
  if (input.shape().size() != 4 || kernel.shape().size() != 4) {
    throw DimensionError("conv2d: expected NCHW input and OCKK kernel");
  }
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2),
                    W = input.dim(3);
  const std::size_t O = kernel.dim(0), KC = kernel.dim(1), KH = kernel.dim(2),
                    KW = kernel.dim(3);
  if (KC != C) {
    throw DimensionError("conv2d: kernel channels " + std::to_string(KC) +
                         " != input channels " + std::to_string(C));
  }
  if (H + 2 * pad < KH || W + 2 * pad < KW) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (bias.defined() && bias.numel() != O) {
    throw DimensionError("conv2d: bias size != output channels");
  }
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1;
  const std::size_t OW = (W + 2 * pad - KW) / stride + 1;

  std::vector<real> out(N * O * OH * OW, 0.0);
  const auto& in = input.data();
  const auto& kw = kernel.data();

  if (bias.defined()) {
    const auto& bd = bias.data();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o) {
        real* dst = out.data() + (n * O + o) * OH * OW;
        std::fill(dst, dst + OH * OW, bd[o]);
      }
  }

  // ow range keeping iw = ow*stride - pad + kx inside [0, W)
  auto ow_range = [&](std::size_t kx, std::size_t& lo, std::size_t& hi) {
    long start = static_cast<long>(kx) - static_cast<long>(pad);
    long lo_l = start < 0 ? ((-start) + static_cast<long>(stride) - 1) /
                                static_cast<long>(stride)
                          : 0;
    long hi_l = (static_cast<long>(W) - 1 - start) / static_cast<long>(stride);
    lo = static_cast<std::size_t>(std::max(0L, lo_l));
    hi = static_cast<std::size_t>(
        std::min(static_cast<long>(OW) - 1, hi_l));
  };

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      real* dst = out.data() + (n * O + o) * OH * OW;
      for (std::size_t c = 0; c < C; ++c) {
        const real* src = in.data() + (n * C + c) * H * W;
        for (std::size_t ky = 0; ky < KH; ++ky) {
          for (std::size_t kx = 0; kx < KW; ++kx) {
            const real wv = kw[((o * C + c) * KH + ky) * KW + kx];
            if (wv == 0.0) continue;
            std::size_t lo, hi;
            ow_range(kx, lo, hi);
            if (hi < lo) continue;
            for (std::size_t oh = 0; oh < OH; ++oh) {
              const long ih =
                  static_cast<long>(oh * stride + ky) - static_cast<long>(pad);
              if (ih < 0 || ih >= static_cast<long>(H)) continue;
              const real* srow = src + ih * W;
              real* drow = dst + oh * OW;
              const long base = static_cast<long>(kx) - static_cast<long>(pad);
              for (std::size_t ow = lo; ow <= hi; ++ow) {
                drow[ow] += wv * srow[base + static_cast<long>(ow * stride)];
              }
            }
          }
        }
      }
    }
  }

  auto in_n = input.node_ptr();
  auto k_n = kernel.node_ptr();
  auto b_n = bias.defined() ? bias.node_ptr() : nullptr;
  Shape out_shape{N, O, OH, OW};

  std::initializer_list<Tensor> parents_with_bias{input, kernel, bias};
  std::initializer_list<Tensor> parents_no_bias{input, kernel};

  auto backprop = [in_n, k_n, b_n, N, C, H, W, O, KH, KW, OH, OW, stride,
                   pad](detail::Node& self) {
    const auto& g = self.grad;
    auto ow_range = [&](std::size_t kx, std::size_t& lo, std::size_t& hi_out) {
      long start = static_cast<long>(kx) - static_cast<long>(pad);
      long lo_l = start < 0 ? ((-start) + static_cast<long>(stride) - 1) /
                                  static_cast<long>(stride)
                            : 0;
      long hi_l =
          (static_cast<long>(W) - 1 - start) / static_cast<long>(stride);
      lo = static_cast<std::size_t>(std::max(0L, lo_l));
      hi_out = static_cast<std::size_t>(
          std::min(static_cast<long>(OW) - 1, hi_l));
    };
    if (b_n && b_n->needs_grad) {
      b_n->ensure_grad();
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o) {
          const real* grow = g.data() + (n * O + o) * OH * OW;
          real acc = 0.0;
          for (std::size_t i = 0; i < OH * OW; ++i) acc += grow[i];
          b_n->grad[o] += acc;
        }
    }
    const bool want_in = in_n->needs_grad;
    const bool want_k = k_n->needs_grad;
    if (!want_in && !want_k) return;
    if (want_in) in_n->ensure_grad();
    if (want_k) k_n->ensure_grad();
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t o = 0; o < O; ++o) {
        const real* grow0 = g.data() + (n * O + o) * OH * OW;
        for (std::size_t c = 0; c < C; ++c) {
          const real* src = in_n->data.data() + (n * C + c) * H * W;
          real* dsrc =
              want_in ? in_n->grad.data() + (n * C + c) * H * W : nullptr;
          for (std::size_t ky = 0; ky < KH; ++ky) {
            for (std::size_t kx = 0; kx < KW; ++kx) {
              const std::size_t kidx = ((o * C + c) * KH + ky) * KW + kx;
              const real wv = k_n->data[kidx];
              std::size_t lo, hi;
              ow_range(kx, lo, hi);
              if (hi < lo) continue;
              real kacc = 0.0;
              const long base = static_cast<long>(kx) - static_cast<long>(pad);
              for (std::size_t oh = 0; oh < OH; ++oh) {
                const long ih = static_cast<long>(oh * stride + ky) -
                                static_cast<long>(pad);
                if (ih < 0 || ih >= static_cast<long>(H)) continue;
                const real* grow = grow0 + oh * OW;
                const real* srow = src + ih * W;
                real* drow = dsrc ? dsrc + ih * W : nullptr;
                for (std::size_t ow = lo; ow <= hi; ++ow) {
                  const long iw = base + static_cast<long>(ow * stride);
                  const real gv = grow[ow];
                  if (want_k) kacc += gv * srow[iw];
                  if (want_in) drow[iw] += gv * wv;
                }
              }
              if (want_k) k_n->grad[kidx] += kacc;
            }
          }
        }
      }
    }
  };

  if (bias.defined()) {
    return make_op(std::move(out_shape), std::move(out), parents_with_bias,
                   std::move(backprop));
  }
  return make_op(std::move(out_shape), std::move(out), parents_no_bias,
                 std::move(backprop));
}

Tensor upsample_nearest2x(const Tensor& x) {
  check_defined(x, "upsample_nearest2x");
  if (x.shape().size() != 4) {
    throw DimensionError("upsample_nearest2x: expected NCHW");
  }
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = 2 * H, OW = 2 * W;
  std::vector<real> out(N * C * OH * OW);
  const auto& xd = x.data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const real* src = xd.data() + nc * H * W;
    real* dst = out.data() + nc * OH * OW;
    for (std::size_t oh = 0; oh < OH; ++oh) {
      const real* srow = src + (oh / 2) * W;
      real* drow = dst + oh * OW;
      for (std::size_t ow = 0; ow < OW; ++ow) drow[ow] = srow[ow / 2];
    }
  }
  auto xn = x.node_ptr();
  return make_op({N, C, OH, OW}, std::move(out), {x},
                 [xn, N, C, H, W, OH, OW](detail::Node& self) {
                   if (!xn->needs_grad) return;
                   xn->ensure_grad();
                   for (std::size_t nc = 0; nc < N * C; ++nc) {
                     real* dst = xn->grad.data() + nc * H * W;
                     const real* g = self.grad.data() + nc * OH * OW;
                     for (std::size_t oh = 0; oh < OH; ++oh) {
                       real* drow = dst + (oh / 2) * W;
                       const real* grow = g + oh * OW;
                       for (std::size_t ow = 0; ow < OW; ++ow)
                         drow[ow / 2] += grow[ow];
                     }
                   }
                 });
}

Tensor avg_pool2x2(const Tensor& x) {
  check_defined(x, "avg_pool2x2");
  if (x.shape().size() != 4) throw DimensionError("avg_pool2x2: expected NCHW");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = (H + 1) / 2, OW = (W + 1) / 2;
  std::vector<real> out(N * C * OH * OW, 0.0);
  const auto& xd = x.data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const real* src = xd.data() + nc * H * W;
    real* dst = out.data() + nc * OH * OW;
    for (std::size_t oh = 0; oh < OH; ++oh) {
      for (std::size_t ow = 0; ow < OW; ++ow) {
        const std::size_t h1 = std::min(2 * oh + 2, H);
        const std::size_t w1 = std::min(2 * ow + 2, W);
        real acc = 0.0;
        std::size_t cnt = 0;
        for (std::size_t h = 2 * oh; h < h1; ++h)
          for (std::size_t w = 2 * ow; w < w1; ++w) {
            acc += src[h * W + w];
            ++cnt;
          }
        dst[oh * OW + ow] = acc / static_cast<real>(cnt);
      }
    }
  }
  auto xn = x.node_ptr();
  return make_op({N, C, OH, OW}, std::move(out), {x},
                 [xn, N, C, H, W, OH, OW](detail::Node& self) {
                   if (!xn->needs_grad) return;
                   xn->ensure_grad();
                   for (std::size_t nc = 0; nc < N * C; ++nc) {
                     real* dst = xn->grad.data() + nc * H * W;
                     const real* g = self.grad.data() + nc * OH * OW;
                     for (std::size_t oh = 0; oh < OH; ++oh) {
                       for (std::size_t ow = 0; ow < OW; ++ow) {
                         const std::size_t h1 = std::min(2 * oh + 2, H);
                         const std::size_t w1 = std::min(2 * ow + 2, W);
                         const std::size_t cnt =
                             (h1 - 2 * oh) * (w1 - 2 * ow);
                         const real gv =
                             g[oh * OW + ow] / static_cast<real>(cnt);
                         for (std::size_t h = 2 * oh; h < h1; ++h)
                           for (std::size_t w = 2 * ow; w < w1; ++w)
                             dst[h * W + w] += gv;
                       }
                     }
                   }
                 });
}

// ---- graph ----

void backward(const Tensor& loss) {
  check_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw GraphError("backward: loss must be scalar, shape " +
                     shape_str(loss.shape()));
  }
  // Reverse sweep over the reachable subgraph in descending creation order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node()};
  seen.insert(loss.node());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) {
              return a->seq > b->seq;
            });
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (detail::Node* n : order) {
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

Tensor detach(const Tensor& x) {
  check_defined(x, "detach");
  return Tensor::from_data(x.shape(), x.data(), false);
}

}  // namespace tdp::numerics
