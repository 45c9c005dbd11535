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

#ifndef TDP_TENSOR_HPP_
#define TDP_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tdp/error.hpp"
#include "tdp/rng.hpp"

namespace tdp::numerics {

// All tensor math runs in float64. The stated finite-difference tolerances
// (1e-3 relative at step 1e-4) are only dependable at this precision.
using real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // allocated lazily during backward
  bool requires_grad = false;  // set on leaves
  bool needs_grad = false;     // leaf flag, or any input needs it
  std::uint64_t seq = 0;       // creation order; children outrank parents
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // adds into parents' grad buffers

  void ensure_grad();
};
}  // namespace detail

// Value-semantics handle to a node on the autodiff tape. Copies alias the
// same storage. Ops below execute eagerly and record a reverse closure;
// backward() replays them in reverse creation order. Graphs are DAGs built
// from scratch per training step; isolated tapes may run on parallel threads.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<real> data,
                          bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, real stddev = 1.0,
                      bool requires_grad = false);
  static Tensor uniform(Shape shape, Rng& rng, real lo, real hi,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t dim(std::size_t i) const;

  const std::vector<real>& data() const;
  std::vector<real>& mutable_data();  // leaf edits only (parameters)
  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<real>& grad() const;  // throws GraphError when absent
  void zero_grad();                       // allocates and clears

  real value() const;  // scalar convenience; throws unless numel() == 1
  real item(std::size_t i) const;
  bool all_finite() const;

  detail::Node* node() const { return node_.get(); }
  std::shared_ptr<detail::Node> node_ptr() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> node);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node)
      : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, real c);
Tensor mul_scalar(const Tensor& x, real c);
// Broadcast multiply by a scalar tensor (grads flow to both operands).
Tensor scale_by(const Tensor& x, const Tensor& s);
Tensor relu(const Tensor& x);
Tensor tanh_of(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp_of(const Tensor& x);
Tensor log_of(const Tensor& x);
Tensor square(const Tensor& x);
Tensor pow_const(const Tensor& x, real exponent);  // expects x > 0
// max(x, floor); zero grad where clamped. clamped_count, when given, gets the
// number of clamped elements.
Tensor clamp_min(const Tensor& x, real floor,
                 std::size_t* clamped_count = nullptr);

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- linear algebra / shaping ----
Tensor matmul(const Tensor& a, const Tensor& b);      // (M,K) x (K,N)
Tensor add_rowvec(const Tensor& x, const Tensor& r);  // (M,K) + (K,)
Tensor mul_rowvec(const Tensor& x, const Tensor& r);  // (M,K) * (K,)
Tensor reshape(const Tensor& x, Shape new_shape);
// NCHW channel slice flattened to a column: (N,C,H,W) -> (N*H*W, 1).
Tensor channel_as_column(const Tensor& x, std::size_t channel);

// ---- image ops, NCHW layout ----
// Cross-correlation (kernel not flipped). Zero padding. Output spatial size
// is (H + 2*pad - kh) / stride + 1. Pass an undefined Tensor for no bias.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t stride = 1, std::size_t pad = 0);
Tensor upsample_nearest2x(const Tensor& x);
// 2x2 average pooling with ceil output size; edge cells average over the
// samples actually present, so constant inputs stay constant.
Tensor avg_pool2x2(const Tensor& x);

// ---- graph ----
// Populates grad on every needs-grad node reachable from `loss`.
// Contract: loss is scalar; throws GraphError otherwise.
void backward(const Tensor& loss);
// Same values, fresh constant leaf; cuts the tape.
Tensor detach(const Tensor& x);

}  // namespace tdp::numerics

#endif  // TDP_TENSOR_HPP_
