// Copyright (c) 2026 The rnalab authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace rna {

namespace detail {

struct TensorNode {
  std::vector<std::int64_t> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::unique_ptr<std::vector<double>> grad;  // lazily allocated
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // pushes grad into parents

  bool is_leaf() const { return parents.empty(); }
  std::vector<double>& ensure_grad();
};

}  // namespace detail

// Dense row-major tensor of 64-bit reals with an optional gradient slot.
// A Tensor is a cheap shared handle onto a graph node: copies alias the same
// storage, which is what lets model parameters act as leaves of many
// successive compute graphs. Graphs are built implicitly by the free
// functions below and walked by backward().
//
// Scalars are rank-0 tensors (shape == {}, numel == 1). The only implicit
// broadcasting is scalar-with-tensor in add/subtract/elementwise_multiply.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(std::vector<std::int64_t> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::int64_t>& shape() const;
  std::int64_t rank() const;
  std::int64_t numel() const;
  std::int64_t dim(int i) const;

  const std::vector<double>& values() const;
  // In-place access for leaf tensors (parameters, data buffers).
  std::vector<double>& mutable_values();
  double item() const;

  bool requires_grad() const;
  const std::vector<double>* grad() const;  // nullptr until backward reaches it
  void zero_grad();                         // drops the gradient slot

  detail::TensorNode* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}

  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor make_op_result(std::vector<std::int64_t> shape,
                               std::vector<double> values,
                               std::vector<Tensor> parents,
                               std::function<void(detail::TensorNode&)> backprop);
};

// ---- operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor row_l2_norm(const Tensor& x);                  // [n x d] -> [n]
Tensor row_sum(const Tensor& x);                      // [n x d] -> [n]
Tensor mean(const Tensor& x);                         // [n] -> scalar
Tensor sum(const Tensor& x);                          // any -> scalar
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor elementwise_multiply(const Tensor& a, const Tensor& b);
Tensor scalar_multiply(const Tensor& x, double c);
Tensor square(const Tensor& x);
Tensor divide_scalars(const Tensor& a, const Tensor& b);  // denominator guarded
Tensor dot(const Tensor& a, const Tensor& b);             // [n] . [n] -> scalar
Tensor concat_rows(const Tensor& a, const Tensor& b);     // stack row blocks
Tensor add_row_vector(const Tensor& x, const Tensor& b);  // [n x d] + [d]
Tensor cosine_rows(const Tensor& a, const Tensor& b);     // per-row cosine, [n]
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Accumulates dRoot/dLeaf into the grad slot of every requires_grad leaf
// reachable from root. Interior gradients are scratch and reset on entry, so
// repeated calls accumulate exactly one more contribution into each leaf.
void backward(const Tensor& root);

// Epsilon guard used by norm backward and scalar division. Zero-norm rows
// occur with all-dead relu units, so the guard is load-bearing.
inline constexpr double kNormEpsilon = 1e-12;

std::string shape_string(const std::vector<std::int64_t>& shape);

}  // namespace rna
