// Copyright (c) 2026 The rnalab authors.
// SPDX-License-Identifier: Apache-2.0

#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace rna {

namespace detail {

std::vector<double>& TensorNode::ensure_grad() {
  if (!grad) {
    grad = std::make_unique<std::vector<double>>(values.size(), 0.0);
  }
  return *grad;
}

}  // namespace detail

namespace {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw Error(ErrorKind::kInvalidArgument,
                std::string(op) + ": undefined tensor operand");
  }
}

}  // namespace

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// ---- Tensor handle ----------------------------------------------------------

Tensor Tensor::from(std::vector<std::int64_t> shape, std::vector<double> values,
                    bool requires_grad) {
  for (auto d : shape) {
    if (d < 0) {
      throw Error(ErrorKind::kInvalidArgument,
                  "tensor: negative dimension in " + shape_string(shape));
    }
  }
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw Error(ErrorKind::kInvalidArgument,
                "tensor: shape " + shape_string(shape) + " implies " +
                    std::to_string(shape_numel(shape)) + " values, got " +
                    std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const std::vector<std::int64_t>& Tensor::shape() const {
  check_defined(*this, "shape");
  return node_->shape;
}

std::int64_t Tensor::rank() const {
  return static_cast<std::int64_t>(shape().size());
}

std::int64_t Tensor::numel() const {
  check_defined(*this, "numel");
  return static_cast<std::int64_t>(node_->values.size());
}

std::int64_t Tensor::dim(int i) const { return shape().at(static_cast<std::size_t>(i)); }

const std::vector<double>& Tensor::values() const {
  check_defined(*this, "values");
  return node_->values;
}

std::vector<double>& Tensor::mutable_values() {
  check_defined(*this, "mutable_values");
  if (!node_->is_leaf()) {
    throw Error(ErrorKind::kState,
                "mutable_values: only leaf tensors may be mutated in place");
  }
  return node_->values;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw Error(ErrorKind::kInvalidArgument,
                "item: tensor has " + std::to_string(numel()) + " elements");
  }
  return node_->values[0];
}

bool Tensor::requires_grad() const {
  check_defined(*this, "requires_grad");
  return node_->requires_grad;
}

const std::vector<double>* Tensor::grad() const {
  check_defined(*this, "grad");
  return node_->grad.get();
}

void Tensor::zero_grad() {
  check_defined(*this, "zero_grad");
  node_->grad.reset();
}

// ---- op plumbing ------------------------------------------------------------

Tensor make_op_result(std::vector<std::int64_t> shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(detail::TensorNode&)> backprop) {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  bool any_grad = false;
  for (const auto& p : parents) any_grad = any_grad || p.requires_grad();
  node->requires_grad = any_grad;
  if (any_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

namespace {

Tensor build_node(std::vector<std::int64_t> shape, std::vector<double> values,
                  std::vector<Tensor> parents,
                  std::function<void(detail::TensorNode&)> backprop) {
  return make_op_result(std::move(shape), std::move(values), std::move(parents),
                        std::move(backprop));
}

void accumulate(detail::TensorNode& parent, std::size_t index, double g) {
  parent.ensure_grad()[index] += g;
}

bool is_scalar(const Tensor& t) { return t.numel() == 1; }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::kInvalidArgument,
                std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                    " vs " + shape_string(b.shape()));
  }
}

}  // namespace

// ---- arithmetic -------------------------------------------------------------

namespace {

enum class Elementwise { kAdd, kSub, kMul };

Tensor elementwise_op(const Tensor& a, const Tensor& b, Elementwise kind,
                      const char* name) {
  check_defined(a, name);
  check_defined(b, name);
  const bool a_scalar = is_scalar(a);
  const bool b_scalar = is_scalar(b);
  if (!a_scalar && !b_scalar) check_same_shape(a, b, name);

  const auto& av = a.values();
  const auto& bv = b.values();
  const Tensor& big = (a_scalar && !b_scalar) ? b : a;
  std::vector<double> out(big.values().size());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a_scalar ? av[0] : av[i];
    const double y = b_scalar ? bv[0] : bv[i];
    switch (kind) {
      case Elementwise::kAdd: out[i] = x + y; break;
      case Elementwise::kSub: out[i] = x - y; break;
      case Elementwise::kMul: out[i] = x * y; break;
    }
  }
  return build_node(
      big.shape(), std::move(out), {a, b},
      [kind, a_scalar, b_scalar](detail::TensorNode& self) {
        const auto& g = *self.grad;
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const std::size_t n = g.size();
        if (pa.requires_grad) {
          auto& ga = pa.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) {
            double contrib = g[i];
            if (kind == Elementwise::kMul) {
              contrib *= b_scalar ? pb.values[0] : pb.values[i];
            }
            ga[a_scalar ? 0 : i] += contrib;
          }
        }
        if (pb.requires_grad) {
          auto& gb = pb.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) {
            double contrib = g[i];
            if (kind == Elementwise::kSub) contrib = -contrib;
            if (kind == Elementwise::kMul) {
              contrib = g[i] * (a_scalar ? pa.values[0] : pa.values[i]);
            }
            gb[b_scalar ? 0 : i] += contrib;
          }
        }
      });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_op(a, b, Elementwise::kAdd, "add");
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  return elementwise_op(a, b, Elementwise::kSub, "subtract");
}

Tensor elementwise_multiply(const Tensor& a, const Tensor& b) {
  return elementwise_op(a, b, Elementwise::kMul, "elementwise_multiply");
}

Tensor scalar_multiply(const Tensor& x, double c) {
  check_defined(x, "scalar_multiply");
  std::vector<double> out(x.values());
  for (auto& v : out) v *= c;
  return build_node(x.shape(), std::move(out), {x},
                    [c](detail::TensorNode& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      auto& gp = p.ensure_grad();
                      const auto& g = *self.grad;
                      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += c * g[i];
                    });
}

Tensor square(const Tensor& x) {
  check_defined(x, "square");
  std::vector<double> out(x.values());
  for (auto& v : out) v *= v;
  return build_node(x.shape(), std::move(out), {x},
                    [](detail::TensorNode& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      auto& gp = p.ensure_grad();
                      const auto& g = *self.grad;
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        gp[i] += 2.0 * p.values[i] * g[i];
                      }
                    });
}

Tensor divide_scalars(const Tensor& a, const Tensor& b) {
  check_defined(a, "divide_scalars");
  check_defined(b, "divide_scalars");
  if (!is_scalar(a) || !is_scalar(b)) {
    throw Error(ErrorKind::kInvalidArgument,
                "divide_scalars: operands must be scalars, got " +
                    shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  // Guarded denominator; the gradient is taken w.r.t. the guarded value.
  double denom = b.values()[0];
  if (std::abs(denom) < kNormEpsilon) {
    denom = denom < 0.0 ? -kNormEpsilon : kNormEpsilon;
  }
  const double num = a.values()[0];
  return build_node(
      {}, {num / denom}, {a, b}, [denom](detail::TensorNode& self) {
        const double g = (*self.grad)[0];
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) accumulate(pa, 0, g / denom);
        if (pb.requires_grad) {
          accumulate(pb, 0, -pa.values[0] / (denom * denom) * g);
        }
      });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  check_defined(a, "dot");
  check_defined(b, "dot");
  if (a.rank() != 1 || b.rank() != 1 || a.numel() != b.numel()) {
    throw Error(ErrorKind::kInvalidArgument,
                "dot: expected equal-length vectors, got " +
                    shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  double acc = 0.0;
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  return build_node({}, {acc}, {a, b}, [](detail::TensorNode& self) {
    const double g = (*self.grad)[0];
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * pb.values[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * pa.values[i];
    }
  });
}

// ---- structure --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw Error(ErrorKind::kInvalidArgument,
                "matmul: incompatible shapes " + shape_string(a.shape()) +
                    " x " + shape_string(b.shape()));
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t p = 0; p < k; ++p) {
      const double x = pa[i * k + p];
      if (x == 0.0) continue;
      const double* brow = pb + p * n;
      double* crow = out.data() + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += x * brow[j];
    }
  }
  return build_node(
      {m, n}, std::move(out), {a, b}, [m, k, n](detail::TensorNode& self) {
        const double* g = self.grad->data();
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          // dA[i,p] = sum_j dC[i,j] * B[p,j]
          double* ga = pa.ensure_grad().data();
          const double* bvals = pb.values.data();
          for (std::int64_t i = 0; i < m; ++i) {
            const double* grow = g + i * n;
            for (std::int64_t p = 0; p < k; ++p) {
              const double* brow = bvals + p * n;
              double acc = 0.0;
              for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (pb.requires_grad) {
          // dB[p,j] = sum_i A[i,p] * dC[i,j]
          double* gb = pb.ensure_grad().data();
          const double* avals = pa.values.data();
          for (std::int64_t i = 0; i < m; ++i) {
            const double* grow = g + i * n;
            for (std::int64_t p = 0; p < k; ++p) {
              const double x = avals[i * k + p];
              if (x == 0.0) continue;
              double* brow = gb + p * n;
              for (std::int64_t j = 0; j < n; ++j) brow[j] += x * grow[j];
            }
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  check_defined(x, "relu");
  std::vector<double> out(x.values());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  // Subgradient at exactly zero is zero.
  return build_node(x.shape(), std::move(out), {x},
                    [](detail::TensorNode& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      auto& gp = p.ensure_grad();
                      const auto& g = *self.grad;
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        if (p.values[i] > 0.0) gp[i] += g[i];
                      }
                    });
}

Tensor row_l2_norm(const Tensor& x) {
  check_defined(x, "row_l2_norm");
  if (x.rank() != 2) {
    throw Error(ErrorKind::kInvalidArgument,
                "row_l2_norm: expected a 2-D tensor, got " +
                    shape_string(x.shape()));
  }
  const std::int64_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  const double* px = x.values().data();
  for (std::int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double v = px[i * d + j];
      acc += v * v;
    }
    out[static_cast<std::size_t>(i)] = std::sqrt(acc);
  }
  return build_node(
      {n}, std::move(out), {x}, [n, d](detail::TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& gp = p.ensure_grad();
        const auto& g = *self.grad;
        for (std::int64_t i = 0; i < n; ++i) {
          const double coef =
              g[static_cast<std::size_t>(i)] /
              std::max(self.values[static_cast<std::size_t>(i)], kNormEpsilon);
          for (std::int64_t j = 0; j < d; ++j) {
            gp[i * d + j] += coef * p.values[i * d + j];
          }
        }
      });
}

Tensor row_sum(const Tensor& x) {
  check_defined(x, "row_sum");
  if (x.rank() != 2) {
    throw Error(ErrorKind::kInvalidArgument,
                "row_sum: expected a 2-D tensor, got " + shape_string(x.shape()));
  }
  const std::int64_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  const double* px = x.values().data();
  for (std::int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < d; ++j) acc += px[i * d + j];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return build_node({n}, std::move(out), {x},
                    [n, d](detail::TensorNode& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      auto& gp = p.ensure_grad();
                      const auto& g = *self.grad;
                      for (std::int64_t i = 0; i < n; ++i) {
                        for (std::int64_t j = 0; j < d; ++j) {
                          gp[i * d + j] += g[static_cast<std::size_t>(i)];
                        }
                      }
                    });
}

Tensor mean(const Tensor& x) {
  check_defined(x, "mean");
  if (x.rank() != 1) {
    throw Error(ErrorKind::kInvalidArgument,
                "mean: expected a 1-D tensor, got " + shape_string(x.shape()));
  }
  const std::int64_t n = x.numel();
  if (n < 1) {
    throw Error(ErrorKind::kInvalidArgument, "mean: empty batch");
  }
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return build_node({}, {acc / static_cast<double>(n)}, {x},
                    [n](detail::TensorNode& self) {
                      auto& p = *self.parents[0];
                      if (!p.requires_grad) return;
                      auto& gp = p.ensure_grad();
                      const double g = (*self.grad)[0] / static_cast<double>(n);
                      for (auto& v : gp) v += g;
                    });
}

Tensor sum(const Tensor& x) {
  check_defined(x, "sum");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return build_node({}, {acc}, {x}, [](detail::TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& gp = p.ensure_grad();
    const double g = (*self.grad)[0];
    for (auto& v : gp) v += g;
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  check_defined(a, "concat_rows");
  check_defined(b, "concat_rows");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw Error(ErrorKind::kInvalidArgument,
                "concat_rows: column counts differ: " + shape_string(a.shape()) +
                    " vs " + shape_string(b.shape()));
  }
  const std::int64_t na = a.dim(0), nb = b.dim(0), d = a.dim(1);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>((na + nb) * d));
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  return build_node({na + nb, d}, std::move(out), {a, b},
                    [na, d](detail::TensorNode& self) {
                      const auto& g = *self.grad;
                      auto& pa = *self.parents[0];
                      auto& pb = *self.parents[1];
                      const std::size_t split =
                          static_cast<std::size_t>(na * d);
                      if (pa.requires_grad) {
                        auto& ga = pa.ensure_grad();
                        for (std::size_t i = 0; i < split; ++i) ga[i] += g[i];
                      }
                      if (pb.requires_grad) {
                        auto& gb = pb.ensure_grad();
                        for (std::size_t i = split; i < g.size(); ++i) {
                          gb[i - split] += g[i];
                        }
                      }
                    });
}

Tensor add_row_vector(const Tensor& x, const Tensor& b) {
  check_defined(x, "add_row_vector");
  check_defined(b, "add_row_vector");
  if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0)) {
    throw Error(ErrorKind::kInvalidArgument,
                "add_row_vector: incompatible shapes " + shape_string(x.shape()) +
                    " and " + shape_string(b.shape()));
  }
  const std::int64_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.values());
  const auto& bv = b.values();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < d; ++j) out[i * d + j] += bv[static_cast<std::size_t>(j)];
  }
  return build_node({n, d}, std::move(out), {x, b},
                    [n, d](detail::TensorNode& self) {
                      const auto& g = *self.grad;
                      auto& px = *self.parents[0];
                      auto& pb = *self.parents[1];
                      if (px.requires_grad) {
                        auto& gx = px.ensure_grad();
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                      }
                      if (pb.requires_grad) {
                        auto& gb = pb.ensure_grad();
                        for (std::int64_t i = 0; i < n; ++i) {
                          for (std::int64_t j = 0; j < d; ++j) {
                            gb[static_cast<std::size_t>(j)] += g[i * d + j];
                          }
                        }
                      }
                    });
}

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  check_defined(a, "cosine_rows");
  check_defined(b, "cosine_rows");
  if (a.rank() != 2 || b.rank() != 2 || a.shape() != b.shape()) {
    throw Error(ErrorKind::kInvalidArgument,
                "cosine_rows: shapes must match, got " + shape_string(a.shape()) +
                    " vs " + shape_string(b.shape()));
  }
  const std::int64_t n = a.dim(0), d = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  std::vector<double> norms_a(static_cast<std::size_t>(n), 0.0);
  std::vector<double> norms_b(static_cast<std::size_t>(n), 0.0);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::int64_t i = 0; i < n; ++i) {
    double na = 0.0, nb = 0.0, ip = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double u = pa[i * d + j], v = pb[i * d + j];
      na += u * u;
      nb += v * v;
      ip += u * v;
    }
    na = std::max(std::sqrt(na), kNormEpsilon);
    nb = std::max(std::sqrt(nb), kNormEpsilon);
    norms_a[static_cast<std::size_t>(i)] = na;
    norms_b[static_cast<std::size_t>(i)] = nb;
    out[static_cast<std::size_t>(i)] = ip / (na * nb);
  }
  return build_node(
      {n}, std::move(out), {a, b},
      [n, d, norms_a = std::move(norms_a),
       norms_b = std::move(norms_b)](detail::TensorNode& self) {
        const auto& g = *self.grad;
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::int64_t i = 0; i < n; ++i) {
          const double gi = g[static_cast<std::size_t>(i)];
          if (gi == 0.0) continue;
          const double c = self.values[static_cast<std::size_t>(i)];
          const double na = norms_a[static_cast<std::size_t>(i)];
          const double nb = norms_b[static_cast<std::size_t>(i)];
          if (pa.requires_grad) {
            auto& ga = pa.ensure_grad();
            for (std::int64_t j = 0; j < d; ++j) {
              const double u = pa.values[i * d + j];
              const double v = pb.values[i * d + j];
              ga[i * d + j] += gi * (v / (na * nb) - c * u / (na * na));
            }
          }
          if (pb.requires_grad) {
            auto& gb = pb.ensure_grad();
            for (std::int64_t j = 0; j < d; ++j) {
              const double u = pa.values[i * d + j];
              const double v = pb.values[i * d + j];
              gb[i * d + j] += gi * (u / (na * nb) - c * v / (nb * nb));
            }
          }
        }
      });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  check_defined(logits, "softmax_cross_entropy");
  if (logits.rank() != 2) {
    throw Error(ErrorKind::kInvalidArgument,
                "softmax_cross_entropy: expected 2-D logits, got " +
                    shape_string(logits.shape()));
  }
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw Error(ErrorKind::kInvalidArgument,
                "softmax_cross_entropy: " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(n) + " rows");
  }
  if (n < 1) {
    throw Error(ErrorKind::kInvalidArgument, "softmax_cross_entropy: empty batch");
  }
  for (int y : labels) {
    if (y < 0 || y >= c) {
      throw Error(ErrorKind::kInvalidArgument,
                  "softmax_cross_entropy: label " + std::to_string(y) +
                      " out of range [0, " + std::to_string(c) + ")");
    }
  }
  const double* pl = logits.values().data();
  std::vector<double> probs(static_cast<std::size_t>(n * c), 0.0);
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = pl + i * c;
    double m = row[0];
    for (std::int64_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      const double e = std::exp(row[j] - m);
      probs[i * c + j] = e;
      z += e;
    }
    for (std::int64_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    const int y = labels[static_cast<std::size_t>(i)];
    loss += std::log(z) - (row[y] - m);
  }
  loss /= static_cast<double>(n);
  return build_node(
      {}, {loss}, {logits},
      [n, c, probs = std::move(probs), labels](detail::TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& gp = p.ensure_grad();
        const double g = (*self.grad)[0] / static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i) {
          const int y = labels[static_cast<std::size_t>(i)];
          for (std::int64_t j = 0; j < c; ++j) {
            const double delta = (j == y) ? 1.0 : 0.0;
            gp[i * c + j] += g * (probs[i * c + j] - delta);
          }
        }
      });
}

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& root) {
  check_defined(root, "backward");
  if (root.numel() != 1) {
    throw Error(ErrorKind::kInvalidArgument,
                "backward: root must be a scalar, got " +
                    shape_string(root.shape()));
  }
  detail::TensorNode* root_node = root.node();
  if (!root_node->requires_grad) return;

  // Post-order over the requires_grad ancestor closure of root.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root_node, 0});
  visited.insert(root_node);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorNode* parent = f.node->parents[f.next_parent++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.push_back({parent, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior gradients are per-invocation scratch; leaves accumulate.
  for (auto* node : order) {
    if (!node->is_leaf() && node->grad) {
      std::fill(node->grad->begin(), node->grad->end(), 0.0);
    }
  }
  root_node->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* node = *it;
    if (node->backprop && node->grad) node->backprop(*node);
  }
}

}  // namespace rna
