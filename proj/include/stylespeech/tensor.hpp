// Copyright 2026 The stylespeech authors
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
//
// Reverse-mode autodiff over dense tensors. Templated on the scalar type:
// the model runs on float storage (reductions still accumulate in double),
// gradient checking instantiates the same code with double storage.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "stylespeech/error.hpp"
#include "stylespeech/kernels.hpp"
#include "stylespeech/rng.hpp"

namespace stylespeech::ad {

using Shape = std::vector<int>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename T>
struct NodeT {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;     // persistent gradient; empty means absent
  bool trainable = false;  // leaves only
  bool tracked = false;    // participates in gradient flow
  const void* tape_tag = nullptr;  // tape that produced this node, if any

  int64_t numel() const { return numel_of(shape); }
};

template <typename T>
class TensorT {
 public:
  TensorT() : node_(std::make_shared<NodeT<T>>()) {}

  static TensorT zeros(Shape shape) {
    TensorT t;
    t.node_->shape = std::move(shape);
    t.node_->values.assign(t.node_->numel(), T(0));
    return t;
  }
  static TensorT full(Shape shape, T value) {
    TensorT t = zeros(std::move(shape));
    std::fill(t.node_->values.begin(), t.node_->values.end(), value);
    return t;
  }
  static TensorT from(Shape shape, std::vector<T> values) {
    if (numel_of(shape) != static_cast<int64_t>(values.size())) {
      throw Error(ErrorKind::ShapeMismatch,
                  "value count " + std::to_string(values.size()) + " does not fill shape " +
                      shape_str(shape));
    }
    TensorT t;
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    return t;
  }
  static TensorT scalar(T v) { return from({1}, {v}); }
  // Trainable leaf.
  static TensorT param(Shape shape, std::vector<T> values) {
    TensorT t = from(std::move(shape), std::move(values));
    t.node_->trainable = true;
    t.node_->tracked = true;
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[i]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return node_->numel(); }

  std::vector<T>& values() { return node_->values; }
  const std::vector<T>& values() const { return node_->values; }
  T item() const {
    if (numel() != 1)
      throw Error(ErrorKind::ShapeMismatch, "item() on non-scalar " + shape_str(shape()));
    return node_->values[0];
  }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const { return node_->grad; }
  std::vector<T>& mutable_grad() { return node_->grad; }
  void clear_grad() { node_->grad.clear(); }

  // Deep copy of shape, values and flags (not the gradient).
  TensorT clone() const {
    TensorT t;
    t.node_->shape = node_->shape;
    t.node_->values = node_->values;
    t.node_->trainable = node_->trainable;
    t.node_->tracked = node_->tracked;
    return t;
  }

  bool trainable() const { return node_->trainable; }
  void set_trainable(bool flag) {
    node_->trainable = flag;
    node_->tracked = flag;
    if (!flag) node_->grad.clear();
  }
  bool tracked() const { return node_->tracked; }

  std::shared_ptr<NodeT<T>> node() const { return node_; }

 private:
  std::shared_ptr<NodeT<T>> node_;
};

// Ordered collection of named parameters, partitioned into groups. Iteration
// and serialization order is declaration order.
template <typename T>
class ParameterSetT {
 public:
  struct Entry {
    std::string name;
    std::string group;
    TensorT<T> tensor;
  };

  void add(const std::string& name, const std::string& group, TensorT<T> tensor) {
    if (index_.count(name))
      throw Error(ErrorKind::ParseError, "duplicate parameter name " + name);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, group, std::move(tensor)});
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  TensorT<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
      throw Error(ErrorKind::UnknownSymbol, "no parameter named " + name);
    return entries_[it->second].tensor;
  }
  const TensorT<T>& at(const std::string& name) const {
    return const_cast<ParameterSetT*>(this)->at(name);
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  void zero_grads() {
    for (auto& e : entries_) e.tensor.clear_grad();
  }

  int64_t total_values() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Toggle trainability for every parameter whose name the selector accepts;
// returns how many matched.
template <typename T>
int set_trainable(ParameterSetT<T>& params,
                  const std::function<bool(const std::string&)>& selector, bool flag) {
  int count = 0;
  for (auto& e : params.entries()) {
    if (selector(e.name)) {
      e.tensor.set_trainable(flag);
      ++count;
    }
  }
  return count;
}

inline std::function<bool(const std::string&)> name_prefix(std::string prefix) {
  return [p = std::move(prefix)](const std::string& name) { return name.rfind(p, 0) == 0; };
}

template <typename T>
class TapeT {
 public:
  using Node = NodeT<T>;
  using Tensor = TensorT<T>;

  explicit TapeT(bool recording = true) : recording_(recording) {}
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  bool recording() const { return recording_; }
  size_t num_records() const { return records_.size(); }
  void clear() { records_.clear(); }

  // -- primitives ----------------------------------------------------------

  Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    if (a.dim(1) != b.dim(0)) throw shape_error("matmul", a.shape(), b.shape());
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    kernels::matmul(a.values().data(), b.values().data(), out.values().data(), m, k, n);
    if (should_track({a, b})) {
      record(out, [an = a.node(), bn = b.node(), on = out.node(), m, k, n](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        if (an->tracked) {
          std::vector<T> bt(static_cast<size_t>(k) * n);
          transpose_into(bn->values.data(), bt.data(), k, n);
          std::vector<T> da(static_cast<size_t>(m) * k);
          kernels::matmul(dy.data(), bt.data(), da.data(), m, n, k);
          axpy(g, an, da);
        }
        if (bn->tracked) {
          std::vector<T> at(static_cast<size_t>(m) * k);
          transpose_into(an->values.data(), at.data(), m, k);
          std::vector<T> db(static_cast<size_t>(k) * n);
          kernels::matmul(at.data(), dy.data(), db.data(), k, m, n);
          axpy(g, bn, db);
        }
      });
    }
    return out;
  }

  // b may broadcast as a row {1,d} or a column {n,1} against a 2-D a.
  Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, /*is_mul=*/false); }
  Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, /*is_mul=*/true); }

  Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    kernels::map_elementwise(x.values().data(), out.values().data(), x.numel(),
                             [](T v) { return v > T(0) ? v : T(0); });
    if (should_track({x})) {
      record(out, [xn = x.node(), on = out.node()](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        if (!xn->tracked) return;
        std::vector<T>& dx = slot(g, xn);
        for (size_t i = 0; i < dy.size(); ++i)
          if (xn->values[i] > T(0)) dx[i] += dy[i];
      });
    }
    return out;
  }

  Tensor softmax(const Tensor& x) {
    require_rank(x, 2, "softmax");
    const int rows = x.dim(0), cols = x.dim(1);
    Tensor out = Tensor::zeros(x.shape());
    kernels::softmax_rows(x.values().data(), out.values().data(), rows, cols);
    if (should_track({x})) {
      record(out, [xn = x.node(), on = out.node(), rows, cols](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        if (!xn->tracked) return;
        std::vector<T>& dx = slot(g, xn);
        for (int i = 0; i < rows; ++i) {
          const T* y = on->values.data() + static_cast<int64_t>(i) * cols;
          const T* d = dy.data() + static_cast<int64_t>(i) * cols;
          double dot = 0.0;
          for (int j = 0; j < cols; ++j) dot += static_cast<double>(d[j]) * y[j];
          T* dst = dx.data() + static_cast<int64_t>(i) * cols;
          for (int j = 0; j < cols; ++j)
            dst[j] += static_cast<T>(y[j] * (static_cast<double>(d[j]) - dot));
        }
      });
    }
    return out;
  }

  Tensor layer_norm(const Tensor& x) {
    require_rank(x, 2, "layer_norm");
    const int rows = x.dim(0), cols = x.dim(1);
    Tensor out = Tensor::zeros(x.shape());
    auto mean = std::make_shared<std::vector<T>>(rows);
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    kernels::layernorm_rows(x.values().data(), out.values().data(), mean->data(),
                            inv_std->data(), rows, cols, kLayerNormEps);
    if (should_track({x})) {
      record(out, [xn = x.node(), on = out.node(), mean, inv_std, rows, cols](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        if (!xn->tracked) return;
        std::vector<T>& dx = slot(g, xn);
        for (int i = 0; i < rows; ++i) {
          const T* xi = xn->values.data() + static_cast<int64_t>(i) * cols;
          const T* di = dy.data() + static_cast<int64_t>(i) * cols;
          T* dst = dx.data() + static_cast<int64_t>(i) * cols;
          const double mu = (*mean)[i], inv = (*inv_std)[i];
          double dmean = 0.0, dxhat = 0.0;
          for (int j = 0; j < cols; ++j) {
            const double xh = (xi[j] - mu) * inv;
            dmean += di[j];
            dxhat += di[j] * xh;
          }
          dmean /= cols;
          dxhat /= cols;
          for (int j = 0; j < cols; ++j) {
            const double xh = (xi[j] - mu) * inv;
            dst[j] += static_cast<T>(inv * (di[j] - dmean - xh * dxhat));
          }
        }
      });
    }
    return out;
  }

  // x: n x cin, w: kw x cin x cout (kw odd), zero same-padding.
  Tensor conv1d(const Tensor& x, const Tensor& w) {
    require_rank(x, 2, "conv1d input");
    require_rank(w, 3, "conv1d kernel");
    if (w.dim(0) % 2 == 0)
      throw Error(ErrorKind::ShapeMismatch,
                  "conv1d kernel width must be odd, got " + std::to_string(w.dim(0)));
    if (x.dim(1) != w.dim(1)) throw shape_error("conv1d", x.shape(), w.shape());
    const int n = x.dim(0), cin = x.dim(1), kw = w.dim(0), cout = w.dim(2);
    Tensor out = Tensor::zeros({n, cout});
    kernels::conv1d(x.values().data(), w.values().data(), out.values().data(), n, cin, cout,
                    kw);
    if (should_track({x, w})) {
      record(out, [xn = x.node(), wn = w.node(), on = out.node(), n, cin, cout, kw](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        const int half = kw / 2;
        if (xn->tracked) {
          std::vector<T>& dx = slot(g, xn);
          const bool par = kernels::parallel();
#pragma omp parallel for schedule(static) if (par && n > 1)
          for (int s = 0; s < n; ++s) {
            std::vector<double> acc(cin, 0.0);
            for (int k = 0; k < kw; ++k) {
              const int t = s + half - k;
              if (t < 0 || t >= n) continue;
              const T* dyt = dy.data() + static_cast<int64_t>(t) * cout;
              for (int ci = 0; ci < cin; ++ci) {
                const T* wr = wn->values.data() + (static_cast<int64_t>(k) * cin + ci) * cout;
                double a = 0.0;
                for (int co = 0; co < cout; ++co)
                  a += static_cast<double>(dyt[co]) * static_cast<double>(wr[co]);
                acc[ci] += a;
              }
            }
            T* dst = dx.data() + static_cast<int64_t>(s) * cin;
            for (int ci = 0; ci < cin; ++ci) dst[ci] += static_cast<T>(acc[ci]);
          }
        }
        if (wn->tracked) {
          std::vector<T>& dw = slot(g, wn);
          const bool par = kernels::parallel();
#pragma omp parallel for schedule(static) if (par && kw * cin > 1)
          for (int kc = 0; kc < kw * cin; ++kc) {
            const int k = kc / cin, ci = kc % cin;
            std::vector<double> acc(cout, 0.0);
            for (int t = 0; t < n; ++t) {
              const int s = t + k - half;
              if (s < 0 || s >= n) continue;
              const double xv = xn->values[static_cast<int64_t>(s) * cin + ci];
              const T* dyt = dy.data() + static_cast<int64_t>(t) * cout;
              for (int co = 0; co < cout; ++co) acc[co] += xv * static_cast<double>(dyt[co]);
            }
            T* dst = dw.data() + static_cast<int64_t>(kc) * cout;
            for (int co = 0; co < cout; ++co) dst[co] += static_cast<T>(acc[co]);
          }
        }
      });
    }
    return out;
  }

  Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    require_rank(table, 2, "embedding table");
    const int v = table.dim(0), d = table.dim(1);
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= v)
        throw Error(ErrorKind::IdOutOfRange, "id " + std::to_string(ids[i]) + " at position " +
                                                 std::to_string(i) + " outside table of " +
                                                 std::to_string(v));
    }
    const int n = static_cast<int>(ids.size());
    Tensor out = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i) {
      std::copy_n(table.values().data() + static_cast<int64_t>(ids[i]) * d, d,
                  out.values().data() + static_cast<int64_t>(i) * d);
    }
    if (should_track({table})) {
      record(out, [tn = table.node(), on = out.node(), ids, d](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        if (!tn->tracked) return;
        std::vector<T>& dt = slot(g, tn);
        for (size_t i = 0; i < ids.size(); ++i) {  // serial: ids may repeat
          const T* src = dy.data() + static_cast<int64_t>(i) * d;
          T* dst = dt.data() + static_cast<int64_t>(ids[i]) * d;
          for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
      });
    }
    return out;
  }

  // Inverted dropout: train scales kept values by 1/(1-p), eval is identity.
  Tensor dropout(const Tensor& x, double p, bool training, std::mt19937& rng) {
    if (!(p >= 0.0 && p < 1.0))
      throw Error(ErrorKind::InvalidProbability,
                  "dropout probability " + std::to_string(p) + " outside [0,1)");
    if (!training || p == 0.0) return x;
    const double keep = 1.0 - p;
    const T scale = static_cast<T>(1.0 / keep);
    auto mask = std::make_shared<std::vector<uint8_t>>(x.numel());
    for (auto& m : *mask) m = uniform_double(rng) >= p ? 1 : 0;
    Tensor out = Tensor::zeros(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i)
      out.values()[i] = (*mask)[i] ? x.values()[i] * scale : T(0);
    if (should_track({x})) {
      record(out, [xn = x.node(), on = out.node(), mask, scale](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        if (!xn->tracked) return;
        std::vector<T>& dx = slot(g, xn);
        for (size_t i = 0; i < dy.size(); ++i)
          if ((*mask)[i]) dx[i] += dy[i] * scale;
      });
    }
    return out;
  }

  Tensor transpose(const Tensor& x) {
    require_rank(x, 2, "transpose");
    const int m = x.dim(0), n = x.dim(1);
    Tensor out = Tensor::zeros({n, m});
    transpose_into(x.values().data(), out.values().data(), m, n);
    if (should_track({x})) {
      record(out, [xn = x.node(), on = out.node(), m, n](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        if (!xn->tracked) return;
        std::vector<T>& dx = slot(g, xn);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) dx[static_cast<int64_t>(i) * n + j] += dy[static_cast<int64_t>(j) * m + i];
      });
    }
    return out;
  }

  Tensor concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw Error(ErrorKind::EmptyInput, "concat of zero tensors");
    if (axis != 0 && axis != 1) throw Error(ErrorKind::ShapeMismatch, "concat axis must be 0 or 1");
    for (const auto& x : xs) require_rank(x, 2, "concat");
    const int fixed = xs[0].dim(1 - axis);
    int total = 0;
    for (const auto& x : xs) {
      if (x.dim(1 - axis) != fixed) throw shape_error("concat", xs[0].shape(), x.shape());
      total += x.dim(axis);
    }
    Shape os = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
    Tensor out = Tensor::zeros(os);
    int offset = 0;
    for (const auto& x : xs) {
      copy_block(x.values().data(), x.dim(0), x.dim(1), out.values().data(), out.dim(1),
                 axis == 0 ? offset : 0, axis == 1 ? offset : 0);
      offset += x.dim(axis);
    }
    bool track = false;
    for (const auto& x : xs) track = track || x.tracked();
    if (recording_ && track) {
      std::vector<std::shared_ptr<Node>> nodes;
      for (const auto& x : xs) nodes.push_back(x.node());
      record(out, [nodes, on = out.node(), axis](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        const int ocols = on->shape[1];
        int offset = 0;
        for (const auto& xn : nodes) {
          const int r = xn->shape[0], c = xn->shape[1];
          if (xn->tracked) {
            std::vector<T>& dx = slot(g, xn);
            for (int i = 0; i < r; ++i)
              for (int j = 0; j < c; ++j) {
                const int oi = axis == 0 ? i + offset : i;
                const int oj = axis == 1 ? j + offset : j;
                dx[static_cast<int64_t>(i) * c + j] += dy[static_cast<int64_t>(oi) * ocols + oj];
              }
          }
          offset += xn->shape[axis];
        }
      });
    }
    return out;
  }

  Tensor slice(const Tensor& x, int axis, int start, int len) {
    require_rank(x, 2, "slice");
    if (axis != 0 && axis != 1) throw Error(ErrorKind::ShapeMismatch, "slice axis must be 0 or 1");
    if (start < 0 || len < 0 || start + len > x.dim(axis))
      throw Error(ErrorKind::ShapeMismatch,
                  "slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                      ") outside extent " + std::to_string(x.dim(axis)));
    const int rows = axis == 0 ? len : x.dim(0);
    const int cols = axis == 1 ? len : x.dim(1);
    Tensor out = Tensor::zeros({rows, cols});
    const int xc = x.dim(1);
    for (int i = 0; i < rows; ++i) {
      const int xi = axis == 0 ? i + start : i;
      const int xj = axis == 1 ? start : 0;
      std::copy_n(x.values().data() + static_cast<int64_t>(xi) * xc + xj, cols,
                  out.values().data() + static_cast<int64_t>(i) * cols);
    }
    if (should_track({x})) {
      record(out, [xn = x.node(), on = out.node(), axis, start, rows, cols](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        if (!xn->tracked) return;
        std::vector<T>& dx = slot(g, xn);
        const int xc = xn->shape[1];
        for (int i = 0; i < rows; ++i) {
          const int xi = axis == 0 ? i + start : i;
          const int xj = axis == 1 ? start : 0;
          for (int j = 0; j < cols; ++j)
            dx[static_cast<int64_t>(xi) * xc + xj + j] += dy[static_cast<int64_t>(i) * cols + j];
        }
      });
    }
    return out;
  }

  Tensor scale(const Tensor& x, T s) {
    Tensor out = Tensor::zeros(x.shape());
    kernels::map_elementwise(x.values().data(), out.values().data(), x.numel(),
                             [s](T v) { return v * s; });
    if (should_track({x})) {
      record(out, [xn = x.node(), on = out.node(), s](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        if (!xn->tracked) return;
        std::vector<T>& dx = slot(g, xn);
        for (size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * s;
      });
    }
    return out;
  }

  Tensor sum(const Tensor& x) {
    Tensor out = Tensor::scalar(static_cast<T>(kernels::reduce_sum(x.values().data(), x.numel())));
    if (should_track({x})) {
      record(out, [xn = x.node(), on = out.node()](GradMap& g) {
        const T dy = g.at(on.get())[0];
        if (!xn->tracked) return;
        std::vector<T>& dx = slot(g, xn);
        for (auto& v : dx) v += dy;
      });
    }
    return out;
  }

  Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    return mse_loss_impl(pred, target, nullptr);
  }
  // Weighted mean square error: sum(w * (p - t)^2) / sum(w). Weights are a
  // constant (not differentiated); an all-zero weight gives loss 0.
  Tensor mse_loss(const Tensor& pred, const Tensor& target, const Tensor& weights) {
    if (weights.shape() != pred.shape())
      throw shape_error("mse_loss weights", pred.shape(), weights.shape());
    return mse_loss_impl(pred, target, &weights);
  }

  // Row i of x repeated counts[i] times, in order; zero counts drop the row.
  Tensor repeat_rows(const Tensor& x, const std::vector<int>& counts) {
    require_rank(x, 2, "repeat_rows");
    if (static_cast<int>(counts.size()) != x.dim(0))
      throw Error(ErrorKind::LengthMismatch,
                  "have " + std::to_string(counts.size()) + " counts for " +
                      std::to_string(x.dim(0)) + " rows");
    int64_t m = 0;
    for (int c : counts) {
      if (c < 0)
        throw Error(ErrorKind::NegativeDuration, "negative repeat count " + std::to_string(c));
      m += c;
    }
    const int d = x.dim(1);
    Tensor out = Tensor::zeros({static_cast<int>(m), d});
    auto offsets = std::make_shared<std::vector<int64_t>>(counts.size() + 1, 0);
    for (size_t i = 0; i < counts.size(); ++i) (*offsets)[i + 1] = (*offsets)[i] + counts[i];
    for (size_t i = 0; i < counts.size(); ++i) {
      for (int r = 0; r < counts[i]; ++r) {
        std::copy_n(x.values().data() + static_cast<int64_t>(i) * d, d,
                    out.values().data() + ((*offsets)[i] + r) * d);
      }
    }
    if (should_track({x})) {
      record(out, [xn = x.node(), on = out.node(), offsets, d](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        if (!xn->tracked) return;
        std::vector<T>& dx = slot(g, xn);
        const int n = static_cast<int>(offsets->size()) - 1;
        const bool par = kernels::parallel();
#pragma omp parallel for schedule(static) if (par && n > 1)
        for (int i = 0; i < n; ++i) {
          for (int64_t r = (*offsets)[i]; r < (*offsets)[i + 1]; ++r) {
            const T* src = dy.data() + r * d;
            T* dst = dx.data() + static_cast<int64_t>(i) * d;
            for (int j = 0; j < d; ++j) dst[j] += src[j];
          }
        }
      });
    }
    return out;
  }

  // -- backward -------------------------------------------------------------

  // Populates gradients of every trainable tensor reachable from loss.
  // Trainable gradients accumulate across backward calls until cleared.
  void backward(const Tensor& loss) {
    if (loss.numel() != 1)
      throw Error(ErrorKind::NonScalarLoss, "loss has shape " + shape_str(loss.shape()));
    if (records_.empty()) throw Error(ErrorKind::EmptyTape, "no operations recorded");
    if (loss.node()->tape_tag != this)
      throw Error(ErrorKind::EmptyTape, "loss is not connected to this tape");
    GradMap grads;
    grads[loss.node().get()] = {T(1)};
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (grads.find(it->out.get()) == grads.end()) continue;
      it->backward(grads);
    }
    // Intermediate gradients are scratch; only trainable tensors keep theirs,
    // accumulating across backward calls until cleared.
    for (auto& [node, g] : grads) {
      if (!node->trainable) continue;
      if (node->grad.empty()) node->grad.assign(node->numel(), T(0));
      for (size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
    }
  }

 private:
  using GradMap = std::unordered_map<NodeT<T>*, std::vector<T>>;

  struct Record {
    std::shared_ptr<Node> out;
    std::function<void(GradMap&)> backward;
  };

  static constexpr double kLayerNormEps = 1e-5;

  bool should_track(std::initializer_list<Tensor> inputs) const {
    if (!recording_) return false;
    for (const auto& t : inputs)
      if (t.tracked()) return true;
    return false;
  }

  void record(Tensor& out, std::function<void(GradMap&)> fn) {
    out.node()->tracked = true;
    out.node()->tape_tag = this;
    records_.push_back(Record{out.node(), std::move(fn)});
  }

  static std::vector<T>& slot(GradMap& g, const std::shared_ptr<Node>& n) {
    auto [it, fresh] = g.try_emplace(n.get());
    if (fresh) it->second.assign(n->numel(), T(0));
    return it->second;
  }

  static void axpy(GradMap& g, const std::shared_ptr<Node>& n, const std::vector<T>& delta) {
    std::vector<T>& dst = slot(g, n);
    for (size_t i = 0; i < delta.size(); ++i) dst[i] += delta[i];
  }

  static void transpose_into(const T* src, T* dst, int rows, int cols) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) dst[static_cast<int64_t>(j) * rows + i] = src[static_cast<int64_t>(i) * cols + j];
  }

  static void copy_block(const T* src, int rows, int cols, T* dst, int dst_cols, int row_off,
                         int col_off) {
    for (int i = 0; i < rows; ++i)
      std::copy_n(src + static_cast<int64_t>(i) * cols, cols,
                  dst + static_cast<int64_t>(i + row_off) * dst_cols + col_off);
  }

  static Error shape_error(const std::string& op, const Shape& a, const Shape& b) {
    return Error(ErrorKind::ShapeMismatch, op + ": " + shape_str(a) + " vs " + shape_str(b));
  }

  static void require_rank(const Tensor& t, int rank, const std::string& what) {
    if (t.rank() != rank)
      throw Error(ErrorKind::ShapeMismatch,
                  what + " must have rank " + std::to_string(rank) + ", got " +
                      shape_str(t.shape()));
  }

  enum class Broadcast { None, Row, Col };

  Tensor binary(const Tensor& a, const Tensor& b, bool is_mul) {
    Broadcast bc = Broadcast::None;
    if (a.shape() == b.shape()) {
      bc = Broadcast::None;
    } else if (a.rank() == 2 && b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1)) {
      bc = Broadcast::Row;
    } else if (a.rank() == 2 && b.rank() == 2 && b.dim(1) == 1 && b.dim(0) == a.dim(0)) {
      bc = Broadcast::Col;
    } else {
      throw shape_error(is_mul ? "mul" : "add", a.shape(), b.shape());
    }
    const int rows = a.rank() == 2 ? a.dim(0) : 1;
    const int cols = a.rank() == 2 ? a.dim(1) : static_cast<int>(a.numel());
    Tensor out = Tensor::zeros(a.shape());
    const T* av = a.values().data();
    const T* bv = b.values().data();
    T* ov = out.values().data();
    if (bc == Broadcast::None) {
      if (is_mul)
        kernels::zip_elementwise(av, bv, ov, a.numel(), [](T x, T y) { return x * y; });
      else
        kernels::zip_elementwise(av, bv, ov, a.numel(), [](T x, T y) { return x + y; });
    } else {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          const T bj = bc == Broadcast::Row ? bv[j] : bv[i];
          const int64_t idx = static_cast<int64_t>(i) * cols + j;
          ov[idx] = is_mul ? av[idx] * bj : av[idx] + bj;
        }
    }
    if (should_track({a, b})) {
      record(out, [an = a.node(), bn = b.node(), on = out.node(), bc, is_mul, rows,
                   cols](GradMap& g) {
        const std::vector<T>& dy = g.at(on.get());
        if (an->tracked) {
          std::vector<T>& da = slot(g, an);
          if (!is_mul) {
            for (size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
          } else if (bc == Broadcast::None) {
            for (size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bn->values[i];
          } else {
            for (int i = 0; i < rows; ++i)
              for (int j = 0; j < cols; ++j) {
                const T bj = bc == Broadcast::Row ? bn->values[j] : bn->values[i];
                da[static_cast<int64_t>(i) * cols + j] += dy[static_cast<int64_t>(i) * cols + j] * bj;
              }
          }
        }
        if (bn->tracked) {
          std::vector<T>& db = slot(g, bn);
          if (bc == Broadcast::None) {
            if (!is_mul)
              for (size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
            else
              for (size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * an->values[i];
          } else if (bc == Broadcast::Row) {
            for (int j = 0; j < cols; ++j) {
              double acc = 0.0;
              for (int i = 0; i < rows; ++i) {
                const int64_t idx = static_cast<int64_t>(i) * cols + j;
                acc += static_cast<double>(dy[idx]) * (is_mul ? static_cast<double>(an->values[idx]) : 1.0);
              }
              db[j] += static_cast<T>(acc);
            }
          } else {
            for (int i = 0; i < rows; ++i) {
              double acc = 0.0;
              for (int j = 0; j < cols; ++j) {
                const int64_t idx = static_cast<int64_t>(i) * cols + j;
                acc += static_cast<double>(dy[idx]) * (is_mul ? static_cast<double>(an->values[idx]) : 1.0);
              }
              db[i] += static_cast<T>(acc);
            }
          }
        }
      });
    }
    return out;
  }

  Tensor mse_loss_impl(const Tensor& pred, const Tensor& target, const Tensor* weights) {
    if (pred.shape() != target.shape())
      throw shape_error("mse_loss", pred.shape(), target.shape());
    const int64_t n = pred.numel();
    double wsum = 0.0, acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double w = weights ? static_cast<double>(weights->values()[i]) : 1.0;
      const double d = static_cast<double>(pred.values()[i]) - static_cast<double>(target.values()[i]);
      acc += w * d * d;
      wsum += w;
    }
    const double loss = wsum > 0.0 ? acc / wsum : 0.0;
    Tensor out = Tensor::scalar(static_cast<T>(loss));
    if (should_track({pred, target})) {
      std::shared_ptr<Node> wn = weights ? weights->node() : nullptr;
      record(out, [pn = pred.node(), tn = target.node(), wn, on = out.node(), wsum](GradMap& g) {
        if (wsum <= 0.0) return;
        const T dy = g.at(on.get())[0];
        const double inv = 2.0 / wsum;
        auto push = [&](const std::shared_ptr<Node>& node, double sign) {
          if (!node->tracked) return;
          std::vector<T>& dst = slot(g, node);
          for (size_t i = 0; i < dst.size(); ++i) {
            const double w = wn ? static_cast<double>(wn->values[i]) : 1.0;
            const double d = static_cast<double>(pn->values[i]) - static_cast<double>(tn->values[i]);
            dst[i] += static_cast<T>(sign * dy * w * d * inv);
          }
        };
        push(pn, 1.0);
        push(tn, -1.0);
      });
    }
    return out;
  }

  std::vector<Record> records_;
  bool recording_;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using ParameterSet = ParameterSetT<float>;

// Central-difference gradient check. Returns the max over coordinates of
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <typename T>
double grad_check(const std::function<TensorT<T>(TapeT<T>&, std::vector<TensorT<T>>&)>& f,
                  std::vector<TensorT<T>> inputs, double eps) {
  for (auto& t : inputs) t.set_trainable(true);
  TapeT<T> tape;
  TensorT<T> loss = f(tape, inputs);
  if (loss.tracked() && tape.num_records() > 0) tape.backward(loss);

  auto eval = [&](std::vector<TensorT<T>>& ins) {
    TapeT<T> t(false);
    return static_cast<double>(f(t, ins).item());
  };

  double max_err = 0.0;
  for (auto& t : inputs) {
    const std::vector<T> analytic =
        t.has_grad() ? t.grad() : std::vector<T>(t.numel(), T(0));
    for (int64_t c = 0; c < t.numel(); ++c) {
      const T saved = t.values()[c];
      t.values()[c] = saved + static_cast<T>(eps);
      const double lp = eval(inputs);
      t.values()[c] = saved - static_cast<T>(eps);
      const double lm = eval(inputs);
      t.values()[c] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = static_cast<double>(analytic[c]);
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace stylespeech::ad
