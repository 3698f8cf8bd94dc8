#pragma once

// Reverse-mode automatic differentiation on matrix-valued nodes.
//
// A Tape records an eagerly-evaluated computation graph. Every op appends a
// node holding its value and a backprop callback. The callback expresses the
// vector-Jacobian product *in terms of further tape ops*, so the adjoint of a
// node is itself a differentiable graph node. Calling grad() with
// create_graph semantics therefore supports the nested derivative needed for
// SDF normals and deformation Jacobians: gradients computed by one backward
// pass can participate in a loss that is differentiated again.
//
// Columns of a node's matrix are batch entries; batch entries never interact
// except through explicit reductions, so the adjoint of a (rows x N) input
// under a summed scalar root is the per-column gradient.

#include <cassert>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ndr/common.hpp"

namespace ndr::ad {

using ndr::Mat;

template <class T>
class Tape;

template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat<T>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <class T>
class Tape {
 public:
  struct Accum;
  using Backprop = std::function<void(Tape&, int self, Var<T> adj, Accum&)>;

  struct Node {
    Mat<T> value;
    std::vector<int> inputs;
    Backprop backprop;   // empty for leaves and constants
    bool needs_grad = false;
  };

  // Adjoint accumulator for one backward sweep.
  struct Accum {
    Tape& tape;
    std::vector<int>& adjoint;          // node id -> adjoint node id or -1
    const std::vector<char>& active;

    bool wants(int i) const {
      return i >= 0 && i < static_cast<int>(active.size()) && active[i];
    }
    void add(int i, Var<T> g) {
      if (!wants(i)) return;
      if (adjoint[i] < 0)
        adjoint[i] = g.id;
      else
        adjoint[i] = tape.push_add(adjoint[i], g.id);
    }
  };

  int size() const { return static_cast<int>(nodes_.size()); }
  Node& node(int i) { return nodes_[i]; }
  const Node& node(int i) const { return nodes_[i]; }
  void clear() { nodes_.clear(); }

  Var<T> push(Mat<T> value, std::vector<int> inputs, Backprop bp) {
    bool g = false;
    for (int i : inputs) g = g || nodes_[i].needs_grad;
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(bp), g});
    return Var<T>{this, size() - 1};
  }

  Var<T> constant(Mat<T> value) { return push(std::move(value), {}, {}); }

  Var<T> constant_scalar(T v) {
    Mat<T> m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  Var<T> leaf(Mat<T> value) {
    Var<T> v = push(std::move(value), {}, {});
    nodes_[v.id].needs_grad = true;
    return v;
  }

  // Reverse sweep from `root`, restricted to nodes lying on a path from some
  // target to the root. Returns one adjoint Var per target (zeros when the
  // target is unreachable from the root). New nodes appended during the sweep
  // carry backprops themselves, so the returned gradients are differentiable.
  std::vector<Var<T>> grad(Var<T> root, std::span<const Var<T>> targets) {
    NDR_CHECK(root.tape == this, "grad: root from another tape");
    const int n = root.id + 1;

    std::vector<char> desc(n, 0), anc(n, 0);
    for (const Var<T>& t : targets) {
      NDR_CHECK(t.tape == this && t.id < n, "grad: bad target");
      desc[t.id] = 1;
    }
    for (int i = 0; i < n; ++i) {
      if (desc[i]) continue;
      for (int j : nodes_[i].inputs)
        if (desc[j]) {
          desc[i] = 1;
          break;
        }
    }
    anc[root.id] = 1;
    for (int i = root.id; i >= 0; --i) {
      if (!anc[i]) continue;
      for (int j : nodes_[i].inputs) anc[j] = 1;
    }
    std::vector<char> active(n, 0);
    for (int i = 0; i < n; ++i) active[i] = desc[i] && anc[i];

    std::vector<int> adjoint(n, -1);
    adjoint[root.id] =
        constant(Mat<T>::Ones(nodes_[root.id].value.rows(),
                              nodes_[root.id].value.cols()))
            .id;

    Accum acc{*this, adjoint, active};
    for (int i = root.id; i >= 0; --i) {
      if (!active[i] || adjoint[i] < 0) continue;
      if (!nodes_[i].backprop) continue;
      Backprop bp = nodes_[i].backprop;  // copy: nodes_ may reallocate
      bp(*this, i, Var<T>{this, adjoint[i]}, acc);
    }

    std::vector<Var<T>> out;
    out.reserve(targets.size());
    for (const Var<T>& t : targets) {
      if (adjoint[t.id] >= 0)
        out.push_back(Var<T>{this, adjoint[t.id]});
      else
        out.push_back(constant(
            Mat<T>::Zero(nodes_[t.id].value.rows(), nodes_[t.id].value.cols())));
    }
    return out;
  }

  std::vector<Var<T>> grad(Var<T> root, std::initializer_list<Var<T>> targets) {
    std::vector<Var<T>> t(targets);
    return grad(root, std::span<const Var<T>>(t));
  }

 private:
  int push_add(int a, int b);
  std::vector<Node> nodes_;
};

template <class T>
const Mat<T>& Var<T>::value() const {
  return tape->node(id).value;
}

// ---------------------------------------------------------------------------
// Ops

namespace detail {
template <class T>
inline void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  NDR_CHECK(a.rows() == b.rows() && a.cols() == b.cols(),
            std::string(op) + ": shape mismatch");
}
}  // namespace detail

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "add");
  return a.tape->push(
      a.value() + b.value(), {a.id, b.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], adj);
        acc.add(t.node(self).inputs[1], adj);
      });
}

template <class T>
int Tape<T>::push_add(int a, int b) {
  return add(Var<T>{this, a}, Var<T>{this, b}).id;
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b);
template <class T>
Var<T> neg(Var<T> a);
template <class T>
Var<T> mul(Var<T> a, Var<T> b);
template <class T>
Var<T> scalar_mul(Var<T> a, T c);
template <class T>
Var<T> rows(Var<T> a, int r0, int nr);
template <class T>
Var<T> transpose(Var<T> a);
template <class T>
Var<T> sum_cols(Var<T> a);
template <class T>
Var<T> sum_rows(Var<T> a);
template <class T>
Var<T> rep_cols(Var<T> a, int n);
template <class T>
Var<T> rep_rows(Var<T> a, int m);
template <class T>
Var<T> reshape(Var<T> a, int m, int n);
template <class T>
Var<T> sigmoid(Var<T> a);

template <class T>
Var<T> neg(Var<T> a) {
  return a.tape->push(
      (-a.value()).eval(), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], neg(adj));
      });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "sub");
  return a.tape->push(
      a.value() - b.value(), {a.id, b.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], adj);
        acc.add(t.node(self).inputs[1], neg(adj));
      });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "mul");
  return a.tape->push(
      a.value().cwiseProduct(b.value()), {a.id, b.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        int ia = t.node(self).inputs[0], ib = t.node(self).inputs[1];
        if (acc.wants(ia)) acc.add(ia, mul(adj, Var<T>{&t, ib}));
        if (acc.wants(ib)) acc.add(ib, mul(adj, Var<T>{&t, ia}));
      });
}

template <class T>
Var<T> div(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "div");
  return a.tape->push(
      a.value().cwiseQuotient(b.value()), {a.id, b.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        int ia = t.node(self).inputs[0], ib = t.node(self).inputs[1];
        Var<T> vb{&t, ib};
        if (acc.wants(ia)) acc.add(ia, div(adj, vb));
        if (acc.wants(ib))
          acc.add(ib, neg(div(mul(adj, Var<T>{&t, self}), vb)));
      });
}

template <class T>
Var<T> scalar_mul(Var<T> a, T c) {
  return a.tape->push(
      (a.value() * c).eval(), {a.id},
      [c](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], scalar_mul(adj, c));
      });
}

template <class T>
Var<T> scalar_add(Var<T> a, T c) {
  return a.tape->push(
      (a.value().array() + c).matrix(), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], adj);
      });
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  NDR_CHECK(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  return a.tape->push(
      a.value() * b.value(), {a.id, b.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        int ia = t.node(self).inputs[0], ib = t.node(self).inputs[1];
        if (acc.wants(ia)) acc.add(ia, matmul(adj, transpose(Var<T>{&t, ib})));
        if (acc.wants(ib)) acc.add(ib, matmul(transpose(Var<T>{&t, ia}), adj));
      });
}

template <class T>
Var<T> transpose(Var<T> a) {
  return a.tape->push(
      a.value().transpose(), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], transpose(adj));
      });
}

// Zero-pad `a` into rows [r0, r0+a.rows) of an (m x a.cols) matrix.
template <class T>
Var<T> pad_rows(Var<T> a, int r0, int m) {
  Mat<T> v = Mat<T>::Zero(m, a.cols());
  v.middleRows(r0, a.rows()) = a.value();
  int nr = static_cast<int>(a.rows());
  return a.tape->push(
      std::move(v), {a.id},
      [r0, nr](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], rows(adj, r0, nr));
      });
}

template <class T>
Var<T> rows(Var<T> a, int r0, int nr) {
  NDR_CHECK(r0 >= 0 && r0 + nr <= a.rows(), "rows: out of range");
  int m = static_cast<int>(a.rows());
  return a.tape->push(
      a.value().middleRows(r0, nr), {a.id},
      [r0, m](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], pad_rows(adj, r0, m));
      });
}

template <class T>
Var<T> cols(Var<T> a, int c0, int nc);

template <class T>
Var<T> pad_cols(Var<T> a, int c0, int n) {
  Mat<T> v = Mat<T>::Zero(a.rows(), n);
  v.middleCols(c0, a.cols()) = a.value();
  int nc = static_cast<int>(a.cols());
  return a.tape->push(
      std::move(v), {a.id},
      [c0, nc](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], cols(adj, c0, nc));
      });
}

template <class T>
Var<T> cols(Var<T> a, int c0, int nc) {
  NDR_CHECK(c0 >= 0 && c0 + nc <= a.cols(), "cols: out of range");
  int n = static_cast<int>(a.cols());
  return a.tape->push(
      a.value().middleCols(c0, nc), {a.id},
      [c0, n](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], pad_cols(adj, c0, n));
      });
}

template <class T>
Var<T> vconcat(std::span<const Var<T>> parts) {
  NDR_CHECK(!parts.empty(), "vconcat: empty");
  Eigen::Index n = parts[0].cols(), m = 0;
  std::vector<int> ids;
  std::vector<int> sizes;
  for (const Var<T>& p : parts) {
    NDR_CHECK(p.cols() == n, "vconcat: column mismatch");
    m += p.rows();
    ids.push_back(p.id);
    sizes.push_back(static_cast<int>(p.rows()));
  }
  Mat<T> v(m, n);
  Eigen::Index r = 0;
  for (const Var<T>& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return parts[0].tape->push(
      std::move(v), std::move(ids),
      [sizes](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        std::vector<int> ins = t.node(self).inputs;
        int r0 = 0;
        for (size_t k = 0; k < ins.size(); ++k) {
          if (acc.wants(ins[k])) acc.add(ins[k], rows(adj, r0, sizes[k]));
          r0 += sizes[k];
        }
      });
}

template <class T>
Var<T> vconcat(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return vconcat(std::span<const Var<T>>(v));
}

template <class T>
Var<T> hconcat(std::span<const Var<T>> parts) {
  NDR_CHECK(!parts.empty(), "hconcat: empty");
  Eigen::Index m = parts[0].rows(), n = 0;
  std::vector<int> ids, sizes;
  for (const Var<T>& p : parts) {
    NDR_CHECK(p.rows() == m, "hconcat: row mismatch");
    n += p.cols();
    ids.push_back(p.id);
    sizes.push_back(static_cast<int>(p.cols()));
  }
  Mat<T> v(m, n);
  Eigen::Index c = 0;
  for (const Var<T>& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts[0].tape->push(
      std::move(v), std::move(ids),
      [sizes](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        std::vector<int> ins = t.node(self).inputs;
        int c0 = 0;
        for (size_t k = 0; k < ins.size(); ++k) {
          if (acc.wants(ins[k])) acc.add(ins[k], cols(adj, c0, sizes[k]));
          c0 += sizes[k];
        }
      });
}

template <class T>
Var<T> hconcat(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return hconcat(std::span<const Var<T>>(v));
}

template <class T>
Var<T> sum_all(Var<T> a) {
  Mat<T> v(1, 1);
  v(0, 0) = a.value().sum();
  int m = static_cast<int>(a.rows()), n = static_cast<int>(a.cols());
  return a.tape->push(
      std::move(v), {a.id},
      [m, n](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], rep_rows(rep_cols(adj, n), m));
      });
}

template <class T>
Var<T> mean_all(Var<T> a) {
  return scalar_mul(sum_all(a), T(1) / static_cast<T>(a.rows() * a.cols()));
}

template <class T>
Var<T> sum_rows(Var<T> a) {  // m x n -> 1 x n
  int m = static_cast<int>(a.rows());
  return a.tape->push(
      a.value().colwise().sum(), {a.id},
      [m](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], rep_rows(adj, m));
      });
}

template <class T>
Var<T> sum_cols(Var<T> a) {  // m x n -> m x 1
  int n = static_cast<int>(a.cols());
  return a.tape->push(
      a.value().rowwise().sum(), {a.id},
      [n](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], rep_cols(adj, n));
      });
}

template <class T>
Var<T> rep_cols(Var<T> a, int n) {  // m x 1 -> m x n
  NDR_CHECK(a.cols() == 1, "rep_cols: input must have one column");
  return a.tape->push(
      a.value().replicate(1, n), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], sum_cols(adj));
      });
}

template <class T>
Var<T> rep_rows(Var<T> a, int m) {  // 1 x n -> m x n
  NDR_CHECK(a.rows() == 1, "rep_rows: input must have one row");
  return a.tape->push(
      a.value().replicate(m, 1), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], sum_rows(adj));
      });
}

// Repeat each column k times (columns stay grouped: a0,a0,..,a1,a1,..).
template <class T>
Var<T> rep_each_col(Var<T> a, int k);

template <class T>
Var<T> sum_col_groups(Var<T> a, int k) {  // inverse reduction of rep_each_col
  NDR_CHECK(a.cols() % k == 0, "sum_col_groups: cols not divisible");
  int n = static_cast<int>(a.cols()) / k;
  Mat<T> v(a.rows(), n);
  for (int j = 0; j < n; ++j)
    v.col(j) = a.value().middleCols(static_cast<Eigen::Index>(j) * k, k).rowwise().sum();
  return a.tape->push(
      std::move(v), {a.id},
      [k](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], rep_each_col(adj, k));
      });
}

template <class T>
Var<T> rep_each_col(Var<T> a, int k) {
  int n = static_cast<int>(a.cols());
  Mat<T> v(a.rows(), static_cast<Eigen::Index>(n) * k);
  for (int j = 0; j < n; ++j)
    v.middleCols(static_cast<Eigen::Index>(j) * k, k) =
        a.value().col(j).replicate(1, k);
  return a.tape->push(
      std::move(v), {a.id},
      [k](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], sum_col_groups(adj, k));
      });
}

template <class T>
Var<T> reshape(Var<T> a, int m, int n) {  // column-major layout preserved
  NDR_CHECK(a.rows() * a.cols() == static_cast<Eigen::Index>(m) * n,
            "reshape: element count mismatch");
  int m0 = static_cast<int>(a.rows()), n0 = static_cast<int>(a.cols());
  Mat<T> v = Eigen::Map<const Mat<T>>(a.value().data(), m, n);
  return a.tape->push(
      std::move(v), {a.id},
      [m0, n0](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], reshape(adj, m0, n0));
      });
}

// Exclusive running sum down each column: out(i,j) = sum_{r<i} a(r,j).
template <class T>
Var<T> cumsum_excl_rows(Var<T> a);

template <class T>
Var<T> rev_cumsum_incl_rows(Var<T> a) {  // out(i,j) = sum_{r>=i} a(r,j)... shifted; see below
  // out(i,j) = sum_{r>i} a(r,j)  (exclusive suffix sum, adjoint of cumsum_excl)
  Mat<T> v = Mat<T>::Zero(a.rows(), a.cols());
  for (Eigen::Index i = a.rows() - 2; i >= 0; --i)
    v.row(i) = v.row(i + 1) + a.value().row(i + 1);
  return a.tape->push(
      std::move(v), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], cumsum_excl_rows(adj));
      });
}

template <class T>
Var<T> cumsum_excl_rows(Var<T> a) {
  Mat<T> v = Mat<T>::Zero(a.rows(), a.cols());
  for (Eigen::Index i = 1; i < a.rows(); ++i)
    v.row(i) = v.row(i - 1) + a.value().row(i - 1);
  return a.tape->push(
      std::move(v), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], rev_cumsum_incl_rows(adj));
      });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities (backprops composed from tape ops, so every
// gradient is differentiable again).

template <class T>
Var<T> sin(Var<T> a) {
  return a.tape->push(
      a.value().array().sin().matrix(), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], mul(adj, cos(Var<T>{&t, t.node(self).inputs[0]})));
      });
}

template <class T>
Var<T> cos(Var<T> a) {
  return a.tape->push(
      a.value().array().cos().matrix(), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0],
                neg(mul(adj, sin(Var<T>{&t, t.node(self).inputs[0]}))));
      });
}

template <class T>
Var<T> exp(Var<T> a) {
  return a.tape->push(
      a.value().array().exp().matrix(), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], mul(adj, Var<T>{&t, self}));
      });
}

template <class T>
Var<T> log(Var<T> a) {
  return a.tape->push(
      a.value().array().log().matrix(), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], div(adj, Var<T>{&t, t.node(self).inputs[0]}));
      });
}

template <class T>
Var<T> sqrt(Var<T> a) {
  return a.tape->push(
      a.value().array().sqrt().matrix(), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0],
                div(scalar_mul(adj, T(0.5)), Var<T>{&t, self}));
      });
}

template <class T>
Var<T> square(Var<T> a) {
  return mul(a, a);
}

template <class T>
Var<T> tanh(Var<T> a) {
  // exp-based form matching the raw-path activation; Eigen vectorizes exp
  // (not tanh) for double
  auto v = a.value().array();
  return a.tape->push(
      (T(1) - T(2) / (T(1) + (T(2) * v).exp())).matrix(), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        Var<T> y{&t, self};
        acc.add(t.node(self).inputs[0],
                mul(adj, scalar_add(neg(square(y)), T(1))));
      });
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  Mat<T> v = (T(0.5) * (a.value().array() * T(0.5)).tanh() + T(0.5)).matrix();
  return a.tape->push(
      std::move(v), {a.id},
      [](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        Var<T> y{&t, self};
        acc.add(t.node(self).inputs[0],
                mul(adj, mul(y, scalar_add(neg(y), T(1)))));
      });
}

// softplus(x) = log(1 + exp(beta x)) / beta, evaluated in overflow-safe form.
template <class T>
Var<T> softplus(Var<T> a, T beta = T(1)) {
  Mat<T> v = a.value().unaryExpr([beta](T x) {
    T bx = beta * x;
    if (bx > T(30)) return x;
    return std::log1p(std::exp(bx)) / beta;
  });
  return a.tape->push(
      std::move(v), {a.id},
      [beta](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0],
                mul(adj, sigmoid(scalar_mul(Var<T>{&t, t.node(self).inputs[0]}, beta))));
      });
}

// Clamp ops: gradient is zero on the clamped branch (matched by the finite
// difference of the clamped function away from the boundary).
template <class T>
Var<T> clamp_min(Var<T> a, T lo) {
  Mat<T> mask = (a.value().array() > lo).template cast<T>();
  return a.tape->push(
      a.value().cwiseMax(lo), {a.id},
      [mask](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], mul(adj, t.constant(mask)));
      });
}

template <class T>
Var<T> clamp_max(Var<T> a, T hi) {
  Mat<T> mask = (a.value().array() < hi).template cast<T>();
  return a.tape->push(
      a.value().cwiseMin(hi), {a.id},
      [mask](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], mul(adj, t.constant(mask)));
      });
}

template <class T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  return clamp_min(clamp_max(a, hi), lo);
}

template <class T>
Var<T> abs(Var<T> a) {
  Mat<T> sign = a.value().unaryExpr([](T x) { return x >= T(0) ? T(1) : T(-1); });
  return a.tape->push(
      a.value().cwiseAbs(), {a.id},
      [sign](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        acc.add(t.node(self).inputs[0], mul(adj, t.constant(sign)));
      });
}

// ---------------------------------------------------------------------------
// Rotation series functions on t = theta^2, used by the axis-angle map.
// f0(t) = sin(sqrt t)/sqrt t,  g0(t) = (1 - cos(sqrt t))/t; both analytic in
// t, so derivatives are clean through theta = 0. Derivative chains are
// provided two levels deep; the pose path is differentiated at most twice.

enum class SeriesFn { SincSq, CoscSq, SincSqD, CoscSqD, SincSqD2, CoscSqD2 };

namespace detail {

inline double series_eval(SeriesFn f, double t) {
  double x = std::sqrt(std::max(t, 0.0));
  switch (f) {
    case SeriesFn::SincSq:
      if (t < 1e-8) return 1.0 - t / 6.0 + t * t / 120.0;
      return std::sin(x) / x;
    case SeriesFn::CoscSq:
      if (t < 1e-8) return 0.5 - t / 24.0 + t * t / 720.0;
      return (1.0 - std::cos(x)) / t;
    case SeriesFn::SincSqD:
      if (t < 1e-2) return -1.0 / 6.0 + t / 60.0 - t * t / 1680.0;
      return (x * std::cos(x) - std::sin(x)) / (2.0 * t * x);
    case SeriesFn::CoscSqD:
      if (t < 1e-2) return -1.0 / 24.0 + t / 360.0 - t * t / 13440.0;
      return (x * std::sin(x) - 2.0 * (1.0 - std::cos(x))) / (2.0 * t * t);
    case SeriesFn::SincSqD2:
      if (t < 1e-1) return 1.0 / 60.0 - t / 840.0 + t * t / 30240.0;
      return ((3.0 - t) * std::sin(x) - 3.0 * x * std::cos(x)) / (4.0 * t * t * x);
    case SeriesFn::CoscSqD2:
      if (t < 1e-1) return 1.0 / 360.0 - t / 6720.0 + t * t / 259200.0;
      return (t * std::cos(x) - 5.0 * x * std::sin(x) +
              8.0 * (1.0 - std::cos(x))) /
             (4.0 * t * t * t);
  }
  return 0.0;
}

inline bool series_derivative(SeriesFn f, SeriesFn* out) {
  switch (f) {
    case SeriesFn::SincSq: *out = SeriesFn::SincSqD; return true;
    case SeriesFn::CoscSq: *out = SeriesFn::CoscSqD; return true;
    case SeriesFn::SincSqD: *out = SeriesFn::SincSqD2; return true;
    case SeriesFn::CoscSqD: *out = SeriesFn::CoscSqD2; return true;
    default: return false;
  }
}

}  // namespace detail

template <class T>
Var<T> series_fn(Var<T> a, SeriesFn f) {
  Mat<T> v = a.value().unaryExpr([f](T x) {
    return static_cast<T>(detail::series_eval(f, static_cast<double>(x)));
  });
  return a.tape->push(
      std::move(v), {a.id},
      [f](Tape<T>& t, int self, Var<T> adj, typename Tape<T>::Accum& acc) {
        SeriesFn df;
        NDR_CHECK(detail::series_derivative(f, &df),
                  "series_fn: derivative order exhausted");
        acc.add(t.node(self).inputs[0],
                mul(adj, series_fn(Var<T>{&t, t.node(self).inputs[0]}, df)));
      });
}

}  // namespace ndr::ad
