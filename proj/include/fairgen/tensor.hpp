// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "fairgen/error.hpp"
#include "fairgen/rng.hpp"

namespace fairgen {

// Shapes are small (rank 1 or 2 everywhere in this codebase).
using Shape = std::vector<int>;

int numel_of(const Shape& shape);

// Dense float64 tensor with handle semantics: copying a Tensor copies the
// handle, not the buffer. Gradients live next to the data and are filled in
// by Tape::backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Elementwise uniform init in [lo, hi); draw order is row-major.
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int ndim() const;
  int dim(int i) const;
  int numel() const;
  int rows() const;  // rank-2 only
  int cols() const;  // rank-2 only

  std::vector<double>& data();
  const std::vector<double>& data() const;
  double value() const;  // numel()==1 convenience accessor
  double at(int i) const;
  double at(int r, int c) const;
  void set(int i, double v);
  void set(int r, int c, double v);

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::vector<double>& grad();  // allocates zeros on first touch
  const std::vector<double>& grad() const;
  void zero_grad();   // drops any accumulated gradient
  Tensor clone() const;  // deep copy of data; grad not copied
  void copy_data_from(const Tensor& src);  // shapes must match

  bool all_finite() const;

  struct Node;  // defined in tensor.cpp; opaque to users

 private:
  std::shared_ptr<Node> node_;
  friend class Tape;

  Node& n();
  const Node& n() const;
};

// Records primitive ops during a forward pass and replays their adjoints in
// reverse on backward(). A tape is single-use: build one per training step.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- linear algebra ---
  Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
  Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T, [m,k]x[n,k]

  // --- elementwise (identical shapes) ---
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor add_const(const Tensor& a, double c);
  Tensor add_row(const Tensor& x, const Tensor& row);  // broadcast row over [m,n]
  Tensor tanh(const Tensor& a);
  Tensor relu(const Tensor& a);
  // Numerically stable logistic, built on tanh.
  Tensor sigmoid(const Tensor& a);

  // --- reductions / normalization ---
  // axis: -1 = last. Rank-1 tensors ignore axis; rank-2 supports 0 and 1.
  Tensor softmax(const Tensor& a, int axis = -1);
  Tensor log_softmax(const Tensor& a, int axis = -1);
  // Normalizes over the last axis; gain/bias have that axis's length.
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-5);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  // Mean squared error between same-shaped tensors; scalar output.
  Tensor squared_error(const Tensor& pred, const Tensor& target);

  // --- indexing / assembly ---
  Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
  // out[i] = x[i, ids[i]] for rank-2 x; rank-1 result.
  Tensor gather_elements(const Tensor& x, const std::vector<int>& ids);
  // Column subset in the given order: out[i,j] = x[i, cols[j]].
  Tensor gather_cols(const Tensor& x, const std::vector<int>& cols);
  Tensor pick(const Tensor& x, int flat_index);  // scalar out
  Tensor concat_rows(const Tensor& a, const Tensor& b);
  Tensor concat_cols(const Tensor& a, const Tensor& b);
  Tensor slice_rows(const Tensor& x, int begin, int end);
  Tensor slice_cols(const Tensor& x, int begin, int end);
  Tensor reshape(const Tensor& x, Shape shape);  // numel preserved

  // --- regularization ---
  // Inverted dropout; identity (and no rng consumption) when !training.
  Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

  // Accumulates gradients of `loss` (a scalar produced on this tape) into
  // every reachable tensor that requires_grad. Single-shot.
  void backward(const Tensor& loss);

  std::size_t recorded() const { return steps_.size(); }

 private:
  using NodePtr = std::shared_ptr<Tensor::Node>;
  std::vector<std::function<void()>> steps_;
  std::uint64_t id_;
  bool spent_ = false;

  Tensor make_output(Shape shape);
  void push(std::function<void()> step);
};

// Central-difference check of df/dx against the tape gradient. `f` must be a
// pure function of x building a scalar on the given tape. Returns the max
// relative error  |a-n| / max(1, |a|+|n|)  over all elements of x.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double step = 1e-5);

}  // namespace fairgen
