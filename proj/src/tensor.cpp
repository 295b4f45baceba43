// SPDX-License-Identifier: Apache-2.0
#include "fairgen/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <string>

namespace fairgen {

namespace {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::atomic<std::uint64_t> g_next_tape_id{1};

}  // namespace

int numel_of(const Shape& shape) {
  int n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

struct Tensor::Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool from_op = false;
  std::uint64_t tape_id = 0;
};

Tensor::Node& Tensor::n() {
  if (!node_) throw ContractError("use of undefined tensor");
  return *node_;
}

const Tensor::Node& Tensor::n() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return *node_;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  t.node_->shape = std::move(shape);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (static_cast<int>(values.size()) != numel_of(shape))
    throw ShapeError("element count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = std::move(shape);
  t.node_->data = std::move(values);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

const Shape& Tensor::shape() const { return n().shape; }
int Tensor::ndim() const { return static_cast<int>(n().shape.size()); }

int Tensor::dim(int i) const {
  const Shape& s = n().shape;
  if (i < 0 || i >= static_cast<int>(s.size()))
    throw ShapeError("dim index out of range");
  return s[i];
}

int Tensor::numel() const { return static_cast<int>(n().data.size()); }

int Tensor::rows() const {
  if (ndim() != 2) throw ShapeError("rows(): tensor is not rank-2");
  return n().shape[0];
}

int Tensor::cols() const {
  if (ndim() != 2) throw ShapeError("cols(): tensor is not rank-2");
  return n().shape[1];
}

std::vector<double>& Tensor::data() { return n().data; }
const std::vector<double>& Tensor::data() const { return n().data; }

double Tensor::value() const {
  if (numel() != 1) throw ShapeError("value(): tensor is not a scalar");
  return n().data[0];
}

double Tensor::at(int i) const {
  if (i < 0 || i >= numel()) throw IndexError("flat index out of range");
  return n().data[static_cast<std::size_t>(i)];
}

double Tensor::at(int r, int c) const {
  if (ndim() != 2) throw ShapeError("at(r,c): tensor is not rank-2");
  if (r < 0 || r >= n().shape[0] || c < 0 || c >= n().shape[1])
    throw IndexError("index out of range");
  return n().data[static_cast<std::size_t>(r) * n().shape[1] + c];
}

void Tensor::set(int i, double v) {
  if (i < 0 || i >= numel()) throw IndexError("flat index out of range");
  n().data[static_cast<std::size_t>(i)] = v;
}

void Tensor::set(int r, int c, double v) {
  if (ndim() != 2) throw ShapeError("set(r,c): tensor is not rank-2");
  if (r < 0 || r >= n().shape[0] || c < 0 || c >= n().shape[1])
    throw IndexError("index out of range");
  n().data[static_cast<std::size_t>(r) * n().shape[1] + c] = v;
}

bool Tensor::requires_grad() const { return n().requires_grad; }
void Tensor::set_requires_grad(bool flag) { n().requires_grad = flag; }
bool Tensor::has_grad() const { return !n().grad.empty(); }

std::vector<double>& Tensor::grad() {
  Node& node = n();
  if (node.grad.size() != node.data.size())
    node.grad.assign(node.data.size(), 0.0);
  return node.grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad(): no gradient accumulated");
  return n().grad;
}

void Tensor::zero_grad() { n().grad.clear(); }

Tensor Tensor::clone() const {
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = n().shape;
  t.node_->data = n().data;
  t.node_->requires_grad = n().requires_grad;
  return t;
}

void Tensor::copy_data_from(const Tensor& src) {
  if (src.shape() != shape())
    throw ShapeError("copy_data_from: shape mismatch " + shape_str(src.shape()) +
                     " vs " + shape_str(shape()));
  n().data = src.n().data;
}

bool Tensor::all_finite() const {
  for (double v : n().data)
    if (!std::isfinite(v)) return false;
  return true;
}

// --------------------------------------------------------------------------
// Tape

namespace {

using Node = Tensor::Node;

// Gradients flow into leaves that ask for them and into every op output.
bool wants_grad(const std::shared_ptr<Node>& n) {
  return n->requires_grad || n->from_op;
}

std::vector<double>& grad_buf(const std::shared_ptr<Node>& n) {
  if (n->grad.size() != n->data.size()) n->grad.assign(n->data.size(), 0.0);
  return n->grad;
}

// True when the output has received any gradient; otherwise the adjoint is
// a no-op (dead branch of the graph).
bool has_out_grad(const std::shared_ptr<Node>& n) {
  return n->grad.size() == n->data.size() && !n->data.empty();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    throw NumericError(std::string(op) + ": non-finite input");
}

}  // namespace

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

Tensor Tape::make_output(Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.node_->from_op = true;
  t.node_->tape_id = id_;
  return t;
}

void Tape::push(std::function<void()> step) { steps_.push_back(std::move(step)); }

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw ShapeError("matmul: operands must be rank-2");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make_output({m, n});
  const auto& A = a.data();
  const auto& B = b.data();
  auto& C = out.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = A[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const std::size_t brow = static_cast<std::size_t>(p) * n;
      const std::size_t crow = static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) C[crow + j] += aip * B[brow + j];
    }
  auto an = a.node_, bn = b.node_, on = out.node_;
  push([an, bn, on, m, k, n] {
    if (!has_out_grad(on)) return;
    const auto& dC = on->grad;
    if (wants_grad(an)) {
      auto& dA = grad_buf(an);
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const std::size_t crow = static_cast<std::size_t>(i) * n;
          const std::size_t brow = static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) acc += dC[crow + j] * bn->data[brow + j];
          dA[static_cast<std::size_t>(i) * k + p] += acc;
        }
    }
    if (wants_grad(bn)) {
      auto& dB = grad_buf(bn);
      for (int p = 0; p < k; ++p)
        for (int i = 0; i < m; ++i) {
          const double aip = an->data[static_cast<std::size_t>(i) * k + p];
          if (aip == 0.0) continue;
          const std::size_t crow = static_cast<std::size_t>(i) * n;
          const std::size_t brow = static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) dB[brow + j] += aip * dC[crow + j];
        }
    }
  });
  return out;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw ShapeError("matmul_nt: operands must be rank-2");
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: trailing dimensions disagree " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = make_output({m, n});
  const auto& A = a.data();
  const auto& B = b.data();
  auto& C = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      const std::size_t ar = static_cast<std::size_t>(i) * k;
      const std::size_t br = static_cast<std::size_t>(j) * k;
      for (int p = 0; p < k; ++p) acc += A[ar + p] * B[br + p];
      C[static_cast<std::size_t>(i) * n + j] = acc;
    }
  auto an = a.node_, bn = b.node_, on = out.node_;
  push([an, bn, on, m, k, n] {
    if (!has_out_grad(on)) return;
    const auto& dC = on->grad;
    if (wants_grad(an)) {
      auto& dA = grad_buf(an);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double d = dC[static_cast<std::size_t>(i) * n + j];
          if (d == 0.0) continue;
          const std::size_t ar = static_cast<std::size_t>(i) * k;
          const std::size_t br = static_cast<std::size_t>(j) * k;
          for (int p = 0; p < k; ++p) dA[ar + p] += d * bn->data[br + p];
        }
    }
    if (wants_grad(bn)) {
      auto& dB = grad_buf(bn);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double d = dC[static_cast<std::size_t>(i) * n + j];
          if (d == 0.0) continue;
          const std::size_t ar = static_cast<std::size_t>(i) * k;
          const std::size_t br = static_cast<std::size_t>(j) * k;
          for (int p = 0; p < k; ++p) dB[br + p] += d * an->data[ar + p];
        }
    }
  });
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.numel(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  auto an = a.node_, bn = b.node_, on = out.node_;
  push([an, bn, on] {
    if (!has_out_grad(on)) return;
    if (wants_grad(an)) {
      auto& dA = grad_buf(an);
      for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += on->grad[i];
    }
    if (wants_grad(bn)) {
      auto& dB = grad_buf(bn);
      for (std::size_t i = 0; i < dB.size(); ++i) dB[i] += on->grad[i];
    }
  });
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.numel(); ++i)
    out.data()[i] = a.data()[i] - b.data()[i];
  auto an = a.node_, bn = b.node_, on = out.node_;
  push([an, bn, on] {
    if (!has_out_grad(on)) return;
    if (wants_grad(an)) {
      auto& dA = grad_buf(an);
      for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += on->grad[i];
    }
    if (wants_grad(bn)) {
      auto& dB = grad_buf(bn);
      for (std::size_t i = 0; i < dB.size(); ++i) dB[i] -= on->grad[i];
    }
  });
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.numel(); ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  auto an = a.node_, bn = b.node_, on = out.node_;
  push([an, bn, on] {
    if (!has_out_grad(on)) return;
    if (wants_grad(an)) {
      auto& dA = grad_buf(an);
      for (std::size_t i = 0; i < dA.size(); ++i)
        dA[i] += on->grad[i] * bn->data[i];
    }
    if (wants_grad(bn)) {
      auto& dB = grad_buf(bn);
      for (std::size_t i = 0; i < dB.size(); ++i)
        dB[i] += on->grad[i] * an->data[i];
    }
  });
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * c;
  auto an = a.node_, on = out.node_;
  push([an, on, c] {
    if (!has_out_grad(on) || !wants_grad(an)) return;
    auto& dA = grad_buf(an);
    for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += on->grad[i] * c;
  });
  return out;
}

Tensor Tape::add_const(const Tensor& a, double c) {
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + c;
  auto an = a.node_, on = out.node_;
  push([an, on] {
    if (!has_out_grad(on) || !wants_grad(an)) return;
    auto& dA = grad_buf(an);
    for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += on->grad[i];
  });
  return out;
}

Tensor Tape::add_row(const Tensor& x, const Tensor& row) {
  if (x.ndim() != 2 || row.ndim() != 1 || row.dim(0) != x.cols())
    throw ShapeError("add_row: expected [m,n] and [n], got " +
                     shape_str(x.shape()) + " and " + shape_str(row.shape()));
  const int m = x.rows(), n = x.cols();
  Tensor out = make_output({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.data()[static_cast<std::size_t>(i) * n + j] =
          x.data()[static_cast<std::size_t>(i) * n + j] + row.data()[j];
  auto xn = x.node_, rn = row.node_, on = out.node_;
  push([xn, rn, on, m, n] {
    if (!has_out_grad(on)) return;
    if (wants_grad(xn)) {
      auto& dX = grad_buf(xn);
      for (std::size_t i = 0; i < dX.size(); ++i) dX[i] += on->grad[i];
    }
    if (wants_grad(rn)) {
      auto& dR = grad_buf(rn);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          dR[j] += on->grad[static_cast<std::size_t>(i) * n + j];
    }
  });
  return out;
}

Tensor Tape::tanh(const Tensor& a) {
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = std::tanh(a.data()[i]);
  auto an = a.node_, on = out.node_;
  push([an, on] {
    if (!has_out_grad(on) || !wants_grad(an)) return;
    auto& dA = grad_buf(an);
    for (std::size_t i = 0; i < dA.size(); ++i) {
      const double y = on->data[i];
      dA[i] += on->grad[i] * (1.0 - y * y);
    }
  });
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.numel(); ++i)
    out.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  auto an = a.node_, on = out.node_;
  push([an, on] {
    if (!has_out_grad(on) || !wants_grad(an)) return;
    auto& dA = grad_buf(an);
    for (std::size_t i = 0; i < dA.size(); ++i)
      if (on->data[i] > 0.0) dA[i] += on->grad[i];
  });
  return out;
}

Tensor Tape::sigmoid(const Tensor& a) {
  // sigma(x) = (1 + tanh(x/2)) / 2
  return scale(add_const(tanh(scale(a, 0.5)), 1.0), 0.5);
}

namespace {

// Resolves (rows, cols, row-major stride pattern) for a softmax-style op.
struct AxisView {
  int groups;  // number of independent slices
  int len;     // elements per slice
  int stride;  // distance between consecutive elements of a slice
  int group_stride;
};

AxisView axis_view(const Tensor& t, int axis, const char* op) {
  if (t.ndim() == 1) {
    if (axis != 0 && axis != -1)
      throw ShapeError(std::string(op) + ": axis out of range for rank-1");
    return {1, t.dim(0), 1, 0};
  }
  if (t.ndim() != 2) throw ShapeError(std::string(op) + ": rank must be 1 or 2");
  if (axis == -1) axis = 1;
  if (axis == 1) return {t.rows(), t.cols(), 1, t.cols()};
  if (axis == 0) return {t.cols(), t.rows(), t.cols(), 1};
  throw ShapeError(std::string(op) + ": axis out of range for rank-2");
}

}  // namespace

Tensor Tape::softmax(const Tensor& a, int axis) {
  check_finite(a, "softmax");
  const AxisView v = axis_view(a, axis, "softmax");
  Tensor out = make_output(a.shape());
  for (int g = 0; g < v.groups; ++g) {
    const std::size_t base = static_cast<std::size_t>(g) * v.group_stride;
    double mx = -HUGE_VAL;
    for (int i = 0; i < v.len; ++i)
      mx = std::max(mx, a.data()[base + static_cast<std::size_t>(i) * v.stride]);
    double z = 0.0;
    for (int i = 0; i < v.len; ++i) {
      const std::size_t idx = base + static_cast<std::size_t>(i) * v.stride;
      const double e = std::exp(a.data()[idx] - mx);
      out.data()[idx] = e;
      z += e;
    }
    for (int i = 0; i < v.len; ++i)
      out.data()[base + static_cast<std::size_t>(i) * v.stride] /= z;
  }
  auto an = a.node_, on = out.node_;
  push([an, on, v] {
    if (!has_out_grad(on) || !wants_grad(an)) return;
    auto& dA = grad_buf(an);
    for (int g = 0; g < v.groups; ++g) {
      const std::size_t base = static_cast<std::size_t>(g) * v.group_stride;
      double dot = 0.0;
      for (int i = 0; i < v.len; ++i) {
        const std::size_t idx = base + static_cast<std::size_t>(i) * v.stride;
        dot += on->grad[idx] * on->data[idx];
      }
      for (int i = 0; i < v.len; ++i) {
        const std::size_t idx = base + static_cast<std::size_t>(i) * v.stride;
        dA[idx] += on->data[idx] * (on->grad[idx] - dot);
      }
    }
  });
  return out;
}

Tensor Tape::log_softmax(const Tensor& a, int axis) {
  check_finite(a, "log_softmax");
  const AxisView v = axis_view(a, axis, "log_softmax");
  Tensor out = make_output(a.shape());
  for (int g = 0; g < v.groups; ++g) {
    const std::size_t base = static_cast<std::size_t>(g) * v.group_stride;
    double mx = -HUGE_VAL;
    for (int i = 0; i < v.len; ++i)
      mx = std::max(mx, a.data()[base + static_cast<std::size_t>(i) * v.stride]);
    double z = 0.0;
    for (int i = 0; i < v.len; ++i)
      z += std::exp(a.data()[base + static_cast<std::size_t>(i) * v.stride] - mx);
    const double lz = mx + std::log(z);
    for (int i = 0; i < v.len; ++i) {
      const std::size_t idx = base + static_cast<std::size_t>(i) * v.stride;
      out.data()[idx] = a.data()[idx] - lz;
    }
  }
  auto an = a.node_, on = out.node_;
  push([an, on, v] {
    if (!has_out_grad(on) || !wants_grad(an)) return;
    auto& dA = grad_buf(an);
    for (int g = 0; g < v.groups; ++g) {
      const std::size_t base = static_cast<std::size_t>(g) * v.group_stride;
      double dsum = 0.0;
      for (int i = 0; i < v.len; ++i)
        dsum += on->grad[base + static_cast<std::size_t>(i) * v.stride];
      for (int i = 0; i < v.len; ++i) {
        const std::size_t idx = base + static_cast<std::size_t>(i) * v.stride;
        dA[idx] += on->grad[idx] - std::exp(on->data[idx]) * dsum;
      }
    }
  });
  return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                        double eps) {
  const int n = x.ndim() == 2 ? x.cols() : x.dim(0);
  const int m = x.ndim() == 2 ? x.rows() : 1;
  if (x.ndim() < 1 || x.ndim() > 2)
    throw ShapeError("layer_norm: rank must be 1 or 2");
  if (gain.ndim() != 1 || gain.dim(0) != n || bias.ndim() != 1 || bias.dim(0) != n)
    throw ShapeError("layer_norm: gain/bias must be rank-1 of width " +
                     std::to_string(n));
  Tensor out = make_output(x.shape());
  // xhat and 1/s per row are needed by the adjoint; keep them alive in the
  // closure rather than recomputing.
  auto xhat = std::make_shared<std::vector<double>>(x.data().size());
  auto inv_s = std::make_shared<std::vector<double>>(m);
  for (int r = 0; r < m; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += x.data()[base + j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = x.data()[base + j] - mu;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_s)[r] = is;
    for (int j = 0; j < n; ++j) {
      const double xh = (x.data()[base + j] - mu) * is;
      (*xhat)[base + j] = xh;
      out.data()[base + j] = xh * gain.data()[j] + bias.data()[j];
    }
  }
  auto xn = x.node_, gn = gain.node_, bn = bias.node_, on = out.node_;
  push([xn, gn, bn, on, xhat, inv_s, m, n] {
    if (!has_out_grad(on)) return;
    for (int r = 0; r < m; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * n;
      if (wants_grad(gn)) {
        auto& dG = grad_buf(gn);
        for (int j = 0; j < n; ++j)
          dG[j] += on->grad[base + j] * (*xhat)[base + j];
      }
      if (wants_grad(bn)) {
        auto& dB = grad_buf(bn);
        for (int j = 0; j < n; ++j) dB[j] += on->grad[base + j];
      }
      if (wants_grad(xn)) {
        auto& dX = grad_buf(xn);
        double mean_u = 0.0, mean_ux = 0.0;
        for (int j = 0; j < n; ++j) {
          const double u = on->grad[base + j] * gn->data[j];
          mean_u += u;
          mean_ux += u * (*xhat)[base + j];
        }
        mean_u /= n;
        mean_ux /= n;
        for (int j = 0; j < n; ++j) {
          const double u = on->grad[base + j] * gn->data[j];
          dX[base + j] +=
              (*inv_s)[r] * (u - mean_u - (*xhat)[base + j] * mean_ux);
        }
      }
    }
  });
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  Tensor out = make_output({1});
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  out.data()[0] = acc;
  auto an = a.node_, on = out.node_;
  push([an, on] {
    if (!has_out_grad(on) || !wants_grad(an)) return;
    auto& dA = grad_buf(an);
    for (double& d : dA) d += on->grad[0];
  });
  return out;
}

Tensor Tape::mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  Tensor out = make_output({1});
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  out.data()[0] = acc / a.numel();
  auto an = a.node_, on = out.node_;
  const double inv = 1.0 / a.numel();
  push([an, on, inv] {
    if (!has_out_grad(on) || !wants_grad(an)) return;
    auto& dA = grad_buf(an);
    for (double& d : dA) d += on->grad[0] * inv;
  });
  return out;
}

Tensor Tape::squared_error(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "squared_error");
  if (pred.numel() == 0) throw ShapeError("squared_error: empty tensor");
  Tensor out = make_output({1});
  double acc = 0.0;
  for (int i = 0; i < pred.numel(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  out.data()[0] = acc / pred.numel();
  auto pn = pred.node_, tn = target.node_, on = out.node_;
  const double inv2 = 2.0 / pred.numel();
  push([pn, tn, on, inv2] {
    if (!has_out_grad(on)) return;
    const double g = on->grad[0] * inv2;
    if (wants_grad(pn)) {
      auto& dP = grad_buf(pn);
      for (std::size_t i = 0; i < dP.size(); ++i)
        dP[i] += g * (pn->data[i] - tn->data[i]);
    }
    if (wants_grad(tn)) {
      auto& dT = grad_buf(tn);
      for (std::size_t i = 0; i < dT.size(); ++i)
        dT[i] -= g * (pn->data[i] - tn->data[i]);
    }
  });
  return out;
}

Tensor Tape::gather_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.ndim() != 2) throw ShapeError("gather_rows: table must be rank-2");
  const int n = table.cols();
  for (int id : ids)
    if (id < 0 || id >= table.rows())
      throw IndexError("gather_rows: row id " + std::to_string(id) +
                       " out of range [0," + std::to_string(table.rows()) + ")");
  Tensor out = make_output({static_cast<int>(ids.size()), n});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.data().begin() + static_cast<std::size_t>(ids[i]) * n, n,
                out.data().begin() + i * n);
  auto tn = table.node_, on = out.node_;
  push([tn, on, ids, n] {
    if (!has_out_grad(on) || !wants_grad(tn)) return;
    auto& dT = grad_buf(tn);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::size_t dst = static_cast<std::size_t>(ids[i]) * n;
      const std::size_t src = i * n;
      for (int j = 0; j < n; ++j) dT[dst + j] += on->grad[src + j];
    }
  });
  return out;
}

Tensor Tape::gather_elements(const Tensor& x, const std::vector<int>& ids) {
  if (x.ndim() != 2) throw ShapeError("gather_elements: input must be rank-2");
  if (static_cast<int>(ids.size()) != x.rows())
    throw ShapeError("gather_elements: need one column id per row");
  const int n = x.cols();
  for (int id : ids)
    if (id < 0 || id >= n) throw IndexError("gather_elements: column id out of range");
  Tensor out = make_output({static_cast<int>(ids.size())});
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.data()[i] = x.data()[i * n + ids[i]];
  auto xn = x.node_, on = out.node_;
  push([xn, on, ids, n] {
    if (!has_out_grad(on) || !wants_grad(xn)) return;
    auto& dX = grad_buf(xn);
    for (std::size_t i = 0; i < ids.size(); ++i)
      dX[i * n + ids[i]] += on->grad[i];
  });
  return out;
}

Tensor Tape::gather_cols(const Tensor& x, const std::vector<int>& cols) {
  if (x.ndim() != 2) throw ShapeError("gather_cols: input must be rank-2");
  const int m = x.rows(), n = x.cols();
  for (int c : cols)
    if (c < 0 || c >= n) throw IndexError("gather_cols: column id out of range");
  const int k = static_cast<int>(cols.size());
  Tensor out = make_output({m, k});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j)
      out.data()[static_cast<std::size_t>(i) * k + j] =
          x.data()[static_cast<std::size_t>(i) * n + cols[j]];
  auto xn = x.node_, on = out.node_;
  push([xn, on, cols, m, n, k] {
    if (!has_out_grad(on) || !wants_grad(xn)) return;
    auto& dX = grad_buf(xn);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j)
        dX[static_cast<std::size_t>(i) * n + cols[j]] +=
            on->grad[static_cast<std::size_t>(i) * k + j];
  });
  return out;
}

Tensor Tape::pick(const Tensor& x, int flat_index) {
  if (flat_index < 0 || flat_index >= x.numel())
    throw IndexError("pick: index out of range");
  Tensor out = make_output({1});
  out.data()[0] = x.data()[flat_index];
  auto xn = x.node_, on = out.node_;
  push([xn, on, flat_index] {
    if (!has_out_grad(on) || !wants_grad(xn)) return;
    grad_buf(xn)[flat_index] += on->grad[0];
  });
  return out;
}

Tensor Tape::concat_rows(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols())
    throw ShapeError("concat_rows: need rank-2 operands of equal width");
  const int n = a.cols();
  Tensor out = make_output({a.rows() + b.rows(), n});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(),
            out.data().begin() + a.data().size());
  auto an = a.node_, bn = b.node_, on = out.node_;
  push([an, bn, on] {
    if (!has_out_grad(on)) return;
    if (wants_grad(an)) {
      auto& dA = grad_buf(an);
      for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += on->grad[i];
    }
    if (wants_grad(bn)) {
      auto& dB = grad_buf(bn);
      const std::size_t off = an->data.size();
      for (std::size_t i = 0; i < dB.size(); ++i) dB[i] += on->grad[off + i];
    }
  });
  return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != b.rows())
    throw ShapeError("concat_cols: need rank-2 operands of equal height");
  const int m = a.rows(), na = a.cols(), nb = b.cols();
  Tensor out = make_output({m, na + nb});
  for (int i = 0; i < m; ++i) {
    std::copy_n(a.data().begin() + static_cast<std::size_t>(i) * na, na,
                out.data().begin() + static_cast<std::size_t>(i) * (na + nb));
    std::copy_n(b.data().begin() + static_cast<std::size_t>(i) * nb, nb,
                out.data().begin() + static_cast<std::size_t>(i) * (na + nb) + na);
  }
  auto an = a.node_, bn = b.node_, on = out.node_;
  push([an, bn, on, m, na, nb] {
    if (!has_out_grad(on)) return;
    for (int i = 0; i < m; ++i) {
      const std::size_t orow = static_cast<std::size_t>(i) * (na + nb);
      if (wants_grad(an)) {
        auto& dA = grad_buf(an);
        for (int j = 0; j < na; ++j)
          dA[static_cast<std::size_t>(i) * na + j] += on->grad[orow + j];
      }
      if (wants_grad(bn)) {
        auto& dB = grad_buf(bn);
        for (int j = 0; j < nb; ++j)
          dB[static_cast<std::size_t>(i) * nb + j] += on->grad[orow + na + j];
      }
    }
  });
  return out;
}

Tensor Tape::slice_rows(const Tensor& x, int begin, int end) {
  if (x.ndim() != 2) throw ShapeError("slice_rows: input must be rank-2");
  if (begin < 0 || end > x.rows() || begin > end)
    throw IndexError("slice_rows: bad range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ")");
  const int n = x.cols();
  Tensor out = make_output({end - begin, n});
  std::copy_n(x.data().begin() + static_cast<std::size_t>(begin) * n,
              static_cast<std::size_t>(end - begin) * n, out.data().begin());
  auto xn = x.node_, on = out.node_;
  push([xn, on, begin, n] {
    if (!has_out_grad(on) || !wants_grad(xn)) return;
    auto& dX = grad_buf(xn);
    const std::size_t off = static_cast<std::size_t>(begin) * n;
    for (std::size_t i = 0; i < on->grad.size(); ++i) dX[off + i] += on->grad[i];
  });
  return out;
}

Tensor Tape::slice_cols(const Tensor& x, int begin, int end) {
  if (x.ndim() != 2) throw ShapeError("slice_cols: input must be rank-2");
  if (begin < 0 || end > x.cols() || begin > end)
    throw IndexError("slice_cols: bad range");
  const int m = x.rows(), n = x.cols(), w = end - begin;
  Tensor out = make_output({m, w});
  for (int i = 0; i < m; ++i)
    std::copy_n(x.data().begin() + static_cast<std::size_t>(i) * n + begin, w,
                out.data().begin() + static_cast<std::size_t>(i) * w);
  auto xn = x.node_, on = out.node_;
  push([xn, on, begin, m, n, w] {
    if (!has_out_grad(on) || !wants_grad(xn)) return;
    auto& dX = grad_buf(xn);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        dX[static_cast<std::size_t>(i) * n + begin + j] +=
            on->grad[static_cast<std::size_t>(i) * w + j];
  });
  return out;
}

Tensor Tape::reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: element count changes");
  Tensor out = make_output(std::move(shape));
  out.data() = x.data();
  auto xn = x.node_, on = out.node_;
  push([xn, on] {
    if (!has_out_grad(on) || !wants_grad(xn)) return;
    auto& dX = grad_buf(xn);
    for (std::size_t i = 0; i < dX.size(); ++i) dX[i] += on->grad[i];
  });
  return out;
}

Tensor Tape::dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw DomainError("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  Tensor out = make_output(x.shape());
  for (int i = 0; i < x.numel(); ++i) {
    const double m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    (*mask)[i] = m;
    out.data()[i] = x.data()[i] * m;
  }
  auto xn = x.node_, on = out.node_;
  push([xn, on, mask] {
    if (!has_out_grad(on) || !wants_grad(xn)) return;
    auto& dX = grad_buf(xn);
    for (std::size_t i = 0; i < dX.size(); ++i)
      dX[i] += on->grad[i] * (*mask)[i];
  });
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (spent_) throw ContractError("backward: tape already consumed");
  if (loss.numel() != 1) throw ContractError("backward: loss must be a scalar");
  if (!loss.node_->from_op || loss.node_->tape_id != id_)
    throw ContractError("backward: loss was not produced on this tape");
  spent_ = true;
  grad_buf(loss.node_)[0] = 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

// --------------------------------------------------------------------------

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double step) {
  Tensor probe = x.clone();
  probe.set_requires_grad(true);
  std::vector<double> analytic(probe.numel(), 0.0);
  {
    Tape tape;
    Tensor loss = f(tape, probe);
    if (loss.numel() != 1) throw ContractError("grad_check: f must return a scalar");
    tape.backward(loss);
    if (probe.has_grad()) analytic = probe.grad();
  }
  Tensor work = x.clone();  // evaluated without gradients
  double worst = 0.0;
  for (int i = 0; i < work.numel(); ++i) {
    const double saved = work.at(i);
    work.set(i, saved + step);
    double up, down;
    {
      Tape tape;
      up = f(tape, work).value();
    }
    work.set(i, saved - step);
    {
      Tape tape;
      down = f(tape, work).value();
    }
    work.set(i, saved);
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max(1.0, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace fairgen
