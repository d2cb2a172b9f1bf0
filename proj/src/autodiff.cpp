// Copyright 2026 The spatialsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "spatialsep/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "spatialsep/errors.hpp"
#include "spatialsep/kernels.hpp"

namespace spatialsep::ad {

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
}
void require_scalar(const Tensor& t, const char* op) {
  if (t.numel() != 1)
    throw std::invalid_argument(std::string(op) + ": expected scalar, got " + t.shape_str());
}
std::vector<double> span_to_vec(std::span<const double> s) {
  return std::vector<double>(s.begin(), s.end());
}
}  // namespace

Tape::Var Tape::emit(Tensor value, const char* op, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.backprop = std::move(backprop);
  n.op = op;
  nodes_.push_back(std::move(n));
  const auto id = static_cast<Var>(nodes_.size() - 1);
  if (check_finite_) check_node(nodes_.back(), id);
  return id;
}

void Tape::check_node(const Node& n, Var id) const {
  for (double v : n.value.data)
    if (!std::isfinite(v))
      throw NumericError("non-finite value in node #" + std::to_string(id) + " (" + n.op +
                         ")");
}

Tensor& Tape::grad_of(Var v) {
  Node& n = nodes_[static_cast<size_t>(v)];
  if (n.grad.data.empty() && n.value.numel() > 0) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

void Tape::accum(Var v, const Tensor& g) { accum_raw(v, g.ptr(), g.numel()); }

void Tape::accum_raw(Var v, const double* g, int64_t n) {
  Tensor& dst = grad_of(v);
  double* d = dst.ptr();
  for (int64_t i = 0; i < n; ++i) d[i] += g[i];
  nodes_[static_cast<size_t>(v)].touched = true;
}

Tape::Var Tape::input(Tensor value) { return emit(std::move(value), "input", nullptr); }

Tape::Var Tape::param(Parameter& p) {
  Var v = emit(p.value, "param", nullptr);
  nodes_.back().bound = &p;
  return v;
}

Tape::Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Tensor out = value(a);
  const double* bp = value(b).ptr();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] += bp[i];
  return emit(std::move(out), "add", [a, b](Tape& t) {
    const Tensor& dy = t.nodes_.back().grad;  // placeholder, replaced below
    (void)dy;
    (void)a;
    (void)b;
    (void)t;
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Tensor out = value(a);
  const double* bp = value(b).ptr();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] -= bp[i];
  Var id = emit(std::move(out), "sub", nullptr);
  nodes_.back().backprop = [a, b, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    t.accum(a, dy);
    Tensor& gb = t.grad_of(b);
    for (int64_t i = 0; i < dy.numel(); ++i) gb.data[static_cast<size_t>(i)] -= dy.ptr()[i];
    t.nodes_[static_cast<size_t>(b)].touched = true;
  };
  return id;
}

Tape::Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Tensor out = value(a);
  const double* bp = value(b).ptr();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] *= bp[i];
  Var id = emit(std::move(out), "mul", nullptr);
  nodes_.back().backprop = [a, b, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    Tensor& ga = t.grad_of(a);
    Tensor& gb = t.grad_of(b);
    for (int64_t i = 0; i < dy.numel(); ++i) {
      ga.data[static_cast<size_t>(i)] += dy.ptr()[i] * bv.ptr()[i];
      gb.data[static_cast<size_t>(i)] += dy.ptr()[i] * av.ptr()[i];
    }
    t.nodes_[static_cast<size_t>(a)].touched = true;
    t.nodes_[static_cast<size_t>(b)].touched = true;
  };
  return id;
}

Tape::Var Tape::div(Var a, Var b) {
  require_same_shape(value(a), value(b), "div");
  Tensor out = value(a);
  const double* bp = value(b).ptr();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] /= bp[i];
  Var id = emit(std::move(out), "div", nullptr);
  nodes_.back().backprop = [a, b, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    Tensor& ga = t.grad_of(a);
    Tensor& gb = t.grad_of(b);
    for (int64_t i = 0; i < dy.numel(); ++i) {
      const double inv = 1.0 / bv.ptr()[i];
      ga.data[static_cast<size_t>(i)] += dy.ptr()[i] * inv;
      gb.data[static_cast<size_t>(i)] -= dy.ptr()[i] * av.ptr()[i] * inv * inv;
    }
    t.nodes_[static_cast<size_t>(a)].touched = true;
    t.nodes_[static_cast<size_t>(b)].touched = true;
  };
  return id;
}

Tape::Var Tape::scale(Var a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v *= c;
  Var id = emit(std::move(out), "scale", nullptr);
  nodes_.back().backprop = [a, c, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    Tensor& ga = t.grad_of(a);
    for (int64_t i = 0; i < dy.numel(); ++i)
      ga.data[static_cast<size_t>(i)] += dy.ptr()[i] * c;
    t.nodes_[static_cast<size_t>(a)].touched = true;
  };
  return id;
}

Tape::Var Tape::relu(Var a) {
  Tensor out = value(a);
  for (double& v : out.data)
    if (v < 0.0) v = 0.0;
  Var id = emit(std::move(out), "relu", nullptr);
  nodes_.back().backprop = [a, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    const Tensor& av = t.value(a);
    Tensor& ga = t.grad_of(a);
    for (int64_t i = 0; i < dy.numel(); ++i)
      if (av.ptr()[i] > 0.0) ga.data[static_cast<size_t>(i)] += dy.ptr()[i];
    t.nodes_[static_cast<size_t>(a)].touched = true;
  };
  return id;
}

Tape::Var Tape::prelu(Var a, Var slope) {
  require_scalar(value(slope), "prelu slope");
  const double s = value(slope)(0);
  Tensor out = value(a);
  for (double& v : out.data)
    if (v < 0.0) v *= s;
  Var id = emit(std::move(out), "prelu", nullptr);
  nodes_.back().backprop = [a, slope, s, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    const Tensor& av = t.value(a);
    Tensor& ga = t.grad_of(a);
    double ds = 0.0;
    for (int64_t i = 0; i < dy.numel(); ++i) {
      const double x = av.ptr()[i];
      if (x > 0.0) {
        ga.data[static_cast<size_t>(i)] += dy.ptr()[i];
      } else {
        ga.data[static_cast<size_t>(i)] += dy.ptr()[i] * s;
        ds += dy.ptr()[i] * x;
      }
    }
    t.nodes_[static_cast<size_t>(a)].touched = true;
    Tensor dslope = Tensor::scalar(ds);
    dslope.shape = t.value(slope).shape;
    t.accum(slope, dslope);
  };
  return id;
}

Tape::Var Tape::sigmoid(Var a) {
  Tensor out = value(a);
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  Var id = emit(std::move(out), "sigmoid", nullptr);
  nodes_.back().backprop = [a, id](Tape& t) {
    const Node& self = t.nodes_[static_cast<size_t>(id)];
    const Tensor& dy = self.grad;
    Tensor& ga = t.grad_of(a);
    for (int64_t i = 0; i < dy.numel(); ++i) {
      const double y = self.value.ptr()[i];
      ga.data[static_cast<size_t>(i)] += dy.ptr()[i] * y * (1.0 - y);
    }
    t.nodes_[static_cast<size_t>(a)].touched = true;
  };
  return id;
}

Tape::Var Tape::exp(Var a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::exp(v);
  Var id = emit(std::move(out), "exp", nullptr);
  nodes_.back().backprop = [a, id](Tape& t) {
    const Node& self = t.nodes_[static_cast<size_t>(id)];
    Tensor& ga = t.grad_of(a);
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      ga.data[static_cast<size_t>(i)] += self.grad.ptr()[i] * self.value.ptr()[i];
    t.nodes_[static_cast<size_t>(a)].touched = true;
  };
  return id;
}

Tape::Var Tape::sub_scalar(Var a, Var s) {
  require_scalar(value(s), "sub_scalar");
  Tensor out = value(a);
  const double sv = value(s)(0);
  for (double& v : out.data) v -= sv;
  Var id = emit(std::move(out), "sub_scalar", nullptr);
  nodes_.back().backprop = [a, s, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    t.accum(a, dy);
    double total = 0.0;
    for (double v : dy.data) total += v;
    Tensor ds = Tensor::scalar(-total);
    ds.shape = t.value(s).shape;
    t.accum(s, ds);
  };
  return id;
}

Tape::Var Tape::mul_scalar(Var a, Var s) {
  require_scalar(value(s), "mul_scalar");
  Tensor out = value(a);
  const double sv = value(s)(0);
  for (double& v : out.data) v *= sv;
  Var id = emit(std::move(out), "mul_scalar", nullptr);
  nodes_.back().backprop = [a, s, sv, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    const Tensor& av = t.value(a);
    Tensor& ga = t.grad_of(a);
    double ds = 0.0;
    for (int64_t i = 0; i < dy.numel(); ++i) {
      ga.data[static_cast<size_t>(i)] += dy.ptr()[i] * sv;
      ds += dy.ptr()[i] * av.ptr()[i];
    }
    t.nodes_[static_cast<size_t>(a)].touched = true;
    Tensor dst = Tensor::scalar(ds);
    dst.shape = t.value(s).shape;
    t.accum(s, dst);
  };
  return id;
}

Tape::Var Tape::sum(Var a) {
  double total = 0.0;
  for (double v : value(a).data) total += v;
  Var id = emit(Tensor::scalar(total), "sum", nullptr);
  nodes_.back().backprop = [a, id](Tape& t) {
    const double dy = t.nodes_[static_cast<size_t>(id)].grad(0);
    Tensor& ga = t.grad_of(a);
    for (double& v : ga.data) v += dy;
    t.nodes_[static_cast<size_t>(a)].touched = true;
  };
  return id;
}

Tape::Var Tape::mean(Var a) {
  const auto n = static_cast<double>(value(a).numel());
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  double total = 0.0;
  for (double v : value(a).data) total += v;
  Var id = emit(Tensor::scalar(total / n), "mean", nullptr);
  nodes_.back().backprop = [a, n, id](Tape& t) {
    const double dy = t.nodes_[static_cast<size_t>(id)].grad(0) / n;
    Tensor& ga = t.grad_of(a);
    for (double& v : ga.data) v += dy;
    t.nodes_[static_cast<size_t>(a)].touched = true;
  };
  return id;
}

Tape::Var Tape::dot(Var a, Var b) {
  require_same_shape(value(a), value(b), "dot");
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  double total = 0.0;
  for (int64_t i = 0; i < av.numel(); ++i) total += av.ptr()[i] * bv.ptr()[i];
  Var id = emit(Tensor::scalar(total), "dot", nullptr);
  nodes_.back().backprop = [a, b, id](Tape& t) {
    const double dy = t.nodes_[static_cast<size_t>(id)].grad(0);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    Tensor& ga = t.grad_of(a);
    Tensor& gb = t.grad_of(b);
    for (int64_t i = 0; i < av.numel(); ++i) {
      ga.data[static_cast<size_t>(i)] += dy * bv.ptr()[i];
      gb.data[static_cast<size_t>(i)] += dy * av.ptr()[i];
    }
    t.nodes_[static_cast<size_t>(a)].touched = true;
    t.nodes_[static_cast<size_t>(b)].touched = true;
  };
  return id;
}

Tape::Var Tape::div_clamped(Var num, Var den, double floor) {
  require_scalar(value(num), "div_clamped");
  require_scalar(value(den), "div_clamped");
  const double nv = value(num)(0);
  const double dv = value(den)(0);
  const double d = dv > floor ? dv : floor;
  Var id = emit(Tensor::scalar(nv / d), "div_clamped", nullptr);
  nodes_.back().backprop = [num, den, floor, id](Tape& t) {
    const double dy = t.nodes_[static_cast<size_t>(id)].grad(0);
    const double nv = t.value(num)(0);
    const double dv = t.value(den)(0);
    const double d = dv > floor ? dv : floor;
    Tensor dn = Tensor::scalar(dy / d);
    dn.shape = t.value(num).shape;
    t.accum(num, dn);
    if (dv > floor) {
      Tensor dd = Tensor::scalar(-dy * nv / (d * d));
      dd.shape = t.value(den).shape;
      t.accum(den, dd);
    }
  };
  return id;
}

Tape::Var Tape::log10_clamped(Var a, double floor) {
  require_scalar(value(a), "log10_clamped");
  const double av = value(a)(0);
  const double x = av > floor ? av : floor;
  Var id = emit(Tensor::scalar(std::log10(x)), "log10_clamped", nullptr);
  nodes_.back().backprop = [a, floor, id](Tape& t) {
    const double av = t.value(a)(0);
    if (av > floor) {
      const double dy = t.nodes_[static_cast<size_t>(id)].grad(0);
      Tensor da = Tensor::scalar(dy / (av * std::log(10.0)));
      da.shape = t.value(a).shape;
      t.accum(a, da);
    }
  };
  return id;
}

Tape::Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int64_t cols = value(parts[0]).dim(1);
  int64_t rows = 0;
  for (Var p : parts) {
    if (value(p).rank() != 2 || value(p).dim(1) != cols)
      throw std::invalid_argument("concat_rows: column counts disagree");
    rows += value(p).dim(0);
  }
  Tensor out({rows, cols});
  int64_t r0 = 0;
  for (Var p : parts) {
    const Tensor& v = value(p);
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + r0 * cols);
    r0 += v.dim(0);
  }
  Var id = emit(std::move(out), "concat_rows", nullptr);
  nodes_.back().backprop = [parts, cols, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    int64_t r0 = 0;
    for (Var p : parts) {
      const int64_t nr = t.value(p).dim(0);
      t.accum_raw(p, dy.ptr() + r0 * cols, nr * cols);
      r0 += nr;
    }
  };
  return id;
}

Tape::Var Tape::slice_rows(Var a, int64_t row0, int64_t nrows) {
  const Tensor& v = value(a);
  if (v.rank() != 2 || row0 < 0 || nrows < 1 || row0 + nrows > v.dim(0))
    throw std::invalid_argument("slice_rows: out of range");
  const int64_t cols = v.dim(1);
  Tensor out({nrows, cols});
  std::copy(v.data.begin() + row0 * cols, v.data.begin() + (row0 + nrows) * cols,
            out.data.begin());
  Var id = emit(std::move(out), "slice_rows", nullptr);
  nodes_.back().backprop = [a, row0, nrows, cols, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    Tensor& ga = t.grad_of(a);
    double* g = ga.ptr() + row0 * cols;
    for (int64_t i = 0; i < nrows * cols; ++i) g[i] += dy.ptr()[i];
    t.nodes_[static_cast<size_t>(a)].touched = true;
  };
  return id;
}

Tape::Var Tape::slice_cols(Var a, int64_t col0, int64_t ncols) {
  const Tensor& v = value(a);
  if (v.rank() != 2 || col0 < 0 || ncols < 1 || col0 + ncols > v.dim(1))
    throw std::invalid_argument("slice_cols: out of range");
  const int64_t rows = v.dim(0), cols = v.dim(1);
  Tensor out({rows, ncols});
  for (int64_t r = 0; r < rows; ++r)
    std::copy(v.data.begin() + r * cols + col0, v.data.begin() + r * cols + col0 + ncols,
              out.data.begin() + r * ncols);
  Var id = emit(std::move(out), "slice_cols", nullptr);
  nodes_.back().backprop = [a, col0, ncols, rows, cols, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    Tensor& ga = t.grad_of(a);
    for (int64_t r = 0; r < rows; ++r) {
      double* g = ga.ptr() + r * cols + col0;
      const double* d = dy.ptr() + r * ncols;
      for (int64_t c = 0; c < ncols; ++c) g[c] += d[c];
    }
    t.nodes_[static_cast<size_t>(a)].touched = true;
  };
  return id;
}

Tape::Var Tape::reshape(Var a, std::vector<int64_t> shape) {
  if (Tensor::numel_of(shape) != value(a).numel())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out(shape, value(a).data);
  Var id = emit(std::move(out), "reshape", nullptr);
  nodes_.back().backprop = [a, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    t.accum_raw(a, dy.ptr(), dy.numel());
  };
  return id;
}

Tape::Var Tape::conv1d(Var x, Var k, int64_t stride, int64_t dilation) {
  const Tensor& xv = value(x);
  const Tensor& kv = value(k);
  if (xv.rank() != 1 || kv.rank() != 1)
    throw std::invalid_argument("conv1d: expect rank-1 operands");
  auto out = kern::conv1d(xv.data, kv.data, stride, dilation);
  Var id = emit(Tensor::from_vector(std::move(out)), "conv1d", nullptr);
  nodes_.back().backprop = [x, k, stride, dilation, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    const Tensor& xv = t.value(x);
    const Tensor& kv = t.value(k);
    auto dx = kern::conv1d_grad_x(dy.data, kv.data, xv.numel(), stride, dilation);
    auto dk = kern::conv1d_grad_k(dy.data, xv.data, kv.numel(), stride, dilation);
    t.accum_raw(x, dx.data(), static_cast<int64_t>(dx.size()));
    t.accum_raw(k, dk.data(), static_cast<int64_t>(dk.size()));
  };
  return id;
}

Tape::Var Tape::conv2d(Var x, Var kernels, int64_t stride_h, int64_t stride_w, int64_t dil_h,
                       int64_t dil_w) {
  Tensor out = kern::conv2d(value(x), value(kernels), stride_h, stride_w, dil_h, dil_w);
  Var id = emit(std::move(out), "conv2d", nullptr);
  nodes_.back().backprop = [x, kernels, stride_h, stride_w, dil_h, dil_w, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    const Tensor& xv = t.value(x);
    const Tensor& kv = t.value(kernels);
    Tensor dx = kern::conv2d_grad_x(dy, kv, xv.dim(0), xv.dim(1), stride_h, stride_w, dil_h,
                                    dil_w);
    Tensor dk =
        kern::conv2d_grad_k(dy, xv, kv.dim(1), kv.dim(2), stride_h, stride_w, dil_h, dil_w);
    t.accum(x, dx);
    t.accum(kernels, dk);
  };
  return id;
}

Tape::Var Tape::matmul(Var w, Var x) {
  Tensor out = kern::matmul(value(w), value(x));
  Var id = emit(std::move(out), "matmul", nullptr);
  nodes_.back().backprop = [w, x, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    Tensor dw = kern::matmul_grad_w(dy, t.value(x));
    Tensor dx = kern::matmul_grad_x(dy, t.value(w));
    t.accum(w, dw);
    t.accum(x, dx);
  };
  return id;
}

Tape::Var Tape::add_col_bias(Var x, Var b) {
  const Tensor& xv = value(x);
  const Tensor& bv = value(b);
  if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(0))
    throw std::invalid_argument("add_col_bias: bias length must match row count");
  Tensor out = xv;
  const int64_t rows = xv.dim(0), cols = xv.dim(1);
  for (int64_t r = 0; r < rows; ++r) {
    const double biased = bv(r);
    double* row = out.ptr() + r * cols;
    for (int64_t c = 0; c < cols; ++c) row[c] += biased;
  }
  Var id = emit(std::move(out), "add_col_bias", nullptr);
  nodes_.back().backprop = [x, b, rows, cols, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    t.accum(x, dy);
    Tensor& gb = t.grad_of(b);
    for (int64_t r = 0; r < rows; ++r) {
      const double* row = dy.ptr() + r * cols;
      double acc = 0.0;
      for (int64_t c = 0; c < cols; ++c) acc += row[c];
      gb.data[static_cast<size_t>(r)] += acc;
    }
    t.nodes_[static_cast<size_t>(b)].touched = true;
  };
  return id;
}

Tape::Var Tape::dconv1d_same(Var x, Var w, int64_t dilation) {
  Tensor out = kern::dconv1d_same(value(x), value(w), dilation);
  Var id = emit(std::move(out), "dconv1d_same", nullptr);
  nodes_.back().backprop = [x, w, dilation, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    Tensor dx = kern::dconv1d_same_grad_x(dy, t.value(w), dilation);
    Tensor dw = kern::dconv1d_same_grad_w(dy, t.value(x), t.value(w).dim(1), dilation);
    t.accum(x, dx);
    t.accum(w, dw);
  };
  return id;
}

Tape::Var Tape::transposed_conv1d(Var coef, Var basis, int64_t hop) {
  auto out = kern::transposed_conv1d(value(coef), value(basis), hop);
  Var id = emit(Tensor::from_vector(std::move(out)), "transposed_conv1d", nullptr);
  nodes_.back().backprop = [coef, basis, hop, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    const Tensor& cv = t.value(coef);
    const Tensor& bv = t.value(basis);
    Tensor dc = kern::tconv_grad_coef(dy.data, bv, cv.dim(1), hop);
    Tensor db = kern::tconv_grad_basis(dy.data, cv, bv.dim(1), hop);
    t.accum(coef, dc);
    t.accum(basis, db);
  };
  return id;
}

std::vector<Tape::Var> Tape::batchnorm(const std::vector<Var>& xs, Var gamma, Var beta,
                                       Parameter& run_mean, Parameter& run_var,
                                       double momentum, double eps, BnMode mode) {
  if (xs.empty()) throw std::invalid_argument("batchnorm: no inputs");
  const int64_t rows = value(xs[0]).dim(0);
  std::vector<int64_t> widths;
  int64_t total = 0;
  for (Var v : xs) {
    if (value(v).rank() != 2 || value(v).dim(0) != rows)
      throw std::invalid_argument("batchnorm: row counts disagree");
    widths.push_back(value(v).dim(1));
    total += value(v).dim(1);
  }
  const Tensor& gv = value(gamma);
  const Tensor& bv = value(beta);
  if (gv.numel() != rows || bv.numel() != rows)
    throw std::invalid_argument("batchnorm: gamma/beta length must match feature rows");
  if (run_mean.value.numel() != rows || run_var.value.numel() != rows)
    throw std::invalid_argument("batchnorm: running stats length must match feature rows");

  // Statistics per feature row over the concatenated columns.
  std::vector<double> mu(static_cast<size_t>(rows), 0.0);
  std::vector<double> var(static_cast<size_t>(rows), 0.0);
  if (mode == BnMode::kEval) {
    for (int64_t r = 0; r < rows; ++r) {
      mu[static_cast<size_t>(r)] = run_mean.value(r);
      var[static_cast<size_t>(r)] = run_var.value(r);
    }
  } else {
    for (int64_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (size_t i = 0; i < xs.size(); ++i) {
        const Tensor& xv = value(xs[i]);
        const double* row = xv.ptr() + r * widths[i];
        for (int64_t c = 0; c < widths[i]; ++c) acc += row[c];
      }
      const double m = acc / static_cast<double>(total);
      double acc2 = 0.0;
      for (size_t i = 0; i < xs.size(); ++i) {
        const Tensor& xv = value(xs[i]);
        const double* row = xv.ptr() + r * widths[i];
        for (int64_t c = 0; c < widths[i]; ++c) {
          const double d = row[c] - m;
          acc2 += d * d;
        }
      }
      mu[static_cast<size_t>(r)] = m;
      var[static_cast<size_t>(r)] = acc2 / static_cast<double>(total);
    }
    if (mode == BnMode::kTrain) {
      for (int64_t r = 0; r < rows; ++r) {
        run_mean.value(r) = momentum * run_mean.value(r) +
                            (1.0 - momentum) * mu[static_cast<size_t>(r)];
        run_var.value(r) =
            momentum * run_var.value(r) + (1.0 - momentum) * var[static_cast<size_t>(r)];
      }
    }
  }

  std::vector<double> inv_std(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r)
    inv_std[static_cast<size_t>(r)] = 1.0 / std::sqrt(var[static_cast<size_t>(r)] + eps);

  Tensor out({rows, total});
  {
    int64_t c0 = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      const Tensor& xv = value(xs[i]);
      for (int64_t r = 0; r < rows; ++r) {
        const double* src = xv.ptr() + r * widths[i];
        double* dst = out.ptr() + r * total + c0;
        const double m = mu[static_cast<size_t>(r)];
        const double is = inv_std[static_cast<size_t>(r)];
        const double g = gv(r), be = bv(r);
        for (int64_t c = 0; c < widths[i]; ++c) dst[c] = g * (src[c] - m) * is + be;
      }
      c0 += widths[i];
    }
  }

  const bool batch_stats = (mode != BnMode::kEval);
  std::vector<Var> inputs = xs;
  Var id = emit(std::move(out), "batchnorm", nullptr);
  nodes_.back().backprop = [inputs, widths, gamma, beta, mu, inv_std, total, rows,
                            batch_stats, id](Tape& t) {
    const Tensor& dy = t.nodes_[static_cast<size_t>(id)].grad;
    const Tensor& gv = t.value(gamma);
    Tensor& ggamma = t.grad_of(gamma);
    Tensor& gbeta = t.grad_of(beta);
    const double m_total = static_cast<double>(total);
    for (int64_t r = 0; r < rows; ++r) {
      const double mr = mu[static_cast<size_t>(r)];
      const double is = inv_std[static_cast<size_t>(r)];
      const double g = gv(r);
      const double* dyr = dy.ptr() + r * total;
      // First pass: dgamma, dbeta, and the two reductions of the BN backward.
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      {
        int64_t c0 = 0;
        for (size_t i = 0; i < inputs.size(); ++i) {
          const Tensor& xv = t.value(inputs[i]);
          const double* xr = xv.ptr() + r * widths[i];
          const double* d = dyr + c0;
          for (int64_t c = 0; c < widths[i]; ++c) {
            const double xhat = (xr[c] - mr) * is;
            sum_dy += d[c];
            sum_dy_xhat += d[c] * xhat;
          }
          c0 += widths[i];
        }
      }
      ggamma.data[static_cast<size_t>(r)] += sum_dy_xhat;
      gbeta.data[static_cast<size_t>(r)] += sum_dy;
      // Second pass: input gradients.
      {
        int64_t c0 = 0;
        for (size_t i = 0; i < inputs.size(); ++i) {
          const Tensor& xv = t.value(inputs[i]);
          const double* xr = xv.ptr() + r * widths[i];
          const double* d = dyr + c0;
          Tensor& gx = t.grad_of(inputs[i]);
          double* gxr = gx.ptr() + r * widths[i];
          for (int64_t c = 0; c < widths[i]; ++c) {
            if (batch_stats) {
              const double xhat = (xr[c] - mr) * is;
              gxr[c] += g * is * (d[c] - sum_dy / m_total - xhat * sum_dy_xhat / m_total);
            } else {
              gxr[c] += g * is * d[c];
            }
          }
          c0 += widths[i];
        }
      }
    }
    for (Var v : inputs) t.nodes_[static_cast<size_t>(v)].touched = true;
    t.nodes_[static_cast<size_t>(gamma)].touched = true;
    t.nodes_[static_cast<size_t>(beta)].touched = true;
  };

  std::vector<Var> outs;
  if (xs.size() == 1) {
    outs.push_back(id);
  } else {
    int64_t c0 = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      outs.push_back(slice_cols(id, c0, widths[i]));
      c0 += widths[i];
    }
  }
  return outs;
}

void Tape::backward(Var loss) {
  if (backward_done_) throw std::invalid_argument("backward: already run on this tape");
  if (loss < 0 || static_cast<size_t>(loss) >= nodes_.size())
    throw std::invalid_argument("backward: no such node (run forward first)");
  if (nodes_[static_cast<size_t>(loss)].value.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  backward_done_ = true;
  Tensor seed = Tensor::scalar(1.0);
  seed.shape = nodes_[static_cast<size_t>(loss)].value.shape;
  accum(loss, seed);
  for (int64_t i = loss; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.touched && n.backprop) n.backprop(*this);
  }
  for (auto& n : nodes_) {
    if (n.bound && n.bound->trainable && n.touched) {
      double* dst = n.bound->grad.ptr();
      const double* src = n.grad.ptr();
      for (int64_t i = 0; i < n.grad.numel(); ++i) dst[i] += src[i];
    }
  }
}

}  // namespace spatialsep::ad
