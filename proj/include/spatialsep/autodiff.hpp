// Copyright 2026 The spatialsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spatialsep/tensor.hpp"

namespace spatialsep::ad {

// Named trainable array. grad has the value's shape and is zeroed between
// optimizer steps; non-trainable parameters never receive gradients.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), trainable(train) {
    grad = Tensor::zeros(value.shape);
  }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

enum class BnMode {
  kTrain,          // batch statistics, update running stats
  kTrainNoUpdate,  // batch statistics, running stats untouched (gradient checks)
  kEval,           // running statistics
};

// Eager reverse-mode tape. Building the graph is the forward pass; every op
// records a closure that pulls this node's gradient and pushes into its
// inputs. Reverse traversal visits each node once; fan-out accumulates
// additively. Single-threaded per tape (kernels may use OpenMP internally).
class Tape {
 public:
  using Var = int32_t;

  // Finite-value checking on every op output (error names the first
  // offending node). On by default; training keeps it on.
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

  Var input(Tensor value);
  Var param(Parameter& p);

  const Tensor& value(Var v) const { return nodes_[static_cast<size_t>(v)].value; }

  // Elementwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);  // caller guarantees nonzero denominator
  Var scale(Var a, double c);
  Var relu(Var a);
  Var prelu(Var a, Var slope);  // slope: scalar, shared over elements
  Var sigmoid(Var a);
  Var exp(Var a);

  // Broadcast against a scalar node.
  Var sub_scalar(Var a, Var s);
  Var mul_scalar(Var a, Var s);

  // Reductions to scalar.
  Var sum(Var a);
  Var mean(Var a);
  Var dot(Var a, Var b);

  // Scalar guards used inside the training loss.
  Var div_clamped(Var num, Var den, double floor);
  Var log10_clamped(Var a, double floor);

  // Structure.
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_rows(Var a, int64_t row0, int64_t nrows);
  Var slice_cols(Var a, int64_t col0, int64_t ncols);
  Var reshape(Var a, std::vector<int64_t> shape);

  // Linear and convolution primitives.
  Var conv1d(Var x, Var k, int64_t stride, int64_t dilation);
  Var conv2d(Var x, Var kernels, int64_t stride_h, int64_t stride_w, int64_t dil_h,
             int64_t dil_w);
  Var matmul(Var w, Var x);
  Var add_col_bias(Var x, Var b);  // x[r][c] + b[r]
  Var dconv1d_same(Var x, Var w, int64_t dilation);
  Var transposed_conv1d(Var coef, Var basis, int64_t hop);

  // Per-feature batch normalization over (batch, time): statistics span the
  // columns of every item jointly. Items must share the row count. Running
  // stats live in the two non-trainable parameters.
  std::vector<Var> batchnorm(const std::vector<Var>& xs, Var gamma, Var beta,
                             Parameter& run_mean, Parameter& run_var, double momentum,
                             double eps, BnMode mode);

  // Reverse pass from a scalar loss; writes gradients into every bound
  // trainable Parameter. One backward per tape.
  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool touched = false;
    std::function<void(Tape&)> backprop;
    Parameter* bound = nullptr;
    const char* op = "";
  };

  Var emit(Tensor value, const char* op, std::function<void(Tape&)> backprop);
  void check_node(const Node& n, Var id) const;
  Tensor& grad_of(Var v);
  void accum(Var v, const Tensor& g);
  void accum_raw(Var v, const double* g, int64_t n);

  std::vector<Node> nodes_;
  bool check_finite_;
  bool backward_done_ = false;

  friend struct TapeTestPeer;
};

}  // namespace spatialsep::ad
