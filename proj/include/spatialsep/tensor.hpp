// Copyright 2026 The spatialsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace spatialsep {

// Dense row-major f64 tensor, rank 0..3. All toolkit arithmetic is f64;
// WAV I/O converts at the boundary.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int64_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw std::invalid_argument("tensor: data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor from_vector(std::vector<double> v) {
    auto n = static_cast<int64_t>(v.size());
    return Tensor({n}, std::move(v));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  double& operator()(int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator()(int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& operator()(int64_t i, int64_t j) {
    return data[static_cast<size_t>(i * shape[1] + j)];
  }
  double operator()(int64_t i, int64_t j) const {
    return data[static_cast<size_t>(i * shape[1] + j)];
  }
  double& operator()(int64_t i, int64_t j, int64_t k) {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  double operator()(int64_t i, int64_t j, int64_t k) const {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

// C x T sample matrix plus rate. Channel 1 (row 0) is the reference channel.
struct MultiChannelSignal {
  Tensor samples;  // [C x T]
  int sample_rate = 16000;

  int64_t channels() const { return samples.rank() == 2 ? samples.dim(0) : 0; }
  int64_t length() const { return samples.rank() == 2 ? samples.dim(1) : 0; }

  std::vector<double> channel(int64_t c) const {
    const int64_t t = length();
    std::vector<double> out(static_cast<size_t>(t));
    for (int64_t i = 0; i < t; ++i) out[static_cast<size_t>(i)] = samples(c, i);
    return out;
  }

  void validate() const {
    if (samples.rank() != 2 || samples.dim(0) < 1 || samples.dim(1) < 1)
      throw std::invalid_argument("signal: need C >= 1, T >= 1");
    if (sample_rate <= 0) throw std::invalid_argument("signal: sample_rate must be positive");
  }
};

}  // namespace spatialsep
