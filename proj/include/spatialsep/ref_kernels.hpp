// Copyright 2026 The spatialsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <span>
#include <vector>

#include "spatialsep/tensor.hpp"

namespace spatialsep::refk {

// Serial naive reference implementations. These are the correctness oracles
// for the OpenMP kernels and the baseline side of the benchmark target. Keep
// them independent of kernels.cpp: plain nested loops, scatter-style where
// that is the obvious formulation.

std::vector<double> conv1d(std::span<const double> x, std::span<const double> k,
                           int64_t stride, int64_t dilation);

Tensor conv2d(const Tensor& x, const Tensor& kernels, int64_t stride_h, int64_t stride_w,
              int64_t dil_h, int64_t dil_w);

std::vector<double> overlap_add(const Tensor& frames, int64_t hop);

std::vector<double> transposed_conv1d(const Tensor& coef, const Tensor& basis, int64_t hop);

// Direct O(n^2) DFT sum, one std::cos/std::sin call per term.
void rdft(std::span<const double> frame, int64_t n_fft, std::span<double> re,
          std::span<double> im);

}  // namespace spatialsep::refk
