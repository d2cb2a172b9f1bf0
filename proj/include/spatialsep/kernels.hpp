// Copyright 2026 The spatialsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <span>
#include <vector>

#include "spatialsep/tensor.hpp"

namespace spatialsep::kern {

// OpenMP-parallel kernels. Parallelism is always across independent output
// elements, so results are bitwise identical for any thread count. Serial
// counterparts used as oracles live in ref_kernels.hpp.

// floor((input - dilation*(kernel-1) - 1)/stride) + 1; throws if < 1.
int64_t conv_output_len(int64_t input_len, int64_t kernel_len, int64_t stride, int64_t dilation);

// Rows are x[i*hop : i*hop + window]; no padding, no normalization.
Tensor frame_signal(std::span<const double> x, int64_t window_len, int64_t hop);

// out[t] = sum_l x[t*stride + l*dilation] * k[l] (cross-correlation).
std::vector<double> conv1d(std::span<const double> x, std::span<const double> k,
                           int64_t stride, int64_t dilation);

// x [C x T], kernels [N x h x L] -> [N x H_out x T_out].
Tensor conv2d(const Tensor& x, const Tensor& kernels, int64_t stride_h, int64_t stride_w,
              int64_t dil_h, int64_t dil_w);

// Overlap-add of rows; output length (frames-1)*hop + window.
std::vector<double> overlap_add(const Tensor& frames, int64_t hop);

// coef [N x F], basis [N x L] -> overlap-add of per-frame syntheses
// sum_n coef[n][f] * basis[n] at offset f*hop. Adjoint of the encoder conv.
std::vector<double> transposed_conv1d(const Tensor& coef, const Tensor& basis, int64_t hop);

// Half-spectrum DFT, bins 0..n_fft/2, frame zero-padded to n_fft.
void rdft(std::span<const double> frame, int64_t n_fft, std::span<double> re,
          std::span<double> im);

struct ComplexSpec {
  Tensor re, im;  // [frames x bins]
};
ComplexSpec rdft_frames(const Tensor& frames, int64_t n_fft);

// Gradient kernels (gather formulation, race-free).
std::vector<double> conv1d_grad_x(std::span<const double> dy, std::span<const double> k,
                                  int64_t input_len, int64_t stride, int64_t dilation);
std::vector<double> conv1d_grad_k(std::span<const double> dy, std::span<const double> x,
                                  int64_t kernel_len, int64_t stride, int64_t dilation);
Tensor conv2d_grad_x(const Tensor& dy, const Tensor& kernels, int64_t C, int64_t T,
                     int64_t stride_h, int64_t stride_w, int64_t dil_h, int64_t dil_w);
Tensor conv2d_grad_k(const Tensor& dy, const Tensor& x, int64_t h, int64_t L,
                     int64_t stride_h, int64_t stride_w, int64_t dil_h, int64_t dil_w);
Tensor tconv_grad_coef(std::span<const double> dy, const Tensor& basis, int64_t frames,
                       int64_t hop);
Tensor tconv_grad_basis(std::span<const double> dy, const Tensor& coef, int64_t basis_len,
                        int64_t hop);

// W [O x I] * X [I x F] -> [O x F]; 1x1 convolutions over the feature axis.
Tensor matmul(const Tensor& w, const Tensor& x);
Tensor matmul_grad_w(const Tensor& dy, const Tensor& x);
Tensor matmul_grad_x(const Tensor& dy, const Tensor& w);

// Depthwise 1D convolution with zero "same" padding, per row of X [H x F],
// taps W [H x P], odd P. Frame count preserved.
Tensor dconv1d_same(const Tensor& x, const Tensor& w, int64_t dilation);
Tensor dconv1d_same_grad_x(const Tensor& dy, const Tensor& w, int64_t dilation);
Tensor dconv1d_same_grad_w(const Tensor& dy, const Tensor& x, int64_t taps, int64_t dilation);

}  // namespace spatialsep::kern
