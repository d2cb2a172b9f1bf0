// Copyright 2026 The spatialsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "spatialsep/ref_kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace spatialsep::refk {

std::vector<double> conv1d(std::span<const double> x, std::span<const double> k,
                           int64_t stride, int64_t dilation) {
  const auto t = static_cast<int64_t>(x.size());
  const auto l = static_cast<int64_t>(k.size());
  if (l < 1) throw std::invalid_argument("conv: empty kernel");
  const int64_t span = dilation * (l - 1) + 1;
  if (t < span) throw std::invalid_argument("conv: input shorter than dilated kernel span");
  const int64_t out_len = (t - span) / stride + 1;
  std::vector<double> out(static_cast<size_t>(out_len), 0.0);
  for (int64_t i = 0; i < out_len; ++i)
    for (int64_t j = 0; j < l; ++j)
      out[static_cast<size_t>(i)] +=
          x[static_cast<size_t>(i * stride + j * dilation)] * k[static_cast<size_t>(j)];
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, int64_t stride_h, int64_t stride_w,
              int64_t dil_h, int64_t dil_w) {
  const int64_t c = x.dim(0), t = x.dim(1);
  const int64_t n = kernels.dim(0), h = kernels.dim(1), l = kernels.dim(2);
  const int64_t span_h = dil_h * (h - 1) + 1;
  const int64_t span_w = dil_w * (l - 1) + 1;
  if (c < span_h) throw std::invalid_argument("conv2d: kernel taller than input span");
  if (t < span_w) throw std::invalid_argument("conv2d: input shorter than dilated kernel span");
  const int64_t out_h = (c - span_h) / stride_h + 1;
  const int64_t out_w = (t - span_w) / stride_w + 1;
  Tensor out({n, out_h, out_w});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t oi = 0; oi < out_h; ++oi)
      for (int64_t oj = 0; oj < out_w; ++oj) {
        double acc = 0.0;
        for (int64_t a = 0; a < h; ++a)
          for (int64_t b = 0; b < l; ++b)
            acc += x(oi * stride_h + a * dil_h, oj * stride_w + b * dil_w) * kernels(ni, a, b);
        out(ni, oi, oj) = acc;
      }
  return out;
}

std::vector<double> overlap_add(const Tensor& frames, int64_t hop) {
  if (frames.rank() != 2 || frames.dim(0) < 1)
    throw std::invalid_argument("overlap_add: empty input");
  const int64_t f = frames.dim(0), l = frames.dim(1);
  std::vector<double> out(static_cast<size_t>((f - 1) * hop + l), 0.0);
  for (int64_t fi = 0; fi < f; ++fi)
    for (int64_t j = 0; j < l; ++j) out[static_cast<size_t>(fi * hop + j)] += frames(fi, j);
  return out;
}

std::vector<double> transposed_conv1d(const Tensor& coef, const Tensor& basis, int64_t hop) {
  const int64_t n = coef.dim(0), f = coef.dim(1), l = basis.dim(1);
  if (f < 1) throw std::invalid_argument("transposed_conv1d: empty input");
  std::vector<double> out(static_cast<size_t>((f - 1) * hop + l), 0.0);
  for (int64_t fi = 0; fi < f; ++fi)
    for (int64_t ni = 0; ni < n; ++ni)
      for (int64_t j = 0; j < l; ++j)
        out[static_cast<size_t>(fi * hop + j)] += coef(ni, fi) * basis(ni, j);
  return out;
}

void rdft(std::span<const double> frame, int64_t n_fft, std::span<double> re,
          std::span<double> im) {
  const auto l = static_cast<int64_t>(frame.size());
  if (n_fft < l) throw std::invalid_argument("rdft: n_fft must be >= frame length");
  const int64_t bins = n_fft / 2 + 1;
  for (int64_t fbin = 0; fbin < bins; ++fbin) {
    double sr = 0.0, si = 0.0;
    for (int64_t ti = 0; ti < l; ++ti) {
      const double ang =
          -2.0 * M_PI * static_cast<double>(fbin) * static_cast<double>(ti) /
          static_cast<double>(n_fft);
      sr += frame[static_cast<size_t>(ti)] * std::cos(ang);
      si += frame[static_cast<size_t>(ti)] * std::sin(ang);
    }
    re[static_cast<size_t>(fbin)] = sr;
    im[static_cast<size_t>(fbin)] = si;
  }
}

}  // namespace spatialsep::refk
