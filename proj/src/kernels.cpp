// Copyright 2026 The spatialsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "spatialsep/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace spatialsep::kern {

int64_t conv_output_len(int64_t input_len, int64_t kernel_len, int64_t stride,
                        int64_t dilation) {
  if (kernel_len < 1) throw std::invalid_argument("conv: empty kernel");
  if (stride < 1 || dilation < 1)
    throw std::invalid_argument("conv: stride and dilation must be positive");
  const int64_t span = dilation * (kernel_len - 1) + 1;
  if (input_len < span)
    throw std::invalid_argument("conv: input shorter than dilated kernel span");
  return (input_len - span) / stride + 1;
}

Tensor frame_signal(std::span<const double> x, int64_t window_len, int64_t hop) {
  const auto t = static_cast<int64_t>(x.size());
  if (hop < 1 || window_len < hop)
    throw std::invalid_argument("frame_signal: need hop >= 1 and window_len >= hop");
  if (t < window_len) throw std::invalid_argument("signal shorter than window");
  const int64_t frames = (t - window_len) / hop + 1;
  Tensor out({frames, window_len});
  double* o = out.ptr();
#pragma omp parallel for
  for (int64_t f = 0; f < frames; ++f) {
    const double* src = x.data() + f * hop;
    double* dst = o + f * window_len;
    for (int64_t i = 0; i < window_len; ++i) dst[i] = src[i];
  }
  return out;
}

std::vector<double> conv1d(std::span<const double> x, std::span<const double> k,
                           int64_t stride, int64_t dilation) {
  const auto t = static_cast<int64_t>(x.size());
  const auto l = static_cast<int64_t>(k.size());
  const int64_t out_len = conv_output_len(t, l, stride, dilation);
  std::vector<double> out(static_cast<size_t>(out_len));
  const double* xp = x.data();
  const double* kp = k.data();
#pragma omp parallel for
  for (int64_t i = 0; i < out_len; ++i) {
    const double* base = xp + i * stride;
    double acc = 0.0;
    for (int64_t j = 0; j < l; ++j) acc += base[j * dilation] * kp[j];
    out[static_cast<size_t>(i)] = acc;
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, int64_t stride_h, int64_t stride_w,
              int64_t dil_h, int64_t dil_w) {
  if (x.rank() != 2 || kernels.rank() != 3)
    throw std::invalid_argument("conv2d: expect x [CxT] and kernels [NxhxL]");
  const int64_t c = x.dim(0), t = x.dim(1);
  const int64_t n = kernels.dim(0), h = kernels.dim(1), l = kernels.dim(2);
  int64_t out_h;
  try {
    out_h = conv_output_len(c, h, stride_h, dil_h);
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("conv2d: kernel taller than input span");
  }
  const int64_t out_w = conv_output_len(t, l, stride_w, dil_w);
  Tensor out({n, out_h, out_w});
  const double* xp = x.ptr();
  const double* kp = kernels.ptr();
  double* op = out.ptr();
#pragma omp parallel for collapse(2)
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t oi = 0; oi < out_h; ++oi) {
      const double* kbase = kp + ni * h * l;
      for (int64_t oj = 0; oj < out_w; ++oj) {
        double acc = 0.0;
        for (int64_t a = 0; a < h; ++a) {
          const double* xrow = xp + (oi * stride_h + a * dil_h) * t + oj * stride_w;
          const double* krow = kbase + a * l;
          for (int64_t b = 0; b < l; ++b) acc += xrow[b * dil_w] * krow[b];
        }
        op[(ni * out_h + oi) * out_w + oj] = acc;
      }
    }
  }
  return out;
}

std::vector<double> overlap_add(const Tensor& frames, int64_t hop) {
  if (frames.rank() != 2 || frames.dim(0) < 1)
    throw std::invalid_argument("overlap_add: empty input");
  const int64_t f = frames.dim(0), l = frames.dim(1);
  if (hop > l) throw std::invalid_argument("overlap_add: hop must be <= window length");
  const int64_t out_len = (f - 1) * hop + l;
  std::vector<double> out(static_cast<size_t>(out_len));
  const double* fp = frames.ptr();
  // Gather per output sample: frames overlapping t are f in [ceil((t-l+1)/hop), t/hop].
#pragma omp parallel for
  for (int64_t ti = 0; ti < out_len; ++ti) {
    int64_t f_lo = (ti - l + hop) >= 0 ? (ti - l + hop) / hop : 0;
    if (f_lo * hop + l <= ti) ++f_lo;  // integer-division guard
    int64_t f_hi = ti / hop;
    if (f_hi >= f) f_hi = f - 1;
    double acc = 0.0;
    for (int64_t fi = f_lo; fi <= f_hi; ++fi) acc += fp[fi * l + (ti - fi * hop)];
    out[static_cast<size_t>(ti)] = acc;
  }
  return out;
}

std::vector<double> transposed_conv1d(const Tensor& coef, const Tensor& basis, int64_t hop) {
  if (coef.rank() != 2 || basis.rank() != 2 || coef.dim(0) != basis.dim(0))
    throw std::invalid_argument("transposed_conv1d: coef [NxF] and basis [NxL] disagree");
  const int64_t n = coef.dim(0), f = coef.dim(1), l = basis.dim(1);
  if (f < 1) throw std::invalid_argument("transposed_conv1d: empty input");
  if (hop > l) throw std::invalid_argument("transposed_conv1d: hop must be <= basis length");
  const int64_t out_len = (f - 1) * hop + l;
  std::vector<double> out(static_cast<size_t>(out_len));
  const double* cp = coef.ptr();
  const double* bp = basis.ptr();
#pragma omp parallel for
  for (int64_t ti = 0; ti < out_len; ++ti) {
    int64_t f_lo = (ti - l + hop) >= 0 ? (ti - l + hop) / hop : 0;
    if (f_lo * hop + l <= ti) ++f_lo;
    int64_t f_hi = ti / hop;
    if (f_hi >= f) f_hi = f - 1;
    double acc = 0.0;
    for (int64_t fi = f_lo; fi <= f_hi; ++fi) {
      const int64_t off = ti - fi * hop;
      for (int64_t ni = 0; ni < n; ++ni) acc += cp[ni * f + fi] * bp[ni * l + off];
    }
    out[static_cast<size_t>(ti)] = acc;
  }
  return out;
}

void rdft(std::span<const double> frame, int64_t n_fft, std::span<double> re,
          std::span<double> im) {
  const auto l = static_cast<int64_t>(frame.size());
  if (n_fft < l) throw std::invalid_argument("rdft: n_fft must be >= frame length");
  const int64_t bins = n_fft / 2 + 1;
  if (static_cast<int64_t>(re.size()) != bins || static_cast<int64_t>(im.size()) != bins)
    throw std::invalid_argument("rdft: output size must be n_fft/2 + 1");
  const double w = -2.0 * M_PI / static_cast<double>(n_fft);
  for (int64_t fbin = 0; fbin < bins; ++fbin) {
    double sr = 0.0, si = 0.0;
    for (int64_t ti = 0; ti < l; ++ti) {
      const double ang = w * static_cast<double>(fbin * ti);
      sr += frame[static_cast<size_t>(ti)] * std::cos(ang);
      si += frame[static_cast<size_t>(ti)] * std::sin(ang);
    }
    re[static_cast<size_t>(fbin)] = sr;
    im[static_cast<size_t>(fbin)] = si;
  }
}

ComplexSpec rdft_frames(const Tensor& frames, int64_t n_fft) {
  if (frames.rank() != 2) throw std::invalid_argument("rdft_frames: expect [F x L]");
  const int64_t f = frames.dim(0), l = frames.dim(1);
  if (n_fft < l) throw std::invalid_argument("rdft: n_fft must be >= frame length");
  const int64_t bins = n_fft / 2 + 1;
  // Twiddle table: cos/sin of -2*pi*f*t/n_fft for t mod n_fft.
  std::vector<double> tw_re(static_cast<size_t>(bins * n_fft));
  std::vector<double> tw_im(static_cast<size_t>(bins * n_fft));
  for (int64_t fbin = 0; fbin < bins; ++fbin) {
    for (int64_t ti = 0; ti < n_fft; ++ti) {
      const double ang = -2.0 * M_PI * static_cast<double>((fbin * ti) % n_fft) /
                         static_cast<double>(n_fft);
      tw_re[static_cast<size_t>(fbin * n_fft + ti)] = std::cos(ang);
      tw_im[static_cast<size_t>(fbin * n_fft + ti)] = std::sin(ang);
    }
  }
  ComplexSpec spec{Tensor({f, bins}), Tensor({f, bins})};
  const double* fp = frames.ptr();
  double* rp = spec.re.ptr();
  double* ip = spec.im.ptr();
#pragma omp parallel for
  for (int64_t fi = 0; fi < f; ++fi) {
    const double* frm = fp + fi * l;
    for (int64_t fbin = 0; fbin < bins; ++fbin) {
      const double* cr = tw_re.data() + fbin * n_fft;
      const double* ci = tw_im.data() + fbin * n_fft;
      double sr = 0.0, si = 0.0;
      for (int64_t ti = 0; ti < l; ++ti) {
        sr += frm[ti] * cr[ti];
        si += frm[ti] * ci[ti];
      }
      rp[fi * bins + fbin] = sr;
      ip[fi * bins + fbin] = si;
    }
  }
  return spec;
}

std::vector<double> conv1d_grad_x(std::span<const double> dy, std::span<const double> k,
                                  int64_t input_len, int64_t stride, int64_t dilation) {
  const auto out_len = static_cast<int64_t>(dy.size());
  const auto l = static_cast<int64_t>(k.size());
  std::vector<double> dx(static_cast<size_t>(input_len));
#pragma omp parallel for
  for (int64_t i = 0; i < input_len; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < l; ++j) {
      const int64_t rem = i - j * dilation;
      if (rem < 0) break;
      if (rem % stride) continue;
      const int64_t ti = rem / stride;
      if (ti < out_len) acc += dy[static_cast<size_t>(ti)] * k[static_cast<size_t>(j)];
    }
    dx[static_cast<size_t>(i)] = acc;
  }
  return dx;
}

std::vector<double> conv1d_grad_k(std::span<const double> dy, std::span<const double> x,
                                  int64_t kernel_len, int64_t stride, int64_t dilation) {
  const auto out_len = static_cast<int64_t>(dy.size());
  std::vector<double> dk(static_cast<size_t>(kernel_len));
#pragma omp parallel for
  for (int64_t j = 0; j < kernel_len; ++j) {
    double acc = 0.0;
    for (int64_t ti = 0; ti < out_len; ++ti)
      acc += dy[static_cast<size_t>(ti)] * x[static_cast<size_t>(ti * stride + j * dilation)];
    dk[static_cast<size_t>(j)] = acc;
  }
  return dk;
}

Tensor conv2d_grad_x(const Tensor& dy, const Tensor& kernels, int64_t c, int64_t t,
                     int64_t stride_h, int64_t stride_w, int64_t dil_h, int64_t dil_w) {
  const int64_t n = kernels.dim(0), h = kernels.dim(1), l = kernels.dim(2);
  const int64_t out_h = dy.dim(1), out_w = dy.dim(2);
  Tensor dx({c, t});
  const double* dp = dy.ptr();
  const double* kp = kernels.ptr();
  double* xp = dx.ptr();
#pragma omp parallel for collapse(2)
  for (int64_t r = 0; r < c; ++r) {
    for (int64_t col = 0; col < t; ++col) {
      double acc = 0.0;
      for (int64_t a = 0; a < h; ++a) {
        const int64_t rem_h = r - a * dil_h;
        if (rem_h < 0) break;
        if (rem_h % stride_h) continue;
        const int64_t oi = rem_h / stride_h;
        if (oi >= out_h) continue;
        for (int64_t b = 0; b < l; ++b) {
          const int64_t rem_w = col - b * dil_w;
          if (rem_w < 0) break;
          if (rem_w % stride_w) continue;
          const int64_t oj = rem_w / stride_w;
          if (oj >= out_w) continue;
          for (int64_t ni = 0; ni < n; ++ni)
            acc += dp[(ni * out_h + oi) * out_w + oj] * kp[(ni * h + a) * l + b];
        }
      }
      xp[r * t + col] = acc;
    }
  }
  return dx;
}

Tensor conv2d_grad_k(const Tensor& dy, const Tensor& x, int64_t h, int64_t l,
                     int64_t stride_h, int64_t stride_w, int64_t dil_h, int64_t dil_w) {
  const int64_t n = dy.dim(0), out_h = dy.dim(1), out_w = dy.dim(2);
  const int64_t t = x.dim(1);
  Tensor dk({n, h, l});
  const double* dp = dy.ptr();
  const double* xp = x.ptr();
  double* kp = dk.ptr();
#pragma omp parallel for collapse(2)
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t a = 0; a < h; ++a) {
      for (int64_t b = 0; b < l; ++b) {
        double acc = 0.0;
        for (int64_t oi = 0; oi < out_h; ++oi) {
          const double* xrow = xp + (oi * stride_h + a * dil_h) * t + b * dil_w;
          const double* drow = dp + (ni * out_h + oi) * out_w;
          for (int64_t oj = 0; oj < out_w; ++oj) acc += drow[oj] * xrow[oj * stride_w];
        }
        kp[(ni * h + a) * l + b] = acc;
      }
    }
  }
  return dk;
}

Tensor tconv_grad_coef(std::span<const double> dy, const Tensor& basis, int64_t frames,
                       int64_t hop) {
  const int64_t n = basis.dim(0), l = basis.dim(1);
  Tensor dc({n, frames});
  const double* bp = basis.ptr();
  double* cp = dc.ptr();
#pragma omp parallel for collapse(2)
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t fi = 0; fi < frames; ++fi) {
      const double* dyp = dy.data() + fi * hop;
      const double* brow = bp + ni * l;
      double acc = 0.0;
      for (int64_t j = 0; j < l; ++j) acc += dyp[j] * brow[j];
      cp[ni * frames + fi] = acc;
    }
  }
  return dc;
}

Tensor tconv_grad_basis(std::span<const double> dy, const Tensor& coef, int64_t basis_len,
                        int64_t hop) {
  const int64_t n = coef.dim(0), frames = coef.dim(1);
  Tensor db({n, basis_len});
  const double* cp = coef.ptr();
  double* bp = db.ptr();
#pragma omp parallel for collapse(2)
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t j = 0; j < basis_len; ++j) {
      double acc = 0.0;
      for (int64_t fi = 0; fi < frames; ++fi)
        acc += cp[ni * frames + fi] * dy[static_cast<size_t>(fi * hop + j)];
      bp[ni * basis_len + j] = acc;
    }
  }
  return db;
}

Tensor matmul(const Tensor& w, const Tensor& x) {
  if (w.rank() != 2 || x.rank() != 2 || w.dim(1) != x.dim(0))
    throw std::invalid_argument("matmul: shape mismatch " + w.shape_str() + " * " +
                                x.shape_str());
  const int64_t o = w.dim(0), i = w.dim(1), f = x.dim(1);
  Tensor out({o, f});
  const double* wp = w.ptr();
  const double* xp = x.ptr();
  double* op = out.ptr();
#pragma omp parallel for
  for (int64_t r = 0; r < o; ++r) {
    double* orow = op + r * f;
    const double* wrow = wp + r * i;
    for (int64_t kk = 0; kk < i; ++kk) {
      const double wv = wrow[kk];
      const double* xrow = xp + kk * f;
      for (int64_t cc = 0; cc < f; ++cc) orow[cc] += wv * xrow[cc];
    }
  }
  return out;
}

Tensor matmul_grad_w(const Tensor& dy, const Tensor& x) {
  const int64_t o = dy.dim(0), f = dy.dim(1), i = x.dim(0);
  Tensor dw({o, i});
  const double* dp = dy.ptr();
  const double* xp = x.ptr();
  double* wp = dw.ptr();
#pragma omp parallel for
  for (int64_t r = 0; r < o; ++r) {
    const double* drow = dp + r * f;
    double* wrow = wp + r * i;
    for (int64_t kk = 0; kk < i; ++kk) {
      const double* xrow = xp + kk * f;
      double acc = 0.0;
      for (int64_t cc = 0; cc < f; ++cc) acc += drow[cc] * xrow[cc];
      wrow[kk] = acc;
    }
  }
  return dw;
}

Tensor matmul_grad_x(const Tensor& dy, const Tensor& w) {
  const int64_t o = dy.dim(0), f = dy.dim(1), i = w.dim(1);
  Tensor dx({i, f});
  const double* dp = dy.ptr();
  const double* wp = w.ptr();
  double* xp = dx.ptr();
#pragma omp parallel for
  for (int64_t kk = 0; kk < i; ++kk) {
    double* xrow = xp + kk * f;
    for (int64_t r = 0; r < o; ++r) {
      const double wv = wp[r * i + kk];
      const double* drow = dp + r * f;
      for (int64_t cc = 0; cc < f; ++cc) xrow[cc] += wv * drow[cc];
    }
  }
  return dx;
}

Tensor dconv1d_same(const Tensor& x, const Tensor& w, int64_t dilation) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(0) != w.dim(0))
    throw std::invalid_argument("dconv1d_same: X [HxF] and W [HxP] disagree");
  const int64_t h = x.dim(0), f = x.dim(1), p = w.dim(1);
  if (p % 2 == 0) throw std::invalid_argument("dconv1d_same: taps must be odd");
  const int64_t half = (p - 1) / 2;
  Tensor out({h, f});
  const double* xp = x.ptr();
  const double* wp = w.ptr();
  double* op = out.ptr();
#pragma omp parallel for
  for (int64_t r = 0; r < h; ++r) {
    const double* xrow = xp + r * f;
    const double* wrow = wp + r * p;
    double* orow = op + r * f;
    for (int64_t cc = 0; cc < f; ++cc) {
      double acc = 0.0;
      for (int64_t j = 0; j < p; ++j) {
        const int64_t src = cc + (j - half) * dilation;
        if (src >= 0 && src < f) acc += xrow[src] * wrow[j];
      }
      orow[cc] = acc;
    }
  }
  return out;
}

Tensor dconv1d_same_grad_x(const Tensor& dy, const Tensor& w, int64_t dilation) {
  const int64_t h = dy.dim(0), f = dy.dim(1), p = w.dim(1);
  const int64_t half = (p - 1) / 2;
  Tensor dx({h, f});
  const double* dp = dy.ptr();
  const double* wp = w.ptr();
  double* xp = dx.ptr();
#pragma omp parallel for
  for (int64_t r = 0; r < h; ++r) {
    const double* drow = dp + r * f;
    const double* wrow = wp + r * p;
    double* xrow = xp + r * f;
    for (int64_t src = 0; src < f; ++src) {
      double acc = 0.0;
      for (int64_t j = 0; j < p; ++j) {
        const int64_t cc = src - (j - half) * dilation;
        if (cc >= 0 && cc < f) acc += drow[cc] * wrow[j];
      }
      xrow[src] = acc;
    }
  }
  return dx;
}

Tensor dconv1d_same_grad_w(const Tensor& dy, const Tensor& x, int64_t taps, int64_t dilation) {
  const int64_t h = dy.dim(0), f = dy.dim(1);
  const int64_t half = (taps - 1) / 2;
  Tensor dw({h, taps});
  const double* dp = dy.ptr();
  const double* xp = x.ptr();
  double* wp = dw.ptr();
#pragma omp parallel for
  for (int64_t r = 0; r < h; ++r) {
    const double* drow = dp + r * f;
    const double* xrow = xp + r * f;
    double* wrow = wp + r * taps;
    for (int64_t j = 0; j < taps; ++j) {
      double acc = 0.0;
      for (int64_t cc = 0; cc < f; ++cc) {
        const int64_t src = cc + (j - half) * dilation;
        if (src >= 0 && src < f) acc += drow[cc] * xrow[src];
      }
      wrow[j] = acc;
    }
  }
  return dw;
}

}  // namespace spatialsep::kern
