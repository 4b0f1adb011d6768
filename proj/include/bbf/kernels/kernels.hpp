#pragma once

#include <cstdint>
#include <limits>

#include "bbf/kernels/backend.hpp"

// Dense numeric kernels. Float entry points dispatch to the active SIMD lane;
// double entry points always run the scalar reference path (the 64-bit build
// exists for gradient-check oracles, not speed).
//
// Layout conventions are row-major throughout.
//   gemm:    C[M,N] = A[M,K] * B[K,N]      (accumulates when acc)
//   gemm_nt: C[M,N] = A[M,K] * B[N,K]^T    (accumulates when acc)
//
// Write semantics: functions named accumulate*, relu_bwd, row_sum_acc and
// col2im_acc add into their destination (callers zero it first when needed);
// everything else overwrites.

namespace bbf::kernels {

using i64 = int64_t;

// ---- float API (dispatched) ----
void gemm(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc);
void gemm_nt(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc);
void add(const float* a, const float* b, float* out, i64 n);
void sub(const float* a, const float* b, float* out, i64 n);
void mul(const float* a, const float* b, float* out, i64 n);
void scale(const float* a, float c, float* out, i64 n);
void accumulate(float* dst, const float* src, i64 n);
void accumulate_scaled(float* dst, const float* src, float c, i64 n);
void accumulate_mul(float* dst, const float* a, const float* b, i64 n);
void relu(const float* x, float* out, i64 n);
void relu_bwd(const float* x, const float* dy, float* dx, i64 n);
void lerp(float tau, const float* a, const float* b, float* out, i64 n);
void adamw(float* p, const float* g, float* m, float* v, i64 n, float lr, float beta1,
           float beta2, float eps, float weight_decay, float inv_bc1, float inv_bc2);
float reduce_sum(const float* x, i64 n);
float reduce_sumsq(const float* x, i64 n);
float reduce_max(const float* x, i64 n);
void add_bias_rows(float* c, const float* bias, i64 m, i64 n);
void row_sum_acc(const float* dy, float* dbias, i64 m, i64 n);

// ---- double API (scalar reference only) ----
void gemm(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc);
void gemm_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc);
void add(const double* a, const double* b, double* out, i64 n);
void sub(const double* a, const double* b, double* out, i64 n);
void mul(const double* a, const double* b, double* out, i64 n);
void scale(const double* a, double c, double* out, i64 n);
void accumulate(double* dst, const double* src, i64 n);
void accumulate_scaled(double* dst, const double* src, double c, i64 n);
void accumulate_mul(double* dst, const double* a, const double* b, i64 n);
void relu(const double* x, double* out, i64 n);
void relu_bwd(const double* x, const double* dy, double* dx, i64 n);
void lerp(double tau, const double* a, const double* b, double* out, i64 n);
void adamw(double* p, const double* g, double* m, double* v, i64 n, double lr, double beta1,
           double beta2, double eps, double weight_decay, double inv_bc1, double inv_bc2);
double reduce_sum(const double* x, i64 n);
double reduce_sumsq(const double* x, i64 n);
double reduce_max(const double* x, i64 n);
void add_bias_rows(double* c, const double* bias, i64 m, i64 n);
void row_sum_acc(const double* dy, double* dbias, i64 m, i64 n);

// ---- index-shuffling helpers (shared scalar code, no SIMD lane) ----

/// NCHW conv lowering: out is [cin*kh*kw, batch*oh*ow] with columns ordered
/// (b, oy, ox). Out-of-range taps contribute zero.
template <typename T>
void im2col(const T* x, T* out, i64 batch, i64 cin, i64 h, i64 w, i64 kh, i64 kw, i64 stride,
            i64 pad, i64 oh, i64 ow) {
  const i64 cols = batch * oh * ow;
  i64 row = 0;
  for (i64 c = 0; c < cin; ++c) {
    for (i64 ky = 0; ky < kh; ++ky) {
      for (i64 kx = 0; kx < kw; ++kx, ++row) {
        T* dst = out + row * cols;
        for (i64 b = 0; b < batch; ++b) {
          const T* src = x + (b * cin + c) * h * w;
          for (i64 oy = 0; oy < oh; ++oy) {
            const i64 iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) {
              for (i64 ox = 0; ox < ow; ++ox) *dst++ = T(0);
              continue;
            }
            for (i64 ox = 0; ox < ow; ++ox) {
              const i64 ix = ox * stride - pad + kx;
              *dst++ = (ix < 0 || ix >= w) ? T(0) : src[iy * w + ix];
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds columns back into the input gradient.
template <typename T>
void col2im_acc(const T* cols_mat, T* dx, i64 batch, i64 cin, i64 h, i64 w, i64 kh, i64 kw,
                i64 stride, i64 pad, i64 oh, i64 ow) {
  const i64 cols = batch * oh * ow;
  i64 row = 0;
  for (i64 c = 0; c < cin; ++c) {
    for (i64 ky = 0; ky < kh; ++ky) {
      for (i64 kx = 0; kx < kw; ++kx, ++row) {
        const T* src = cols_mat + row * cols;
        for (i64 b = 0; b < batch; ++b) {
          T* dst = dx + (b * cin + c) * h * w;
          for (i64 oy = 0; oy < oh; ++oy) {
            const i64 iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) {
              src += ow;
              continue;
            }
            for (i64 ox = 0; ox < ow; ++ox) {
              const i64 ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) dst[iy * w + ix] += src[ox];
            }
            src += ow;
          }
        }
      }
    }
  }
}

template <typename T>
void transpose(const T* a, T* out, i64 m, i64 n) {
  for (i64 i = 0; i < m; ++i)
    for (i64 j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
}

/// Max pooling over NCHW with implicit -inf padding; records argmax source
/// offsets (relative to each image plane) for the backward scatter.
template <typename T>
void maxpool2d(const T* x, T* out, int32_t* argmax, i64 batch, i64 c, i64 h, i64 w, i64 kernel,
               i64 stride, i64 pad, i64 oh, i64 ow) {
  for (i64 bc = 0; bc < batch * c; ++bc) {
    const T* src = x + bc * h * w;
    T* dst = out + bc * oh * ow;
    int32_t* arg = argmax + bc * oh * ow;
    for (i64 oy = 0; oy < oh; ++oy) {
      for (i64 ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        int32_t best_at = 0;
        for (i64 ky = 0; ky < kernel; ++ky) {
          const i64 iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (i64 kx = 0; kx < kernel; ++kx) {
            const i64 ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const T v = src[iy * w + ix];
            if (v > best) {
              best = v;
              best_at = static_cast<int32_t>(iy * w + ix);
            }
          }
        }
        dst[oy * ow + ox] = best;
        arg[oy * ow + ox] = best_at;
      }
    }
  }
}

template <typename T>
void maxpool2d_bwd(const T* dy, const int32_t* argmax, T* dx, i64 batch_c, i64 plane_in,
                   i64 plane_out) {
  for (i64 bc = 0; bc < batch_c; ++bc) {
    const T* g = dy + bc * plane_out;
    const int32_t* arg = argmax + bc * plane_out;
    T* dst = dx + bc * plane_in;
    for (i64 i = 0; i < plane_out; ++i) dst[arg[i]] += g[i];
  }
}

}  // namespace bbf::kernels
