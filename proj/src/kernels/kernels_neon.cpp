#include <cmath>
#include <limits>

#if defined(__aarch64__)

#include <arm_neon.h>

#include "kernels_detail.hpp"

// NEON lane (aarch64). Same contract as the x86 lanes: elementwise kernels
// replay the scalar operation sequence with 4-wide registers and match it bit
// for bit; gemm kernels use fused multiply-add and match to tolerance.

namespace bbf::kernels::detail::neon {
namespace {

// 4x8 block of C = A*B (+C).
inline void gemm_block_4x8(const float* a, const float* b, float* c, i64 k, i64 n, bool acc) {
  float32x4_t c00, c01, c10, c11, c20, c21, c30, c31;
  if (acc) {
    c00 = vld1q_f32(c + 0 * n);
    c01 = vld1q_f32(c + 0 * n + 4);
    c10 = vld1q_f32(c + 1 * n);
    c11 = vld1q_f32(c + 1 * n + 4);
    c20 = vld1q_f32(c + 2 * n);
    c21 = vld1q_f32(c + 2 * n + 4);
    c30 = vld1q_f32(c + 3 * n);
    c31 = vld1q_f32(c + 3 * n + 4);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = vdupq_n_f32(0.0f);
  }
  for (i64 p = 0; p < k; ++p) {
    const float32x4_t b0 = vld1q_f32(b + p * n);
    const float32x4_t b1 = vld1q_f32(b + p * n + 4);
    float32x4_t av = vdupq_n_f32(a[p]);
    c00 = vfmaq_f32(c00, av, b0);
    c01 = vfmaq_f32(c01, av, b1);
    av = vdupq_n_f32(a[k + p]);
    c10 = vfmaq_f32(c10, av, b0);
    c11 = vfmaq_f32(c11, av, b1);
    av = vdupq_n_f32(a[2 * k + p]);
    c20 = vfmaq_f32(c20, av, b0);
    c21 = vfmaq_f32(c21, av, b1);
    av = vdupq_n_f32(a[3 * k + p]);
    c30 = vfmaq_f32(c30, av, b0);
    c31 = vfmaq_f32(c31, av, b1);
  }
  vst1q_f32(c + 0 * n, c00);
  vst1q_f32(c + 0 * n + 4, c01);
  vst1q_f32(c + 1 * n, c10);
  vst1q_f32(c + 1 * n + 4, c11);
  vst1q_f32(c + 2 * n, c20);
  vst1q_f32(c + 2 * n + 4, c21);
  vst1q_f32(c + 3 * n, c30);
  vst1q_f32(c + 3 * n + 4, c31);
}

inline void gemm_block_1x8(const float* a, const float* b, float* c, i64 k, i64 n, bool acc) {
  float32x4_t c0, c1;
  if (acc) {
    c0 = vld1q_f32(c);
    c1 = vld1q_f32(c + 4);
  } else {
    c0 = c1 = vdupq_n_f32(0.0f);
  }
  for (i64 p = 0; p < k; ++p) {
    const float32x4_t av = vdupq_n_f32(a[p]);
    c0 = vfmaq_f32(c0, av, vld1q_f32(b + p * n));
    c1 = vfmaq_f32(c1, av, vld1q_f32(b + p * n + 4));
  }
  vst1q_f32(c, c0);
  vst1q_f32(c + 4, c1);
}

inline void gemm_cols_tail(const float* a, const float* b, float* c, i64 rows, i64 k, i64 n,
                           i64 j0, bool acc) {
  for (i64 i = 0; i < rows; ++i) {
    for (i64 j = j0; j < n; ++j) {
      float s = 0.0f;
      for (i64 p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc ? c[i * n + j] + s : s;
    }
  }
}

}  // namespace

void gemm(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  const i64 nb = n - n % 8;
  i64 i = 0;
  for (; i + 4 <= m; i += 4) {
    for (i64 j = 0; j < nb; j += 8) gemm_block_4x8(a + i * k, b + j, c + i * n + j, k, n, acc);
    if (nb < n) gemm_cols_tail(a + i * k, b, c + i * n, 4, k, n, nb, acc);
  }
  for (; i < m; ++i) {
    for (i64 j = 0; j < nb; j += 8) gemm_block_1x8(a + i * k, b + j, c + i * n + j, k, n, acc);
    if (nb < n) gemm_cols_tail(a + i * k, b, c + i * n, 1, k, n, nb, acc);
  }
}

void gemm_nt(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  const i64 kb = k - k % 4;
  for (i64 i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    for (i64 j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      float32x4_t s = vdupq_n_f32(0.0f);
      for (i64 p = 0; p < kb; p += 4)
        s = vfmaq_f32(s, vld1q_f32(arow + p), vld1q_f32(brow + p));
      float d = vaddvq_f32(s);
      for (i64 p = kb; p < k; ++p) d += arow[p] * brow[p];
      c[i * n + j] = acc ? c[i * n + j] + d : d;
    }
  }
}

void add(const float* a, const float* b, float* out, i64 n) {
  i64 i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* out, i64 n) {
  i64 i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* out, i64 n) {
  i64 i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const float* a, float c, float* out, i64 n) {
  const float32x4_t cv = vdupq_n_f32(c);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), cv));
  for (; i < n; ++i) out[i] = a[i] * c;
}

void accumulate(float* dst, const float* src, i64 n) {
  i64 i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(dst + i, vaddq_f32(vld1q_f32(dst + i), vld1q_f32(src + i)));
  for (; i < n; ++i) dst[i] += src[i];
}

void accumulate_scaled(float* dst, const float* src, float c, i64 n) {
  const float32x4_t cv = vdupq_n_f32(c);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t t = vmulq_f32(vld1q_f32(src + i), cv);
    vst1q_f32(dst + i, vaddq_f32(vld1q_f32(dst + i), t));
  }
  for (; i < n; ++i) dst[i] += src[i] * c;
}

void accumulate_mul(float* dst, const float* a, const float* b, i64 n) {
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t t = vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i));
    vst1q_f32(dst + i, vaddq_f32(vld1q_f32(dst + i), t));
  }
  for (; i < n; ++i) dst[i] += a[i] * b[i];
}

void relu(const float* x, float* out, i64 n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t xv = vld1q_f32(x + i);
    const uint32x4_t pos = vcgtq_f32(xv, zero);
    vst1q_f32(out + i, vbslq_f32(pos, xv, zero));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd(const float* x, const float* dy, float* dx, i64 n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    const uint32x4_t pos = vcgtq_f32(vld1q_f32(x + i), zero);
    const float32x4_t g = vbslq_f32(pos, vld1q_f32(dy + i), zero);
    vst1q_f32(dx + i, vaddq_f32(vld1q_f32(dx + i), g));
  }
  for (; i < n; ++i) dx[i] += x[i] > 0.0f ? dy[i] : 0.0f;
}

void lerp(float tau, const float* a, const float* b, float* out, i64 n) {
  const float om = 1.0f - tau;
  const float32x4_t tv = vdupq_n_f32(tau);
  const float32x4_t ov = vdupq_n_f32(om);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t t1 = vmulq_f32(tv, vld1q_f32(a + i));
    const float32x4_t t2 = vmulq_f32(ov, vld1q_f32(b + i));
    vst1q_f32(out + i, vaddq_f32(t1, t2));
  }
  for (; i < n; ++i) out[i] = tau * a[i] + om * b[i];
}

void adamw(float* p, const float* g, float* m, float* v, i64 n, float lr, float beta1,
           float beta2, float eps, float weight_decay, float inv_bc1, float inv_bc2) {
  const float om1 = 1.0f - beta1;
  const float om2 = 1.0f - beta2;
  const float32x4_t b1v = vdupq_n_f32(beta1);
  const float32x4_t b2v = vdupq_n_f32(beta2);
  const float32x4_t o1v = vdupq_n_f32(om1);
  const float32x4_t o2v = vdupq_n_f32(om2);
  const float32x4_t i1v = vdupq_n_f32(inv_bc1);
  const float32x4_t i2v = vdupq_n_f32(inv_bc2);
  const float32x4_t ev = vdupq_n_f32(eps);
  const float32x4_t wv = vdupq_n_f32(weight_decay);
  const float32x4_t lv = vdupq_n_f32(lr);
  i64 i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t gi = vld1q_f32(g + i);
    const float32x4_t mi = vaddq_f32(vmulq_f32(b1v, vld1q_f32(m + i)), vmulq_f32(o1v, gi));
    const float32x4_t vi =
        vaddq_f32(vmulq_f32(b2v, vld1q_f32(v + i)), vmulq_f32(o2v, vmulq_f32(gi, gi)));
    vst1q_f32(m + i, mi);
    vst1q_f32(v + i, vi);
    const float32x4_t mh = vmulq_f32(mi, i1v);
    const float32x4_t vh = vmulq_f32(vi, i2v);
    const float32x4_t den = vaddq_f32(vsqrtq_f32(vh), ev);
    const float32x4_t st = vdivq_f32(mh, den);
    const float32x4_t pi = vld1q_f32(p + i);
    const float32x4_t up = vaddq_f32(st, vmulq_f32(wv, pi));
    vst1q_f32(p + i, vsubq_f32(pi, vmulq_f32(lv, up)));
  }
  for (; i < n; ++i) {
    const float gi = g[i];
    const float mi = beta1 * m[i] + om1 * gi;
    const float vi = beta2 * v[i] + om2 * (gi * gi);
    m[i] = mi;
    v[i] = vi;
    const float mhat = mi * inv_bc1;
    const float vhat = vi * inv_bc2;
    const float denom = std::sqrt(vhat) + eps;
    const float step = mhat / denom;
    const float upd = step + weight_decay * p[i];
    p[i] = p[i] - lr * upd;
  }
}

float reduce_sum(const float* x, i64 n) {
  float32x4_t s0 = vdupq_n_f32(0.0f);
  float32x4_t s1 = vdupq_n_f32(0.0f);
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = vaddq_f32(s0, vld1q_f32(x + i));
    s1 = vaddq_f32(s1, vld1q_f32(x + i + 4));
  }
  float s = vaddvq_f32(vaddq_f32(s0, s1));
  for (; i < n; ++i) s += x[i];
  return s;
}

float reduce_sumsq(const float* x, i64 n) {
  float32x4_t s0 = vdupq_n_f32(0.0f);
  float32x4_t s1 = vdupq_n_f32(0.0f);
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    const float32x4_t a = vld1q_f32(x + i);
    const float32x4_t b = vld1q_f32(x + i + 4);
    s0 = vaddq_f32(s0, vmulq_f32(a, a));
    s1 = vaddq_f32(s1, vmulq_f32(b, b));
  }
  float s = vaddvq_f32(vaddq_f32(s0, s1));
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

float reduce_max(const float* x, i64 n) {
  float best = -std::numeric_limits<float>::infinity();
  i64 i = 0;
  if (n >= 4) {
    float32x4_t bv = vld1q_f32(x);
    for (i = 4; i + 4 <= n; i += 4) bv = vmaxq_f32(bv, vld1q_f32(x + i));
    best = vmaxvq_f32(bv);
  }
  for (; i < n; ++i)
    if (x[i] > best) best = x[i];
  return best;
}

void add_bias_rows(float* c, const float* bias, i64 m, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    float* row = c + i * n;
    i64 j = 0;
    for (; j + 4 <= n; j += 4)
      vst1q_f32(row + j, vaddq_f32(vld1q_f32(row + j), vld1q_f32(bias + j)));
    for (; j < n; ++j) row[j] += bias[j];
  }
}

void row_sum_acc(const float* dy, float* dbias, i64 m, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    const float* row = dy + i * n;
    i64 j = 0;
    for (; j + 4 <= n; j += 4)
      vst1q_f32(dbias + j, vaddq_f32(vld1q_f32(dbias + j), vld1q_f32(row + j)));
    for (; j < n; ++j) dbias[j] += row[j];
  }
}

}  // namespace bbf::kernels::detail::neon

#endif  // __aarch64__
