#include <cmath>
#include <immintrin.h>
#include <limits>

#include "kernels_detail.hpp"

#if defined(__x86_64__) || defined(_M_X64)

// AVX2 lane. Elementwise kernels replay the scalar lane's operation sequence
// with 8-wide registers (no FMA, so results are bit-identical); the gemm
// kernels accumulate with FMA and differ from scalar only by rounding.

namespace bbf::kernels::detail::avx2 {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
  return _mm_cvtss_f32(s);
}

// 4x16 block of C = A*B (+C). a at the block's first row (stride k), b at the
// block's first column (stride n), c at the block origin (stride n).
inline void gemm_block_4x16(const float* a, const float* b, float* c, i64 k, i64 n, bool acc) {
  __m256 c00, c01, c10, c11, c20, c21, c30, c31;
  if (acc) {
    c00 = _mm256_loadu_ps(c + 0 * n);
    c01 = _mm256_loadu_ps(c + 0 * n + 8);
    c10 = _mm256_loadu_ps(c + 1 * n);
    c11 = _mm256_loadu_ps(c + 1 * n + 8);
    c20 = _mm256_loadu_ps(c + 2 * n);
    c21 = _mm256_loadu_ps(c + 2 * n + 8);
    c30 = _mm256_loadu_ps(c + 3 * n);
    c31 = _mm256_loadu_ps(c + 3 * n + 8);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_ps();
  }
  for (i64 p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * n);
    const __m256 b1 = _mm256_loadu_ps(b + p * n + 8);
    __m256 av = _mm256_broadcast_ss(a + p);
    c00 = _mm256_fmadd_ps(av, b0, c00);
    c01 = _mm256_fmadd_ps(av, b1, c01);
    av = _mm256_broadcast_ss(a + k + p);
    c10 = _mm256_fmadd_ps(av, b0, c10);
    c11 = _mm256_fmadd_ps(av, b1, c11);
    av = _mm256_broadcast_ss(a + 2 * k + p);
    c20 = _mm256_fmadd_ps(av, b0, c20);
    c21 = _mm256_fmadd_ps(av, b1, c21);
    av = _mm256_broadcast_ss(a + 3 * k + p);
    c30 = _mm256_fmadd_ps(av, b0, c30);
    c31 = _mm256_fmadd_ps(av, b1, c31);
  }
  _mm256_storeu_ps(c + 0 * n, c00);
  _mm256_storeu_ps(c + 0 * n + 8, c01);
  _mm256_storeu_ps(c + 1 * n, c10);
  _mm256_storeu_ps(c + 1 * n + 8, c11);
  _mm256_storeu_ps(c + 2 * n, c20);
  _mm256_storeu_ps(c + 2 * n + 8, c21);
  _mm256_storeu_ps(c + 3 * n, c30);
  _mm256_storeu_ps(c + 3 * n + 8, c31);
}

inline void gemm_block_1x16(const float* a, const float* b, float* c, i64 k, i64 n, bool acc) {
  __m256 c0, c1;
  if (acc) {
    c0 = _mm256_loadu_ps(c);
    c1 = _mm256_loadu_ps(c + 8);
  } else {
    c0 = c1 = _mm256_setzero_ps();
  }
  for (i64 p = 0; p < k; ++p) {
    const __m256 av = _mm256_broadcast_ss(a + p);
    c0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b + p * n), c0);
    c1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b + p * n + 8), c1);
  }
  _mm256_storeu_ps(c, c0);
  _mm256_storeu_ps(c + 8, c1);
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
  const i64 nb = n - n % 16;
  i64 i = 0;
  for (; i + 4 <= m; i += 4) {
    for (i64 j = 0; j < nb; j += 16)
      gemm_block_4x16(a + i * k, b + j, c + i * n + j, k, n, acc);
    if (nb < n) gemm_cols_tail(a + i * k, b, c + i * n, 4, k, n, nb, acc);
  }
  for (; i < m; ++i) {
    for (i64 j = 0; j < nb; j += 16)
      gemm_block_1x16(a + i * k, b + j, c + i * n + j, k, n, acc);
    if (nb < n) gemm_cols_tail(a + i * k, b, c + i * n, 1, k, n, nb, acc);
  }
}

void gemm_nt(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  const i64 kb = k - k % 8;
  for (i64 i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    i64 j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256 s0 = _mm256_setzero_ps();
      __m256 s1 = _mm256_setzero_ps();
      __m256 s2 = _mm256_setzero_ps();
      __m256 s3 = _mm256_setzero_ps();
      const float* b0 = b + j * k;
      const float* b1 = b0 + k;
      const float* b2 = b1 + k;
      const float* b3 = b2 + k;
      for (i64 p = 0; p < kb; p += 8) {
        const __m256 av = _mm256_loadu_ps(arow + p);
        s0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), s0);
        s1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), s1);
        s2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), s2);
        s3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), s3);
      }
      float d0 = hsum(s0), d1 = hsum(s1), d2 = hsum(s2), d3 = hsum(s3);
      for (i64 p = kb; p < k; ++p) {
        const float av = arow[p];
        d0 += av * b0[p];
        d1 += av * b1[p];
        d2 += av * b2[p];
        d3 += av * b3[p];
      }
      float* crow = c + i * n + j;
      if (acc) {
        crow[0] += d0;
        crow[1] += d1;
        crow[2] += d2;
        crow[3] += d3;
      } else {
        crow[0] = d0;
        crow[1] = d1;
        crow[2] = d2;
        crow[3] = d3;
      }
    }
    for (; j < n; ++j) {
      const float* brow = b + j * k;
      __m256 s = _mm256_setzero_ps();
      for (i64 p = 0; p < kb; p += 8)
        s = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), s);
      float d = hsum(s);
      for (i64 p = kb; p < k; ++p) d += arow[p] * brow[p];
      c[i * n + j] = acc ? c[i * n + j] + d : d;
    }
  }
}

void add(const float* a, const float* b, float* out, i64 n) {
  i64 i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* out, i64 n) {
  i64 i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* out, i64 n) {
  i64 i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const float* a, float c, float* out, i64 n) {
  const __m256 cv = _mm256_set1_ps(c);
  i64 i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), cv));
  for (; i < n; ++i) out[i] = a[i] * c;
}

void accumulate(float* dst, const float* src, i64 n) {
  i64 i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(dst + i), _mm256_loadu_ps(src + i)));
  for (; i < n; ++i) dst[i] += src[i];
}

void accumulate_scaled(float* dst, const float* src, float c, i64 n) {
  const __m256 cv = _mm256_set1_ps(c);
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 t = _mm256_mul_ps(_mm256_loadu_ps(src + i), cv);
    _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(dst + i), t));
  }
  for (; i < n; ++i) dst[i] += src[i] * c;
}

void accumulate_mul(float* dst, const float* a, const float* b, i64 n) {
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 t = _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(dst + i), t));
  }
  for (; i < n; ++i) dst[i] += a[i] * b[i];
}

void relu(const float* x, float* out, i64 n) {
  const __m256 zero = _mm256_setzero_ps();
  i64 i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd(const float* x, const float* dy, float* dx, i64 n) {
  const __m256 zero = _mm256_setzero_ps();
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
    _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), g));
  }
  for (; i < n; ++i) dx[i] += x[i] > 0.0f ? dy[i] : 0.0f;
}

void lerp(float tau, const float* a, const float* b, float* out, i64 n) {
  const float om = 1.0f - tau;
  const __m256 tv = _mm256_set1_ps(tau);
  const __m256 ov = _mm256_set1_ps(om);
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 t1 = _mm256_mul_ps(tv, _mm256_loadu_ps(a + i));
    const __m256 t2 = _mm256_mul_ps(ov, _mm256_loadu_ps(b + i));
    _mm256_storeu_ps(out + i, _mm256_add_ps(t1, t2));
  }
  for (; i < n; ++i) out[i] = tau * a[i] + om * b[i];
}

void adamw(float* p, const float* g, float* m, float* v, i64 n, float lr, float beta1,
           float beta2, float eps, float weight_decay, float inv_bc1, float inv_bc2) {
  const float om1 = 1.0f - beta1;
  const float om2 = 1.0f - beta2;
  const __m256 b1v = _mm256_set1_ps(beta1);
  const __m256 b2v = _mm256_set1_ps(beta2);
  const __m256 o1v = _mm256_set1_ps(om1);
  const __m256 o2v = _mm256_set1_ps(om2);
  const __m256 i1v = _mm256_set1_ps(inv_bc1);
  const __m256 i2v = _mm256_set1_ps(inv_bc2);
  const __m256 ev = _mm256_set1_ps(eps);
  const __m256 wv = _mm256_set1_ps(weight_decay);
  const __m256 lv = _mm256_set1_ps(lr);
  i64 i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gi = _mm256_loadu_ps(g + i);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1v, _mm256_loadu_ps(m + i)),
                                    _mm256_mul_ps(o1v, gi));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2v, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(o2v, _mm256_mul_ps(gi, gi)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 mh = _mm256_mul_ps(mi, i1v);
    const __m256 vh = _mm256_mul_ps(vi, i2v);
    const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vh), ev);
    const __m256 st = _mm256_div_ps(mh, den);
    const __m256 pi = _mm256_loadu_ps(p + i);
    const __m256 up = _mm256_add_ps(st, _mm256_mul_ps(wv, pi));
    _mm256_storeu_ps(p + i, _mm256_sub_ps(pi, _mm256_mul_ps(lv, up)));
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
  __m256 s0 = _mm256_setzero_ps();
  __m256 s1 = _mm256_setzero_ps();
  i64 i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_add_ps(s0, _mm256_loadu_ps(x + i));
    s1 = _mm256_add_ps(s1, _mm256_loadu_ps(x + i + 8));
  }
  float s = hsum(_mm256_add_ps(s0, s1));
  for (; i < n; ++i) s += x[i];
  return s;
}

float reduce_sumsq(const float* x, i64 n) {
  __m256 s0 = _mm256_setzero_ps();
  __m256 s1 = _mm256_setzero_ps();
  i64 i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m256 a = _mm256_loadu_ps(x + i);
    const __m256 b = _mm256_loadu_ps(x + i + 8);
    s0 = _mm256_add_ps(s0, _mm256_mul_ps(a, a));
    s1 = _mm256_add_ps(s1, _mm256_mul_ps(b, b));
  }
  float s = hsum(_mm256_add_ps(s0, s1));
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

float reduce_max(const float* x, i64 n) {
  float best = -std::numeric_limits<float>::infinity();
  i64 i = 0;
  if (n >= 8) {
    __m256 bv = _mm256_loadu_ps(x);
    for (i = 8; i + 8 <= n; i += 8) bv = _mm256_max_ps(bv, _mm256_loadu_ps(x + i));
    __m128 lo = _mm_max_ps(_mm256_castps256_ps128(bv), _mm256_extractf128_ps(bv, 1));
    lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    best = _mm_cvtss_f32(lo);
  }
  for (; i < n; ++i)
    if (x[i] > best) best = x[i];
  return best;
}

void add_bias_rows(float* c, const float* bias, i64 m, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    float* row = c + i * n;
    i64 j = 0;
    for (; j + 8 <= n; j += 8)
      _mm256_storeu_ps(row + j, _mm256_add_ps(_mm256_loadu_ps(row + j), _mm256_loadu_ps(bias + j)));
    for (; j < n; ++j) row[j] += bias[j];
  }
}

void row_sum_acc(const float* dy, float* dbias, i64 m, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    const float* row = dy + i * n;
    i64 j = 0;
    for (; j + 8 <= n; j += 8)
      _mm256_storeu_ps(dbias + j,
                       _mm256_add_ps(_mm256_loadu_ps(dbias + j), _mm256_loadu_ps(row + j)));
    for (; j < n; ++j) dbias[j] += row[j];
  }
}

}  // namespace bbf::kernels::detail::avx2

#endif  // x86_64
