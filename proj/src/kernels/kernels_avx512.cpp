#include <cmath>
#include <immintrin.h>
#include <limits>

#include "kernels_detail.hpp"

#if defined(__x86_64__) || defined(_M_X64)

// AVX-512F lane. Same contract as the AVX2 lane: elementwise kernels are
// bit-identical to scalar (masked tails, no FMA), gemm kernels use FMA and
// match scalar to rounding tolerance. Sticks to AVX512F instructions only.

namespace bbf::kernels::detail::avx512 {
namespace {

inline __mmask16 tail_mask(i64 remaining) {
  return remaining >= 16 ? static_cast<__mmask16>(0xFFFF)
                         : static_cast<__mmask16>((1u << remaining) - 1u);
}

// 4x32 block of C = A*B (+C); a at block row 0 (stride k), b at block column 0
// (stride n), c at block origin (stride n).
inline void gemm_block_4x32(const float* a, const float* b, float* c, i64 k, i64 n, bool acc) {
  __m512 c00, c01, c10, c11, c20, c21, c30, c31;
  if (acc) {
    c00 = _mm512_loadu_ps(c + 0 * n);
    c01 = _mm512_loadu_ps(c + 0 * n + 16);
    c10 = _mm512_loadu_ps(c + 1 * n);
    c11 = _mm512_loadu_ps(c + 1 * n + 16);
    c20 = _mm512_loadu_ps(c + 2 * n);
    c21 = _mm512_loadu_ps(c + 2 * n + 16);
    c30 = _mm512_loadu_ps(c + 3 * n);
    c31 = _mm512_loadu_ps(c + 3 * n + 16);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm512_setzero_ps();
  }
  for (i64 p = 0; p < k; ++p) {
    const __m512 b0 = _mm512_loadu_ps(b + p * n);
    const __m512 b1 = _mm512_loadu_ps(b + p * n + 16);
    __m512 av = _mm512_set1_ps(a[p]);
    c00 = _mm512_fmadd_ps(av, b0, c00);
    c01 = _mm512_fmadd_ps(av, b1, c01);
    av = _mm512_set1_ps(a[k + p]);
    c10 = _mm512_fmadd_ps(av, b0, c10);
    c11 = _mm512_fmadd_ps(av, b1, c11);
    av = _mm512_set1_ps(a[2 * k + p]);
    c20 = _mm512_fmadd_ps(av, b0, c20);
    c21 = _mm512_fmadd_ps(av, b1, c21);
    av = _mm512_set1_ps(a[3 * k + p]);
    c30 = _mm512_fmadd_ps(av, b0, c30);
    c31 = _mm512_fmadd_ps(av, b1, c31);
  }
  _mm512_storeu_ps(c + 0 * n, c00);
  _mm512_storeu_ps(c + 0 * n + 16, c01);
  _mm512_storeu_ps(c + 1 * n, c10);
  _mm512_storeu_ps(c + 1 * n + 16, c11);
  _mm512_storeu_ps(c + 2 * n, c20);
  _mm512_storeu_ps(c + 2 * n + 16, c21);
  _mm512_storeu_ps(c + 3 * n, c30);
  _mm512_storeu_ps(c + 3 * n + 16, c31);
}

inline void gemm_block_1x32(const float* a, const float* b, float* c, i64 k, i64 n, bool acc) {
  __m512 c0, c1;
  if (acc) {
    c0 = _mm512_loadu_ps(c);
    c1 = _mm512_loadu_ps(c + 16);
  } else {
    c0 = c1 = _mm512_setzero_ps();
  }
  for (i64 p = 0; p < k; ++p) {
    const __m512 av = _mm512_set1_ps(a[p]);
    c0 = _mm512_fmadd_ps(av, _mm512_loadu_ps(b + p * n), c0);
    c1 = _mm512_fmadd_ps(av, _mm512_loadu_ps(b + p * n + 16), c1);
  }
  _mm512_storeu_ps(c, c0);
  _mm512_storeu_ps(c + 16, c1);
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
  const i64 nb = n - n % 32;
  i64 i = 0;
  for (; i + 4 <= m; i += 4) {
    for (i64 j = 0; j < nb; j += 32)
      gemm_block_4x32(a + i * k, b + j, c + i * n + j, k, n, acc);
    if (nb < n) gemm_cols_tail(a + i * k, b, c + i * n, 4, k, n, nb, acc);
  }
  for (; i < m; ++i) {
    for (i64 j = 0; j < nb; j += 32)
      gemm_block_1x32(a + i * k, b + j, c + i * n + j, k, n, acc);
    if (nb < n) gemm_cols_tail(a + i * k, b, c + i * n, 1, k, n, nb, acc);
  }
}

void gemm_nt(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  const i64 kb = k - k % 16;
  for (i64 i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    i64 j = 0;
    for (; j + 4 <= n; j += 4) {
      __m512 s0 = _mm512_setzero_ps();
      __m512 s1 = _mm512_setzero_ps();
      __m512 s2 = _mm512_setzero_ps();
      __m512 s3 = _mm512_setzero_ps();
      const float* b0 = b + j * k;
      const float* b1 = b0 + k;
      const float* b2 = b1 + k;
      const float* b3 = b2 + k;
      for (i64 p = 0; p < kb; p += 16) {
        const __m512 av = _mm512_loadu_ps(arow + p);
        s0 = _mm512_fmadd_ps(av, _mm512_loadu_ps(b0 + p), s0);
        s1 = _mm512_fmadd_ps(av, _mm512_loadu_ps(b1 + p), s1);
        s2 = _mm512_fmadd_ps(av, _mm512_loadu_ps(b2 + p), s2);
        s3 = _mm512_fmadd_ps(av, _mm512_loadu_ps(b3 + p), s3);
      }
      float d0 = _mm512_reduce_add_ps(s0);
      float d1 = _mm512_reduce_add_ps(s1);
      float d2 = _mm512_reduce_add_ps(s2);
      float d3 = _mm512_reduce_add_ps(s3);
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
      __m512 s = _mm512_setzero_ps();
      for (i64 p = 0; p < kb; p += 16)
        s = _mm512_fmadd_ps(_mm512_loadu_ps(arow + p), _mm512_loadu_ps(brow + p), s);
      float d = _mm512_reduce_add_ps(s);
      for (i64 p = kb; p < k; ++p) d += arow[p] * brow[p];
      c[i * n + j] = acc ? c[i * n + j] + d : d;
    }
  }
}

void add(const float* a, const float* b, float* out, i64 n) {
  for (i64 i = 0; i < n; i += 16) {
    const __mmask16 mk = tail_mask(n - i);
    _mm512_mask_storeu_ps(out + i, mk,
                          _mm512_add_ps(_mm512_maskz_loadu_ps(mk, a + i),
                                        _mm512_maskz_loadu_ps(mk, b + i)));
  }
}

void sub(const float* a, const float* b, float* out, i64 n) {
  for (i64 i = 0; i < n; i += 16) {
    const __mmask16 mk = tail_mask(n - i);
    _mm512_mask_storeu_ps(out + i, mk,
                          _mm512_sub_ps(_mm512_maskz_loadu_ps(mk, a + i),
                                        _mm512_maskz_loadu_ps(mk, b + i)));
  }
}

void mul(const float* a, const float* b, float* out, i64 n) {
  for (i64 i = 0; i < n; i += 16) {
    const __mmask16 mk = tail_mask(n - i);
    _mm512_mask_storeu_ps(out + i, mk,
                          _mm512_mul_ps(_mm512_maskz_loadu_ps(mk, a + i),
                                        _mm512_maskz_loadu_ps(mk, b + i)));
  }
}

void scale(const float* a, float c, float* out, i64 n) {
  const __m512 cv = _mm512_set1_ps(c);
  for (i64 i = 0; i < n; i += 16) {
    const __mmask16 mk = tail_mask(n - i);
    _mm512_mask_storeu_ps(out + i, mk, _mm512_mul_ps(_mm512_maskz_loadu_ps(mk, a + i), cv));
  }
}

void accumulate(float* dst, const float* src, i64 n) {
  for (i64 i = 0; i < n; i += 16) {
    const __mmask16 mk = tail_mask(n - i);
    _mm512_mask_storeu_ps(dst + i, mk,
                          _mm512_add_ps(_mm512_maskz_loadu_ps(mk, dst + i),
                                        _mm512_maskz_loadu_ps(mk, src + i)));
  }
}

void accumulate_scaled(float* dst, const float* src, float c, i64 n) {
  const __m512 cv = _mm512_set1_ps(c);
  for (i64 i = 0; i < n; i += 16) {
    const __mmask16 mk = tail_mask(n - i);
    const __m512 t = _mm512_mul_ps(_mm512_maskz_loadu_ps(mk, src + i), cv);
    _mm512_mask_storeu_ps(dst + i, mk, _mm512_add_ps(_mm512_maskz_loadu_ps(mk, dst + i), t));
  }
}

void accumulate_mul(float* dst, const float* a, const float* b, i64 n) {
  for (i64 i = 0; i < n; i += 16) {
    const __mmask16 mk = tail_mask(n - i);
    const __m512 t = _mm512_mul_ps(_mm512_maskz_loadu_ps(mk, a + i),
                                   _mm512_maskz_loadu_ps(mk, b + i));
    _mm512_mask_storeu_ps(dst + i, mk, _mm512_add_ps(_mm512_maskz_loadu_ps(mk, dst + i), t));
  }
}

void relu(const float* x, float* out, i64 n) {
  const __m512 zero = _mm512_setzero_ps();
  for (i64 i = 0; i < n; i += 16) {
    const __mmask16 mk = tail_mask(n - i);
    _mm512_mask_storeu_ps(out + i, mk, _mm512_max_ps(_mm512_maskz_loadu_ps(mk, x + i), zero));
  }
}

void relu_bwd(const float* x, const float* dy, float* dx, i64 n) {
  const __m512 zero = _mm512_setzero_ps();
  for (i64 i = 0; i < n; i += 16) {
    const __mmask16 mk = tail_mask(n - i);
    const __mmask16 pos =
        _mm512_cmp_ps_mask(_mm512_maskz_loadu_ps(mk, x + i), zero, _CMP_GT_OQ);
    const __m512 g = _mm512_maskz_loadu_ps(pos & mk, dy + i);
    _mm512_mask_storeu_ps(dx + i, mk, _mm512_add_ps(_mm512_maskz_loadu_ps(mk, dx + i), g));
  }
}

void lerp(float tau, const float* a, const float* b, float* out, i64 n) {
  const float om = 1.0f - tau;
  const __m512 tv = _mm512_set1_ps(tau);
  const __m512 ov = _mm512_set1_ps(om);
  for (i64 i = 0; i < n; i += 16) {
    const __mmask16 mk = tail_mask(n - i);
    const __m512 t1 = _mm512_mul_ps(tv, _mm512_maskz_loadu_ps(mk, a + i));
    const __m512 t2 = _mm512_mul_ps(ov, _mm512_maskz_loadu_ps(mk, b + i));
    _mm512_mask_storeu_ps(out + i, mk, _mm512_add_ps(t1, t2));
  }
}

void adamw(float* p, const float* g, float* m, float* v, i64 n, float lr, float beta1,
           float beta2, float eps, float weight_decay, float inv_bc1, float inv_bc2) {
  const __m512 b1v = _mm512_set1_ps(beta1);
  const __m512 b2v = _mm512_set1_ps(beta2);
  const __m512 o1v = _mm512_set1_ps(1.0f - beta1);
  const __m512 o2v = _mm512_set1_ps(1.0f - beta2);
  const __m512 i1v = _mm512_set1_ps(inv_bc1);
  const __m512 i2v = _mm512_set1_ps(inv_bc2);
  const __m512 ev = _mm512_set1_ps(eps);
  const __m512 wv = _mm512_set1_ps(weight_decay);
  const __m512 lv = _mm512_set1_ps(lr);
  for (i64 i = 0; i < n; i += 16) {
    const __mmask16 mk = tail_mask(n - i);
    const __m512 gi = _mm512_maskz_loadu_ps(mk, g + i);
    const __m512 mi =
        _mm512_add_ps(_mm512_mul_ps(b1v, _mm512_maskz_loadu_ps(mk, m + i)), _mm512_mul_ps(o1v, gi));
    const __m512 vi = _mm512_add_ps(_mm512_mul_ps(b2v, _mm512_maskz_loadu_ps(mk, v + i)),
                                    _mm512_mul_ps(o2v, _mm512_mul_ps(gi, gi)));
    _mm512_mask_storeu_ps(m + i, mk, mi);
    _mm512_mask_storeu_ps(v + i, mk, vi);
    const __m512 mh = _mm512_mul_ps(mi, i1v);
    const __m512 vh = _mm512_mul_ps(vi, i2v);
    const __m512 den = _mm512_add_ps(_mm512_sqrt_ps(vh), ev);
    const __m512 st = _mm512_div_ps(mh, den);
    const __m512 pi = _mm512_maskz_loadu_ps(mk, p + i);
    const __m512 up = _mm512_add_ps(st, _mm512_mul_ps(wv, pi));
    _mm512_mask_storeu_ps(p + i, mk, _mm512_sub_ps(pi, _mm512_mul_ps(lv, up)));
  }
}

float reduce_sum(const float* x, i64 n) {
  __m512 s0 = _mm512_setzero_ps();
  __m512 s1 = _mm512_setzero_ps();
  i64 i = 0;
  for (; i + 32 <= n; i += 32) {
    s0 = _mm512_add_ps(s0, _mm512_loadu_ps(x + i));
    s1 = _mm512_add_ps(s1, _mm512_loadu_ps(x + i + 16));
  }
  float s = _mm512_reduce_add_ps(_mm512_add_ps(s0, s1));
  for (; i < n; ++i) s += x[i];
  return s;
}

float reduce_sumsq(const float* x, i64 n) {
  __m512 s0 = _mm512_setzero_ps();
  __m512 s1 = _mm512_setzero_ps();
  i64 i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m512 a = _mm512_loadu_ps(x + i);
    const __m512 b = _mm512_loadu_ps(x + i + 16);
    s0 = _mm512_add_ps(s0, _mm512_mul_ps(a, a));
    s1 = _mm512_add_ps(s1, _mm512_mul_ps(b, b));
  }
  float s = _mm512_reduce_add_ps(_mm512_add_ps(s0, s1));
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

float reduce_max(const float* x, i64 n) {
  float best = -std::numeric_limits<float>::infinity();
  i64 i = 0;
  if (n >= 16) {
    __m512 bv = _mm512_loadu_ps(x);
    for (i = 16; i + 16 <= n; i += 16) bv = _mm512_max_ps(bv, _mm512_loadu_ps(x + i));
    best = _mm512_reduce_max_ps(bv);
  }
  for (; i < n; ++i)
    if (x[i] > best) best = x[i];
  return best;
}

void add_bias_rows(float* c, const float* bias, i64 m, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    float* row = c + i * n;
    for (i64 j = 0; j < n; j += 16) {
      const __mmask16 mk = tail_mask(n - j);
      _mm512_mask_storeu_ps(row + j, mk,
                            _mm512_add_ps(_mm512_maskz_loadu_ps(mk, row + j),
                                          _mm512_maskz_loadu_ps(mk, bias + j)));
    }
  }
}

void row_sum_acc(const float* dy, float* dbias, i64 m, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    const float* row = dy + i * n;
    for (i64 j = 0; j < n; j += 16) {
      const __mmask16 mk = tail_mask(n - j);
      _mm512_mask_storeu_ps(dbias + j, mk,
                            _mm512_add_ps(_mm512_maskz_loadu_ps(mk, dbias + j),
                                          _mm512_maskz_loadu_ps(mk, row + j)));
    }
  }
}

}  // namespace bbf::kernels::detail::avx512

#endif  // x86_64
