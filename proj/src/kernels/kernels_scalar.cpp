#include <cmath>
#include <cstring>

#include "bbf/kernels/kernels.hpp"
#include "kernels_detail.hpp"

// Scalar reference lane. Compiled with -ffp-contract=off so no multiply-add
// pairs fuse; the SIMD elementwise lanes replay the exact same operation
// sequence and must match these results bit for bit.

namespace bbf::kernels::detail {
namespace {

template <typename T>
void gemm_t(const T* a, const T* b, T* c, i64 m, i64 k, i64 n, bool acc) {
  // i-k-j axpy form: each C row accumulates rank-1 contributions in a fixed
  // k order, which keeps the result independent of compiler vectorization.
  for (i64 i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!acc) {
      for (i64 j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (i64 p = 0; p < k; ++p) {
      const T aik = a[i * k + p];
      const T* brow = b + p * n;
      for (i64 j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

template <typename T>
void gemm_nt_t(const T* a, const T* b, T* c, i64 m, i64 k, i64 n, bool acc) {
  for (i64 i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (i64 j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s = T(0);
      for (i64 p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] = acc ? c[i * n + j] + s : s;
    }
  }
}

template <typename T>
void add_t(const T* a, const T* b, T* out, i64 n) {
  for (i64 i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub_t(const T* a, const T* b, T* out, i64 n) {
  for (i64 i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul_t(const T* a, const T* b, T* out, i64 n) {
  for (i64 i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale_t(const T* a, T c, T* out, i64 n) {
  for (i64 i = 0; i < n; ++i) out[i] = a[i] * c;
}

template <typename T>
void accumulate_t(T* dst, const T* src, i64 n) {
  for (i64 i = 0; i < n; ++i) dst[i] += src[i];
}

template <typename T>
void accumulate_scaled_t(T* dst, const T* src, T c, i64 n) {
  for (i64 i = 0; i < n; ++i) dst[i] += src[i] * c;
}

template <typename T>
void accumulate_mul_t(T* dst, const T* a, const T* b, i64 n) {
  for (i64 i = 0; i < n; ++i) dst[i] += a[i] * b[i];
}

template <typename T>
void relu_t(const T* x, T* out, i64 n) {
  for (i64 i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd_t(const T* x, const T* dy, T* dx, i64 n) {
  for (i64 i = 0; i < n; ++i) dx[i] += x[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
void lerp_t(T tau, const T* a, const T* b, T* out, i64 n) {
  // out = tau*a + (1-tau)*b, evaluated exactly in this form.
  const T one_minus = T(1) - tau;
  for (i64 i = 0; i < n; ++i) out[i] = tau * a[i] + one_minus * b[i];
}

template <typename T>
void adamw_t(T* p, const T* g, T* m, T* v, i64 n, T lr, T beta1, T beta2, T eps,
             T weight_decay, T inv_bc1, T inv_bc2) {
  const T om1 = T(1) - beta1;
  const T om2 = T(1) - beta2;
  for (i64 i = 0; i < n; ++i) {
    const T gi = g[i];
    const T mi = beta1 * m[i] + om1 * gi;
    const T vi = beta2 * v[i] + om2 * (gi * gi);
    m[i] = mi;
    v[i] = vi;
    const T mhat = mi * inv_bc1;
    const T vhat = vi * inv_bc2;
    const T denom = std::sqrt(vhat) + eps;
    const T step = mhat / denom;
    const T upd = step + weight_decay * p[i];
    p[i] = p[i] - lr * upd;
  }
}

template <typename T>
T reduce_sum_t(const T* x, i64 n) {
  T s = T(0);
  for (i64 i = 0; i < n; ++i) s += x[i];
  return s;
}

template <typename T>
T reduce_sumsq_t(const T* x, i64 n) {
  T s = T(0);
  for (i64 i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

template <typename T>
T reduce_max_t(const T* x, i64 n) {
  T best = -std::numeric_limits<T>::infinity();
  for (i64 i = 0; i < n; ++i)
    if (x[i] > best) best = x[i];
  return best;
}

template <typename T>
void add_bias_rows_t(T* c, const T* bias, i64 m, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    T* row = c + i * n;
    for (i64 j = 0; j < n; ++j) row[j] += bias[j];
  }
}

template <typename T>
void row_sum_acc_t(const T* dy, T* dbias, i64 m, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    const T* row = dy + i * n;
    for (i64 j = 0; j < n; ++j) dbias[j] += row[j];
  }
}

}  // namespace

namespace scalar {

void gemm(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  gemm_t(a, b, c, m, k, n, acc);
}
void gemm_nt(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  gemm_nt_t(a, b, c, m, k, n, acc);
}
void add(const float* a, const float* b, float* out, i64 n) { add_t(a, b, out, n); }
void sub(const float* a, const float* b, float* out, i64 n) { sub_t(a, b, out, n); }
void mul(const float* a, const float* b, float* out, i64 n) { mul_t(a, b, out, n); }
void scale(const float* a, float c, float* out, i64 n) { scale_t(a, c, out, n); }
void accumulate(float* dst, const float* src, i64 n) { accumulate_t(dst, src, n); }
void accumulate_scaled(float* dst, const float* src, float c, i64 n) {
  accumulate_scaled_t(dst, src, c, n);
}
void accumulate_mul(float* dst, const float* a, const float* b, i64 n) {
  accumulate_mul_t(dst, a, b, n);
}
void relu(const float* x, float* out, i64 n) { relu_t(x, out, n); }
void relu_bwd(const float* x, const float* dy, float* dx, i64 n) { relu_bwd_t(x, dy, dx, n); }
void lerp(float tau, const float* a, const float* b, float* out, i64 n) {
  lerp_t(tau, a, b, out, n);
}
void adamw(float* p, const float* g, float* m, float* v, i64 n, float lr, float beta1,
           float beta2, float eps, float weight_decay, float inv_bc1, float inv_bc2) {
  adamw_t(p, g, m, v, n, lr, beta1, beta2, eps, weight_decay, inv_bc1, inv_bc2);
}
float reduce_sum(const float* x, i64 n) { return reduce_sum_t(x, n); }
float reduce_sumsq(const float* x, i64 n) { return reduce_sumsq_t(x, n); }
float reduce_max(const float* x, i64 n) { return reduce_max_t(x, n); }
void add_bias_rows(float* c, const float* bias, i64 m, i64 n) { add_bias_rows_t(c, bias, m, n); }
void row_sum_acc(const float* dy, float* dbias, i64 m, i64 n) { row_sum_acc_t(dy, dbias, m, n); }

}  // namespace scalar
}  // namespace bbf::kernels::detail

namespace bbf::kernels {

// Double entry points: gradient-check oracles need 64-bit precision, not
// throughput, so they bypass dispatch and use the reference lane directly.

void gemm(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc) {
  detail::gemm_t(a, b, c, m, k, n, acc);
}
void gemm_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n, bool acc) {
  detail::gemm_nt_t(a, b, c, m, k, n, acc);
}
void add(const double* a, const double* b, double* out, i64 n) { detail::add_t(a, b, out, n); }
void sub(const double* a, const double* b, double* out, i64 n) { detail::sub_t(a, b, out, n); }
void mul(const double* a, const double* b, double* out, i64 n) { detail::mul_t(a, b, out, n); }
void scale(const double* a, double c, double* out, i64 n) { detail::scale_t(a, c, out, n); }
void accumulate(double* dst, const double* src, i64 n) { detail::accumulate_t(dst, src, n); }
void accumulate_scaled(double* dst, const double* src, double c, i64 n) {
  detail::accumulate_scaled_t(dst, src, c, n);
}
void accumulate_mul(double* dst, const double* a, const double* b, i64 n) {
  detail::accumulate_mul_t(dst, a, b, n);
}
void relu(const double* x, double* out, i64 n) { detail::relu_t(x, out, n); }
void relu_bwd(const double* x, const double* dy, double* dx, i64 n) {
  detail::relu_bwd_t(x, dy, dx, n);
}
void lerp(double tau, const double* a, const double* b, double* out, i64 n) {
  detail::lerp_t(tau, a, b, out, n);
}
void adamw(double* p, const double* g, double* m, double* v, i64 n, double lr, double beta1,
           double beta2, double eps, double weight_decay, double inv_bc1, double inv_bc2) {
  detail::adamw_t(p, g, m, v, n, lr, beta1, beta2, eps, weight_decay, inv_bc1, inv_bc2);
}
double reduce_sum(const double* x, i64 n) { return detail::reduce_sum_t(x, n); }
double reduce_sumsq(const double* x, i64 n) { return detail::reduce_sumsq_t(x, n); }
double reduce_max(const double* x, i64 n) { return detail::reduce_max_t(x, n); }
void add_bias_rows(double* c, const double* bias, i64 m, i64 n) {
  detail::add_bias_rows_t(c, bias, m, n);
}
void row_sum_acc(const double* dy, double* dbias, i64 m, i64 n) {
  detail::row_sum_acc_t(dy, dbias, m, n);
}

}  // namespace bbf::kernels
