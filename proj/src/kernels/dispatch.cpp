#include "bbf/kernels/backend.hpp"
#include "bbf/kernels/kernels.hpp"
#include "kernels_detail.hpp"

// Float kernel entry points: route each call to the selected lane. The lane
// is read per call so tests can flip backends between invocations.

namespace bbf::kernels {
namespace {

#if defined(__x86_64__) || defined(_M_X64)
#define BBF_DISPATCH(call)              \
  switch (active_backend()) {           \
    case Backend::avx512:               \
      return detail::avx512::call;      \
    case Backend::avx2:                 \
      return detail::avx2::call;        \
    default:                            \
      return detail::scalar::call;      \
  }
#elif defined(__aarch64__)
#define BBF_DISPATCH(call)              \
  switch (active_backend()) {           \
    case Backend::neon:                 \
      return detail::neon::call;        \
    default:                            \
      return detail::scalar::call;      \
  }
#else
#define BBF_DISPATCH(call) return detail::scalar::call;
#endif

}  // namespace

void gemm(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  BBF_DISPATCH(gemm(a, b, c, m, k, n, acc))
}
void gemm_nt(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc) {
  BBF_DISPATCH(gemm_nt(a, b, c, m, k, n, acc))
}
void add(const float* a, const float* b, float* out, i64 n) { BBF_DISPATCH(add(a, b, out, n)) }
void sub(const float* a, const float* b, float* out, i64 n) { BBF_DISPATCH(sub(a, b, out, n)) }
void mul(const float* a, const float* b, float* out, i64 n) { BBF_DISPATCH(mul(a, b, out, n)) }
void scale(const float* a, float c, float* out, i64 n) { BBF_DISPATCH(scale(a, c, out, n)) }
void accumulate(float* dst, const float* src, i64 n) { BBF_DISPATCH(accumulate(dst, src, n)) }
void accumulate_scaled(float* dst, const float* src, float c, i64 n) {
  BBF_DISPATCH(accumulate_scaled(dst, src, c, n))
}
void accumulate_mul(float* dst, const float* a, const float* b, i64 n) {
  BBF_DISPATCH(accumulate_mul(dst, a, b, n))
}
void relu(const float* x, float* out, i64 n) { BBF_DISPATCH(relu(x, out, n)) }
void relu_bwd(const float* x, const float* dy, float* dx, i64 n) {
  BBF_DISPATCH(relu_bwd(x, dy, dx, n))
}
void lerp(float tau, const float* a, const float* b, float* out, i64 n) {
  BBF_DISPATCH(lerp(tau, a, b, out, n))
}
void adamw(float* p, const float* g, float* m, float* v, i64 n, float lr, float beta1,
           float beta2, float eps, float weight_decay, float inv_bc1, float inv_bc2) {
  BBF_DISPATCH(adamw(p, g, m, v, n, lr, beta1, beta2, eps, weight_decay, inv_bc1, inv_bc2))
}
float reduce_sum(const float* x, i64 n) { BBF_DISPATCH(reduce_sum(x, n)) }
float reduce_sumsq(const float* x, i64 n) { BBF_DISPATCH(reduce_sumsq(x, n)) }
float reduce_max(const float* x, i64 n) { BBF_DISPATCH(reduce_max(x, n)) }
void add_bias_rows(float* c, const float* bias, i64 m, i64 n) {
  BBF_DISPATCH(add_bias_rows(c, bias, m, n))
}
void row_sum_acc(const float* dy, float* dbias, i64 m, i64 n) {
  BBF_DISPATCH(row_sum_acc(dy, dbias, m, n))
}

#undef BBF_DISPATCH

}  // namespace bbf::kernels
