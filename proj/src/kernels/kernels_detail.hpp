#pragma once

#include <cstdint>

// Per-lane kernel entry points. Only the dispatcher in dispatch.cpp should
// call these; everything else goes through bbf/kernels/kernels.hpp.
//
// Contract: every elementwise lane computes bit-identical results to the
// scalar lane (same operation order, no fused multiply-add). The gemm lanes
// may reassociate the K-loop and use FMA, so they agree with scalar only to
// rounding tolerance.

namespace bbf::kernels::detail {

using i64 = int64_t;

#define BBF_KERNEL_LANE_DECLS                                                                  \
  void gemm(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc);          \
  void gemm_nt(const float* a, const float* b, float* c, i64 m, i64 k, i64 n, bool acc);       \
  void add(const float* a, const float* b, float* out, i64 n);                                 \
  void sub(const float* a, const float* b, float* out, i64 n);                                 \
  void mul(const float* a, const float* b, float* out, i64 n);                                 \
  void scale(const float* a, float c, float* out, i64 n);                                      \
  void accumulate(float* dst, const float* src, i64 n);                                        \
  void accumulate_scaled(float* dst, const float* src, float c, i64 n);                        \
  void accumulate_mul(float* dst, const float* a, const float* b, i64 n);                      \
  void relu(const float* x, float* out, i64 n);                                                \
  void relu_bwd(const float* x, const float* dy, float* dx, i64 n);                            \
  void lerp(float tau, const float* a, const float* b, float* out, i64 n);                     \
  void adamw(float* p, const float* g, float* m, float* v, i64 n, float lr, float beta1,       \
             float beta2, float eps, float weight_decay, float inv_bc1, float inv_bc2);        \
  float reduce_sum(const float* x, i64 n);                                                     \
  float reduce_sumsq(const float* x, i64 n);                                                   \
  float reduce_max(const float* x, i64 n);                                                     \
  void add_bias_rows(float* c, const float* bias, i64 m, i64 n);                               \
  void row_sum_acc(const float* dy, float* dbias, i64 m, i64 n);

namespace scalar {
BBF_KERNEL_LANE_DECLS
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
BBF_KERNEL_LANE_DECLS
}  // namespace avx2
namespace avx512 {
BBF_KERNEL_LANE_DECLS
}  // namespace avx512
#endif

#if defined(__aarch64__)
namespace neon {
BBF_KERNEL_LANE_DECLS
}  // namespace neon
#endif

#undef BBF_KERNEL_LANE_DECLS

}  // namespace bbf::kernels::detail
