#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bbf/common.hpp"
#include "bbf/kernels/kernels.hpp"
#include "bbf/tensor.hpp"

// Differentiable ops over Tensor<T>. Each op runs its forward through the
// kernel layer, then (when the tape is live and an input needs gradients)
// attaches a backward closure that scatter-adds into parent grads.

namespace bbf::ops {

namespace detail {

template <typename T>
std::shared_ptr<Node<T>> fresh(Shape shape) {
  auto n = std::make_shared<Node<T>>();
  n->value.resize(static_cast<size_t>(numel(shape)));
  n->shape = std::move(shape);
  return n;
}

template <typename T>
void check_finite(const char* op, const Node<T>& n) {
  if (!FiniteCheckGuard::active()) return;
  for (size_t i = 0; i < n.value.size(); ++i)
    if (!std::isfinite(n.value[i]))
      throw NumericFault(std::string(op) + " produced non-finite value at index " +
                         std::to_string(i));
}

template <typename T>
bool tape_live(const Tensor<T>& a) {
  return !NoGradGuard::active() && a.requires_grad();
}
template <typename T>
bool tape_live(const Tensor<T>& a, const Tensor<T>& b) {
  return !NoGradGuard::active() && (a.requires_grad() || b.requires_grad());
}
template <typename T>
bool tape_live(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& c) {
  return !NoGradGuard::active() && (a.requires_grad() || b.requires_grad() || c.requires_grad());
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw_shape_error(op, a.shape(), b.shape());
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  auto out = detail::fresh<T>(a.shape());
  kernels::add(a.data(), b.data(), out->value.data(), out->size());
  detail::check_finite("add", *out);
  if (detail::tape_live(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn](Node<T>& self) {
      if (an->requires_grad) kernels::accumulate(an->grad_data(), self.grad_data(), self.size());
      if (bn->requires_grad) kernels::accumulate(bn->grad_data(), self.grad_data(), self.size());
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  auto out = detail::fresh<T>(a.shape());
  kernels::sub(a.data(), b.data(), out->value.data(), out->size());
  detail::check_finite("sub", *out);
  if (detail::tape_live(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn](Node<T>& self) {
      if (an->requires_grad) kernels::accumulate(an->grad_data(), self.grad_data(), self.size());
      if (bn->requires_grad)
        kernels::accumulate_scaled(bn->grad_data(), self.grad_data(), T(-1), self.size());
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  auto out = detail::fresh<T>(a.shape());
  kernels::mul(a.data(), b.data(), out->value.data(), out->size());
  detail::check_finite("mul", *out);
  if (detail::tape_live(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn](Node<T>& self) {
      if (an->requires_grad)
        kernels::accumulate_mul(an->grad_data(), self.grad_data(), bn->value.data(), self.size());
      if (bn->requires_grad)
        kernels::accumulate_mul(bn->grad_data(), self.grad_data(), an->value.data(), self.size());
    };
  }
  return Tensor<T>(out);
}

/// out = alpha * x + beta (scalar constants).
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T alpha, T beta) {
  auto out = detail::fresh<T>(x.shape());
  const T* src = x.data();
  for (int64_t i = 0; i < out->size(); ++i) out->value[static_cast<size_t>(i)] = alpha * src[i] + beta;
  detail::check_finite("affine", *out);
  if (detail::tape_live(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    auto xn = x.node();
    out->backward_fn = [xn, alpha](Node<T>& self) {
      kernels::accumulate_scaled(xn->grad_data(), self.grad_data(), alpha, self.size());
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  auto out = detail::fresh<T>(x.shape());
  kernels::scale(x.data(), c, out->value.data(), out->size());
  detail::check_finite("scale", *out);
  if (detail::tape_live(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    auto xn = x.node();
    out->backward_fn = [xn, c](Node<T>& self) {
      kernels::accumulate_scaled(xn->grad_data(), self.grad_data(), c, self.size());
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto out = detail::fresh<T>(x.shape());
  kernels::relu(x.data(), out->value.data(), out->size());
  detail::check_finite("relu", *out);
  if (detail::tape_live(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    auto xn = x.node();
    out->backward_fn = [xn](Node<T>& self) {
      kernels::relu_bwd(xn->value.data(), self.grad_data(), xn->grad_data(), self.size());
    };
  }
  return Tensor<T>(out);
}

// ---- shape ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) throw_shape_error("reshape", x.shape(), shape);
  auto out = detail::fresh<T>(std::move(shape));
  out->value = x.values();
  if (detail::tape_live(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    auto xn = x.node();
    out->backward_fn = [xn](Node<T>& self) {
      kernels::accumulate(xn->grad_data(), self.grad_data(), self.size());
    };
  }
  return Tensor<T>(out);
}

/// Collapses all trailing dims: [B, ...] -> [B, rest].
template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  if (x.shape().size() < 2) throw_shape_error("flatten", x.shape(), "at least 2-d input");
  return reshape(x, Shape{x.shape()[0], x.size() / x.shape()[0]});
}

// ---- matrix ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw_shape_error("matmul", a.shape(), b.shape());
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto out = detail::fresh<T>({m, n});
  kernels::gemm(a.data(), b.data(), out->value.data(), m, k, n, false);
  detail::check_finite("matmul", *out);
  if (detail::tape_live(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn, m, k, n](Node<T>& self) {
      if (an->requires_grad)  // dA += dY * B^T
        kernels::gemm_nt(self.grad_data(), bn->value.data(), an->grad_data(), m, n, k, true);
      if (bn->requires_grad) {  // dB += A^T * dY
        std::vector<T> at(static_cast<size_t>(m * k));
        kernels::transpose(an->value.data(), at.data(), m, k);
        kernels::gemm(at.data(), self.grad_data(), bn->grad_data(), k, m, n, true);
      }
    };
  }
  return Tensor<T>(out);
}

/// x[B,in] * w[out,in]^T + bias[out] -> [B,out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || x.shape()[1] != w.shape()[1])
    throw_shape_error("linear", x.shape(), w.shape());
  const int64_t batch = x.shape()[0], in = x.shape()[1], out_f = w.shape()[0];
  if (bias.shape() != Shape{out_f}) throw_shape_error("linear bias", bias.shape(), Shape{out_f});
  auto out = detail::fresh<T>({batch, out_f});
  kernels::gemm_nt(x.data(), w.data(), out->value.data(), batch, in, out_f, false);
  kernels::add_bias_rows(out->value.data(), bias.data(), batch, out_f);
  detail::check_finite("linear", *out);
  if (detail::tape_live(x, w, bias)) {
    out->requires_grad = true;
    out->parents = {x.node(), w.node(), bias.node()};
    auto xn = x.node(), wn = w.node(), bn = bias.node();
    out->backward_fn = [xn, wn, bn, batch, in, out_f](Node<T>& self) {
      if (xn->requires_grad)  // dX += dY * W
        kernels::gemm(self.grad_data(), wn->value.data(), xn->grad_data(), batch, out_f, in, true);
      if (wn->requires_grad) {  // dW += dY^T * X
        std::vector<T> dyt(static_cast<size_t>(out_f * batch));
        kernels::transpose(self.grad_data(), dyt.data(), batch, out_f);
        kernels::gemm(dyt.data(), xn->value.data(), wn->grad_data(), out_f, batch, in, true);
      }
      if (bn->requires_grad) kernels::row_sum_acc(self.grad_data(), bn->grad_data(), batch, out_f);
    };
  }
  return Tensor<T>(out);
}

// ---- convolution / pooling (NCHW) ----

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int64_t stride,
                 int64_t pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1]) throw_shape_error("conv2d", xs, ws);
  const int64_t batch = xs[0], cin = xs[1], h = xs[2], wd = xs[3];
  const int64_t cout = ws[0], kh = ws[2], kw = ws[3];
  if (bias.shape() != Shape{cout}) throw_shape_error("conv2d bias", bias.shape(), Shape{cout});
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (wd + 2 * pad - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) throw_shape_error("conv2d", xs, "kernel larger than padded input");

  const int64_t kdim = cin * kh * kw;
  const int64_t cols_n = batch * oh * ow;
  const int64_t plane = oh * ow;

  // Lowering: cols[kdim, B*oh*ow] with columns ordered (b, oy, ox), so the
  // gemm result is [cout, B*plane] and needs a block permute into NCHW.
  auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(kdim * cols_n));
  kernels::im2col(x.data(), cols->data(), batch, cin, h, wd, kh, kw, stride, pad, oh, ow);
  std::vector<T> out_mat(static_cast<size_t>(cout * cols_n));
  kernels::gemm(w.data(), cols->data(), out_mat.data(), cout, kdim, cols_n, false);

  auto out = detail::fresh<T>({batch, cout, oh, ow});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t co = 0; co < cout; ++co) {
      const T* src = out_mat.data() + co * cols_n + b * plane;
      T* dst = out->value.data() + (b * cout + co) * plane;
      const T bv = bias.data()[co];
      for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] + bv;
    }
  detail::check_finite("conv2d", *out);

  if (detail::tape_live(x, w, bias)) {
    out->requires_grad = true;
    out->parents = {x.node(), w.node(), bias.node()};
    auto xn = x.node(), wn = w.node(), bn = bias.node();
    out->backward_fn = [xn, wn, bn, cols, batch, cin, h, wd, cout, kh, kw, stride, pad, oh, ow,
                        kdim, cols_n, plane](Node<T>& self) {
      std::vector<T> dmat(static_cast<size_t>(cout * cols_n));
      for (int64_t b = 0; b < batch; ++b)
        for (int64_t co = 0; co < cout; ++co) {
          const T* src = self.grad_data() + (b * cout + co) * plane;
          T* dst = dmat.data() + co * cols_n + b * plane;
          for (int64_t i = 0; i < plane; ++i) dst[i] = src[i];
        }
      if (bn->requires_grad) {
        T* db = bn->grad_data();
        for (int64_t co = 0; co < cout; ++co)
          db[co] += kernels::reduce_sum(dmat.data() + co * cols_n, cols_n);
      }
      if (wn->requires_grad)  // dW += dOut * cols^T
        kernels::gemm_nt(dmat.data(), cols->data(), wn->grad_data(), cout, cols_n, kdim, true);
      if (xn->requires_grad) {  // dcols = W^T * dOut, scattered back
        std::vector<T> wt(static_cast<size_t>(kdim * cout));
        kernels::transpose(wn->value.data(), wt.data(), cout, kdim);
        std::vector<T> dcols(static_cast<size_t>(kdim * cols_n));
        kernels::gemm(wt.data(), dmat.data(), dcols.data(), kdim, cout, cols_n, false);
        kernels::col2im_acc(dcols.data(), xn->grad_data(), batch, cin, h, wd, kh, kw, stride,
                            pad, oh, ow);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int64_t kernel, int64_t stride, int64_t pad) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw_shape_error("maxpool2d", xs, "4-d NCHW input");
  const int64_t batch = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const int64_t oh = (h + 2 * pad - kernel) / stride + 1;
  const int64_t ow = (w + 2 * pad - kernel) / stride + 1;
  if (oh <= 0 || ow <= 0) throw_shape_error("maxpool2d", xs, "kernel larger than padded input");

  auto out = detail::fresh<T>({batch, c, oh, ow});
  auto argmax = std::make_shared<std::vector<int32_t>>(out->value.size());
  kernels::maxpool2d(x.data(), out->value.data(), argmax->data(), batch, c, h, w, kernel, stride,
                     pad, oh, ow);
  detail::check_finite("maxpool2d", *out);
  if (detail::tape_live(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    auto xn = x.node();
    const int64_t plane_in = h * w, plane_out = oh * ow, bc = batch * c;
    out->backward_fn = [xn, argmax, bc, plane_in, plane_out](Node<T>& self) {
      kernels::maxpool2d_bwd(self.grad_data(), argmax->data(), xn->grad_data(), bc, plane_in,
                             plane_out);
    };
  }
  return Tensor<T>(out);
}

// ---- rows: softmax family over the last dim ----

namespace detail {
template <typename T>
std::pair<int64_t, int64_t> row_view(const Tensor<T>& x, const char* op) {
  if (x.shape().empty()) throw_shape_error(op, x.shape(), "at least 1-d input");
  const int64_t d = x.shape().back();
  return {x.size() / d, d};
}
}  // namespace detail

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  auto [rows, d] = detail::row_view(x, "softmax_rows");
  auto out = detail::fresh<T>(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = x.data() + r * d;
    T* dst = out->value.data() + r * d;
    const T m = kernels::reduce_max(src, d);
    T s = T(0);
    for (int64_t i = 0; i < d; ++i) {
      dst[i] = std::exp(src[i] - m);
      s += dst[i];
    }
    const T inv = T(1) / s;
    for (int64_t i = 0; i < d; ++i) dst[i] *= inv;
  }
  detail::check_finite("softmax_rows", *out);
  if (detail::tape_live(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    auto xn = x.node();
    out->backward_fn = [xn, rows = rows, d = d](Node<T>& self) {
      T* dx = xn->grad_data();
      for (int64_t r = 0; r < rows; ++r) {
        const T* y = self.value.data() + r * d;
        const T* dy = self.grad_data() + r * d;
        T dot = T(0);
        for (int64_t i = 0; i < d; ++i) dot += dy[i] * y[i];
        for (int64_t i = 0; i < d; ++i) dx[r * d + i] += y[i] * (dy[i] - dot);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x) {
  auto [rows, d] = detail::row_view(x, "log_softmax_rows");
  auto out = detail::fresh<T>(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = x.data() + r * d;
    T* dst = out->value.data() + r * d;
    const T m = kernels::reduce_max(src, d);
    T s = T(0);
    for (int64_t i = 0; i < d; ++i) s += std::exp(src[i] - m);
    const T lse = std::log(s) + m;
    for (int64_t i = 0; i < d; ++i) dst[i] = src[i] - lse;
  }
  detail::check_finite("log_softmax_rows", *out);
  if (detail::tape_live(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    auto xn = x.node();
    out->backward_fn = [xn, rows = rows, d = d](Node<T>& self) {
      T* dx = xn->grad_data();
      for (int64_t r = 0; r < rows; ++r) {
        const T* lp = self.value.data() + r * d;
        const T* dy = self.grad_data() + r * d;
        T s = T(0);
        for (int64_t i = 0; i < d; ++i) s += dy[i];
        for (int64_t i = 0; i < d; ++i) dx[r * d + i] += dy[i] - std::exp(lp[i]) * s;
      }
    };
  }
  return Tensor<T>(out);
}

// ---- gathers / reductions ----

/// x[B,A,m], idx[B] -> out[B,m] = x[b, idx[b], :]
template <typename T>
Tensor<T> gather_action(const Tensor<T>& x, const std::vector<int64_t>& idx) {
  if (x.shape().size() != 3) throw_shape_error("gather_action", x.shape(), "3-d input");
  const int64_t batch = x.shape()[0], actions = x.shape()[1], m = x.shape()[2];
  if (static_cast<int64_t>(idx.size()) != batch)
    throw ShapeError("gather_action: index count " + std::to_string(idx.size()) +
                     " != batch " + std::to_string(batch));
  for (int64_t b = 0; b < batch; ++b)
    if (idx[static_cast<size_t>(b)] < 0 || idx[static_cast<size_t>(b)] >= actions)
      throw ShapeError("gather_action: index out of range");
  auto out = detail::fresh<T>({batch, m});
  for (int64_t b = 0; b < batch; ++b) {
    const T* src = x.data() + (b * actions + idx[static_cast<size_t>(b)]) * m;
    std::copy(src, src + m, out->value.data() + b * m);
  }
  if (detail::tape_live(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    auto xn = x.node();
    out->backward_fn = [xn, idx, actions, m](Node<T>& self) {
      const int64_t batch = self.shape[0];
      T* dx = xn->grad_data();
      for (int64_t b = 0; b < batch; ++b)
        kernels::accumulate(dx + (b * actions + idx[static_cast<size_t>(b)]) * m,
                            self.grad_data() + b * m, m);
    };
  }
  return Tensor<T>(out);
}

/// Dueling head merge: v[B,D], a[B,A,D] -> v + a - mean_over_actions(a).
template <typename T>
Tensor<T> dueling_combine(const Tensor<T>& v, const Tensor<T>& a) {
  if (a.shape().size() != 3) throw_shape_error("dueling_combine", a.shape(), "3-d advantages");
  const int64_t batch = a.shape()[0], actions = a.shape()[1], d = a.shape()[2];
  if (v.shape() != Shape{batch, d}) throw_shape_error("dueling_combine", v.shape(), a.shape());
  auto out = detail::fresh<T>(a.shape());
  const T inv_a = T(1) / static_cast<T>(actions);
  std::vector<T> mean(static_cast<size_t>(d));
  for (int64_t b = 0; b < batch; ++b) {
    std::fill(mean.begin(), mean.end(), T(0));
    const T* ab = a.data() + b * actions * d;
    for (int64_t act = 0; act < actions; ++act)
      for (int64_t i = 0; i < d; ++i) mean[static_cast<size_t>(i)] += ab[act * d + i];
    for (int64_t i = 0; i < d; ++i) mean[static_cast<size_t>(i)] *= inv_a;
    const T* vb = v.data() + b * d;
    T* ob = out->value.data() + b * actions * d;
    for (int64_t act = 0; act < actions; ++act)
      for (int64_t i = 0; i < d; ++i)
        ob[act * d + i] = vb[i] + ab[act * d + i] - mean[static_cast<size_t>(i)];
  }
  detail::check_finite("dueling_combine", *out);
  if (detail::tape_live(v, a)) {
    out->requires_grad = true;
    out->parents = {v.node(), a.node()};
    auto vn = v.node(), an = a.node();
    out->backward_fn = [vn, an, batch, actions, d, inv_a](Node<T>& self) {
      std::vector<T> colsum(static_cast<size_t>(d));
      for (int64_t b = 0; b < batch; ++b) {
        const T* g = self.grad_data() + b * actions * d;
        std::fill(colsum.begin(), colsum.end(), T(0));
        for (int64_t act = 0; act < actions; ++act)
          for (int64_t i = 0; i < d; ++i) colsum[static_cast<size_t>(i)] += g[act * d + i];
        if (vn->requires_grad) {
          T* dv = vn->grad_data() + b * d;
          for (int64_t i = 0; i < d; ++i) dv[i] += colsum[static_cast<size_t>(i)];
        }
        if (an->requires_grad) {
          T* da = an->grad_data() + b * actions * d;
          for (int64_t act = 0; act < actions; ++act)
            for (int64_t i = 0; i < d; ++i)
              da[act * d + i] += g[act * d + i] - inv_a * colsum[static_cast<size_t>(i)];
        }
      }
    };
  }
  return Tensor<T>(out);
}

/// Concatenate along the channel dim: [B,C1,H,W] ++ [B,C2,H,W].
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
    throw_shape_error("concat_channels", as, bs);
  const int64_t batch = as[0], c1 = as[1], c2 = bs[1], plane = as[2] * as[3];
  auto out = detail::fresh<T>({batch, c1 + c2, as[2], as[3]});
  for (int64_t i = 0; i < batch; ++i) {
    std::copy(a.data() + i * c1 * plane, a.data() + (i + 1) * c1 * plane,
              out->value.data() + i * (c1 + c2) * plane);
    std::copy(b.data() + i * c2 * plane, b.data() + (i + 1) * c2 * plane,
              out->value.data() + i * (c1 + c2) * plane + c1 * plane);
  }
  if (detail::tape_live(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn, batch, c1, c2, plane](Node<T>& self) {
      for (int64_t i = 0; i < batch; ++i) {
        const T* g = self.grad_data() + i * (c1 + c2) * plane;
        if (an->requires_grad)
          kernels::accumulate(an->grad_data() + i * c1 * plane, g, c1 * plane);
        if (bn->requires_grad)
          kernels::accumulate(bn->grad_data() + i * c2 * plane, g + c1 * plane, c2 * plane);
      }
    };
  }
  return Tensor<T>(out);
}

/// Row-wise dot over the last dim: a[...,D], b[...,D] -> [rows].
template <typename T>
Tensor<T> rows_dot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("rows_dot", a, b);
  auto [rows, d] = detail::row_view(a, "rows_dot");
  auto out = detail::fresh<T>({rows});
  for (int64_t r = 0; r < rows; ++r) {
    T s = T(0);
    const T* ar = a.data() + r * d;
    const T* br = b.data() + r * d;
    for (int64_t i = 0; i < d; ++i) s += ar[i] * br[i];
    out->value[static_cast<size_t>(r)] = s;
  }
  detail::check_finite("rows_dot", *out);
  if (detail::tape_live(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn, rows = rows, d = d](Node<T>& self) {
      for (int64_t r = 0; r < rows; ++r) {
        const T g = self.grad_data()[r];
        if (an->requires_grad)
          kernels::accumulate_scaled(an->grad_data() + r * d, bn->value.data() + r * d, g, d);
        if (bn->requires_grad)
          kernels::accumulate_scaled(bn->grad_data() + r * d, an->value.data() + r * d, g, d);
      }
    };
  }
  return Tensor<T>(out);
}

/// Row-wise dot against one shared vector: x[...,D], c[D] -> [rows].
template <typename T>
Tensor<T> expect_rows(const Tensor<T>& x, const Tensor<T>& c) {
  auto [rows, d] = detail::row_view(x, "expect_rows");
  if (c.shape() != Shape{d}) throw_shape_error("expect_rows", x.shape(), c.shape());
  auto out = detail::fresh<T>({rows});
  for (int64_t r = 0; r < rows; ++r) {
    T s = T(0);
    const T* xr = x.data() + r * d;
    for (int64_t i = 0; i < d; ++i) s += xr[i] * c.data()[i];
    out->value[static_cast<size_t>(r)] = s;
  }
  detail::check_finite("expect_rows", *out);
  if (detail::tape_live(x, c)) {
    out->requires_grad = true;
    out->parents = {x.node(), c.node()};
    auto xn = x.node(), cn = c.node();
    out->backward_fn = [xn, cn, rows = rows, d = d](Node<T>& self) {
      for (int64_t r = 0; r < rows; ++r) {
        const T g = self.grad_data()[r];
        if (xn->requires_grad)
          kernels::accumulate_scaled(xn->grad_data() + r * d, cn->value.data(), g, d);
        if (cn->requires_grad)
          kernels::accumulate_scaled(cn->grad_data(), xn->value.data() + r * d, g, d);
      }
    };
  }
  return Tensor<T>(out);
}

/// Smoothed cosine similarity per row: a[B,D], b[B,D] -> [B].
/// Norms are sqrt(sum_sq + eps) so the map stays differentiable at zero.
template <typename T>
Tensor<T> cosine_rows(const Tensor<T>& a, const Tensor<T>& b, T eps) {
  detail::require_same_shape("cosine_rows", a, b);
  auto [rows, d] = detail::row_view(a, "cosine_rows");
  auto out = detail::fresh<T>({rows});
  auto norms = std::make_shared<std::vector<T>>(static_cast<size_t>(rows * 2));
  for (int64_t r = 0; r < rows; ++r) {
    const T* ar = a.data() + r * d;
    const T* br = b.data() + r * d;
    const T na = std::sqrt(kernels::reduce_sumsq(ar, d) + eps);
    const T nb = std::sqrt(kernels::reduce_sumsq(br, d) + eps);
    T dot = T(0);
    for (int64_t i = 0; i < d; ++i) dot += ar[i] * br[i];
    (*norms)[static_cast<size_t>(2 * r)] = na;
    (*norms)[static_cast<size_t>(2 * r + 1)] = nb;
    out->value[static_cast<size_t>(r)] = dot / (na * nb);
  }
  detail::check_finite("cosine_rows", *out);
  if (detail::tape_live(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn, norms, rows = rows, d = d](Node<T>& self) {
      for (int64_t r = 0; r < rows; ++r) {
        const T g = self.grad_data()[r];
        const T cos = self.value.data()[r];
        const T na = (*norms)[static_cast<size_t>(2 * r)];
        const T nb = (*norms)[static_cast<size_t>(2 * r + 1)];
        const T* av = an->value.data() + r * d;
        const T* bv = bn->value.data() + r * d;
        if (an->requires_grad) {
          T* da = an->grad_data() + r * d;
          const T c1 = g / (na * nb), c2 = g * cos / (na * na);
          for (int64_t i = 0; i < d; ++i) da[i] += c1 * bv[i] - c2 * av[i];
        }
        if (bn->requires_grad) {
          T* db = bn->grad_data() + r * d;
          const T c1 = g / (na * nb), c2 = g * cos / (nb * nb);
          for (int64_t i = 0; i < d; ++i) db[i] += c1 * av[i] - c2 * bv[i];
        }
      }
    };
  }
  return Tensor<T>(out);
}

/// Full dot product of two equal-size tensors -> scalar.
template <typename T>
Tensor<T> vdot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("vdot", a, b);
  auto out = detail::fresh<T>({1});
  T s = T(0);
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) s += a.data()[i] * b.data()[i];
  out->value[0] = s;
  detail::check_finite("vdot", *out);
  if (detail::tape_live(a, b)) {
    out->requires_grad = true;
    out->parents = {a.node(), b.node()};
    auto an = a.node(), bn = b.node();
    out->backward_fn = [an, bn, n](Node<T>& self) {
      const T g = self.grad_data()[0];
      if (an->requires_grad)
        kernels::accumulate_scaled(an->grad_data(), bn->value.data(), g, n);
      if (bn->requires_grad)
        kernels::accumulate_scaled(bn->grad_data(), an->value.data(), g, n);
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  auto out = detail::fresh<T>({1});
  out->value[0] = kernels::reduce_sum(x.data(), x.size());
  detail::check_finite("sum_all", *out);
  if (detail::tape_live(x)) {
    out->requires_grad = true;
    out->parents = {x.node()};
    auto xn = x.node();
    out->backward_fn = [xn](Node<T>& self) {
      const T g = self.grad_data()[0];
      T* dx = xn->grad_data();
      for (int64_t i = 0; i < xn->size(); ++i) dx[i] += g;
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return scale(sum_all(x), T(1) / static_cast<T>(x.size()));
}

// ---- host-side helpers (no tape) ----

/// Per-row argmax over the last dim.
template <typename T>
std::vector<int64_t> argmax_rows(const Tensor<T>& x) {
  auto [rows, d] = detail::row_view(x, "argmax_rows");
  std::vector<int64_t> out(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = x.data() + r * d;
    int64_t best = 0;
    for (int64_t i = 1; i < d; ++i)
      if (src[i] > src[best]) best = i;
    out[static_cast<size_t>(r)] = best;
  }
  return out;
}

}  // namespace bbf::ops
