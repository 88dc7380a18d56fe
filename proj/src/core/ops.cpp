#include "uhal/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <string>

#include "uhal/core/error.hpp"
#include "uhal/core/linalg.hpp"
#include "uhal/core/parallel.hpp"
#include "uhal/simd/kernels.hpp"

namespace uhal::core {

template <typename T>
void matmul(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const auto& kt = simd::kernels<T>();
  parallel_for(m, 64, [&](std::size_t r0, std::size_t r1) {
    kt.gemm_nn(r1 - r0, n, k, a + r0 * k, k, b, n, c + r0 * n, n, accumulate);
  });
}

template <typename T>
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const auto& kt = simd::kernels<T>();
  parallel_for(m, 8, [&](std::size_t r0, std::size_t r1) {
    kt.gemm_tn(r1 - r0, n, k, a + r0, m, b, n, c + r0 * n, n, accumulate);
  });
}

template <typename T>
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t kk = 0; kk < k; ++kk) bt[kk * n + j] = b[j * k + kk];
  }
  matmul(m, n, k, a, bt.data(), c, accumulate);
}

template void matmul<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void matmul<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void matmul_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void matmul_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*,
                                bool);
template void matmul_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void matmul_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*,
                                bool);

namespace ops {
namespace {

[[noreturn]] void fail(OpKind kind, const std::string& msg) {
  throw ShapeError(std::string(op_name(kind)) + ": " + msg);
}

void require_rank(OpKind kind, const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    fail(kind, std::string(what) + " must have rank " + std::to_string(rank) + ", got " + shape_str(s));
  }
}

// Leading dims flattened into rows, last axis as columns.
struct RowView {
  std::size_t rows;
  std::size_t cols;
};

RowView rows_of(const Shape& s) {
  const std::size_t cols = s.back();
  return {numel(s) / cols, cols};
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src, T alpha = T(1)) {
  simd::kernels<T>().axpy(dst.size(), alpha, src.ptr(), dst.ptr());
}

// Column-wise sum of a rows x cols buffer into out (accumulating).
template <typename T>
void sum_rows_into(const T* src, std::size_t rows, std::size_t cols, T* out) {
  const auto& kt = simd::kernels<T>();
  for (std::size_t r = 0; r < rows; ++r) kt.axpy(cols, T(1), src + r * cols, out);
}

template <typename T>
std::shared_ptr<std::vector<T>> im2col(const Tensor<T>& x, std::size_t kh, std::size_t kw, std::size_t stride,
                                       std::size_t pad, std::size_t ho, std::size_t wo) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t cols = kh * kw * c;
  auto col = std::make_shared<std::vector<T>>(ho * wo * cols, T(0));
  parallel_for(ho, 8, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t oy = r0; oy < r1; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        T* dst = col->data() + (oy * wo + ox) * cols;
        for (std::size_t i = 0; i < kh; ++i) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + i) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + j) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            std::memcpy(dst + (i * kw + j) * c, x.ptr() + (iy * w + ix) * c, c * sizeof(T));
          }
        }
      }
    }
  });
  return col;
}

// Scatter-add of column gradients back into the image gradient. Parallel over
// input rows; each input row gathers its contributions in a fixed order.
template <typename T>
void col2im(const T* dcol, Tensor<T>& dx, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
            std::size_t ho, std::size_t wo) {
  const std::size_t h = dx.dim(0), w = dx.dim(1), c = dx.dim(2);
  const std::size_t cols = kh * kw * c;
  const auto& kt = simd::kernels<T>();
  parallel_for(h, 4, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t iy = r0; iy < r1; ++iy) {
      for (std::size_t i = 0; i < kh; ++i) {
        const std::ptrdiff_t num = static_cast<std::ptrdiff_t>(iy + pad) - static_cast<std::ptrdiff_t>(i);
        if (num < 0 || num % static_cast<std::ptrdiff_t>(stride) != 0) continue;
        const std::size_t oy = static_cast<std::size_t>(num) / stride;
        if (oy >= ho) continue;
        for (std::size_t ox = 0; ox < wo; ++ox) {
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + j) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            kt.axpy(c, T(1), dcol + (oy * wo + ox) * cols + (i * kw + j) * c, dx.ptr() + (iy * w + ix) * c);
          }
        }
      }
    }
  });
}

}  // namespace

template <typename T>
NodeId conv2d(Graph<T>& g, NodeId x, NodeId weight, std::optional<NodeId> bias, Conv2dAttrs attrs) {
  constexpr OpKind kind = OpKind::Conv2d;
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& wv = g.value(weight);
  require_rank(kind, xv.shape(), 3, "input");
  require_rank(kind, wv.shape(), 4, "weight");
  const std::size_t h = xv.dim(0), w = xv.dim(1), cin = xv.dim(2);
  const std::size_t kh = wv.dim(0), kw = wv.dim(1), cout = wv.dim(3);
  if (wv.dim(2) != cin) {
    fail(kind, "weight expects " + std::to_string(wv.dim(2)) + " input channels, input has " + std::to_string(cin));
  }
  if (attrs.stride == 0) fail(kind, "stride must be positive");
  if (h + 2 * attrs.padding < kh || w + 2 * attrs.padding < kw) {
    fail(kind, "kernel " + std::to_string(kh) + "x" + std::to_string(kw) + " larger than padded input " +
                   shape_str(xv.shape()));
  }
  if (bias && g.value(*bias).size() != cout) {
    fail(kind, "bias has " + std::to_string(g.value(*bias).size()) + " entries, expected " + std::to_string(cout));
  }
  const std::size_t ho = (h + 2 * attrs.padding - kh) / attrs.stride + 1;
  const std::size_t wo = (w + 2 * attrs.padding - kw) / attrs.stride + 1;
  const std::size_t cols = kh * kw * cin;
  const bool pointwise = kh == 1 && kw == 1 && attrs.stride == 1 && attrs.padding == 0;

  std::shared_ptr<std::vector<T>> col;
  const T* colp = xv.ptr();
  if (!pointwise) {
    col = im2col(xv, kh, kw, attrs.stride, attrs.padding, ho, wo);
    colp = col->data();
  }
  Tensor<T> out({ho, wo, cout});
  if (bias) {
    const T* bp = g.value(*bias).ptr();
    for (std::size_t p = 0; p < ho * wo; ++p) std::memcpy(out.ptr() + p * cout, bp, cout * sizeof(T));
  }
  matmul(ho * wo, cout, cols, colp, wv.ptr(), out.ptr(), bias.has_value());

  std::vector<NodeId> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return g.record(kind, inputs, std::move(out),
                  [=](Graph<T>& gr, NodeId self) {
                    const Tensor<T>& dy = gr.grad(self);
                    const T* cp = pointwise ? gr.value(x).ptr() : col->data();
                    if (gr.requires_grad(weight)) {
                      matmul_tn(cols, cout, ho * wo, cp, dy.ptr(), gr.grad_buffer(weight).ptr(), true);
                    }
                    if (bias && gr.requires_grad(*bias)) {
                      sum_rows_into(dy.ptr(), ho * wo, cout, gr.grad_buffer(*bias).ptr());
                    }
                    if (gr.requires_grad(x)) {
                      Tensor<T>& dx = gr.grad_buffer(x);
                      if (pointwise) {
                        matmul_nt(ho * wo, cols, cout, dy.ptr(), gr.value(weight).ptr(), dx.ptr(), true);
                      } else {
                        std::vector<T> dcol(ho * wo * cols);
                        matmul_nt(ho * wo, cols, cout, dy.ptr(), gr.value(weight).ptr(), dcol.data(), false);
                        col2im(dcol.data(), dx, kh, kw, attrs.stride, attrs.padding, ho, wo);
                      }
                    }
                  });
}

template <typename T>
NodeId depthwise_conv2d(Graph<T>& g, NodeId x, NodeId weight, std::optional<NodeId> bias, std::size_t padding) {
  constexpr OpKind kind = OpKind::DepthwiseConv2d;
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& wv = g.value(weight);
  require_rank(kind, xv.shape(), 3, "input");
  require_rank(kind, wv.shape(), 3, "weight");
  const std::size_t h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
  const std::size_t kh = wv.dim(0), kw = wv.dim(1);
  if (wv.dim(2) != c) {
    fail(kind, "weight has " + std::to_string(wv.dim(2)) + " channels, input has " + std::to_string(c));
  }
  if (h + 2 * padding < kh || w + 2 * padding < kw) fail(kind, "kernel larger than padded input");
  if (bias && g.value(*bias).size() != c) fail(kind, "bias must have one entry per channel");
  const std::size_t ho = h + 2 * padding - kh + 1;
  const std::size_t wo = w + 2 * padding - kw + 1;
  const auto pad = static_cast<std::ptrdiff_t>(padding);

  Tensor<T> out({ho, wo, c});
  const auto& kt = simd::kernels<T>();
  parallel_for(ho, 4, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t oy = r0; oy < r1; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        T* dst = out.ptr() + (oy * wo + ox) * c;
        if (bias) std::memcpy(dst, g.value(*bias).ptr(), c * sizeof(T));
        for (std::size_t i = 0; i < kh; ++i) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + i) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + j) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            kt.mul_acc(c, wv.ptr() + (i * kw + j) * c, xv.ptr() + (iy * w + ix) * c, dst);
          }
        }
      }
    }
  });

  std::vector<NodeId> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return g.record(kind, inputs, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    const Tensor<T>& xin = gr.value(x);
    const Tensor<T>& wt = gr.value(weight);
    const auto& k = simd::kernels<T>();
    if (bias && gr.requires_grad(*bias)) sum_rows_into(dy.ptr(), ho * wo, c, gr.grad_buffer(*bias).ptr());
    if (gr.requires_grad(weight)) {
      Tensor<T>& dw = gr.grad_buffer(weight);
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const T* g0 = dy.ptr() + (oy * wo + ox) * c;
          for (std::size_t i = 0; i < kh; ++i) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + i) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t j = 0; j < kw; ++j) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + j) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              k.mul_acc(c, g0, xin.ptr() + (iy * w + ix) * c, dw.ptr() + (i * kw + j) * c);
            }
          }
        }
      }
    }
    if (gr.requires_grad(x)) {
      Tensor<T>& dx = gr.grad_buffer(x);
      parallel_for(h, 4, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t iy = r0; iy < r1; ++iy) {
          for (std::size_t ix = 0; ix < w; ++ix) {
            T* dst = dx.ptr() + (iy * w + ix) * c;
            for (std::size_t i = 0; i < kh; ++i) {
              const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy) + pad - static_cast<std::ptrdiff_t>(i);
              if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(ho)) continue;
              for (std::size_t j = 0; j < kw; ++j) {
                const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(ix) + pad - static_cast<std::ptrdiff_t>(j);
                if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(wo)) continue;
                k.mul_acc(c, wt.ptr() + (i * kw + j) * c, dy.ptr() + (oy * wo + ox) * c, dst);
              }
            }
          }
        }
      });
    }
  });
}

template <typename T>
NodeId linear(Graph<T>& g, NodeId x, NodeId weight, std::optional<NodeId> bias) {
  constexpr OpKind kind = OpKind::Linear;
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& wv = g.value(weight);
  require_rank(kind, wv.shape(), 2, "weight");
  const auto [rows, din] = rows_of(xv.shape());
  if (wv.dim(0) != din) {
    fail(kind, "input feature dim " + std::to_string(din) + " does not match weight " + shape_str(wv.shape()));
  }
  const std::size_t dout = wv.dim(1);
  if (bias && g.value(*bias).size() != dout) {
    fail(kind, "bias has " + std::to_string(g.value(*bias).size()) + " entries, expected " + std::to_string(dout));
  }
  Shape oshape = xv.shape();
  oshape.back() = dout;
  Tensor<T> out(oshape);
  if (bias) {
    const T* bp = g.value(*bias).ptr();
    for (std::size_t r = 0; r < rows; ++r) std::memcpy(out.ptr() + r * dout, bp, dout * sizeof(T));
  }
  matmul(rows, dout, din, xv.ptr(), wv.ptr(), out.ptr(), bias.has_value());

  std::vector<NodeId> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return g.record(kind, inputs, std::move(out), [=, rows = rows, din = din](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    if (gr.requires_grad(weight)) {
      matmul_tn(din, dout, rows, gr.value(x).ptr(), dy.ptr(), gr.grad_buffer(weight).ptr(), true);
    }
    if (bias && gr.requires_grad(*bias)) sum_rows_into(dy.ptr(), rows, dout, gr.grad_buffer(*bias).ptr());
    if (gr.requires_grad(x)) {
      matmul_nt(rows, din, dout, dy.ptr(), gr.value(weight).ptr(), gr.grad_buffer(x).ptr(), true);
    }
  });
}

template <typename T>
NodeId relu(Graph<T>& g, NodeId x) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out(xv.shape());
  simd::kernels<T>().relu(xv.size(), xv.ptr(), out.ptr());
  return g.record(OpKind::Relu, {x}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    simd::kernels<T>().relu_backward(dy.size(), gr.value(x).ptr(), dy.ptr(), gr.grad_buffer(x).ptr());
  });
}

template <typename T>
NodeId sine(Graph<T>& g, NodeId x, T omega) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::sin(omega * xv[i]);
  return g.record(OpKind::Sine, {x}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    const Tensor<T>& xin = gr.value(x);
    Tensor<T>& dx = gr.grad_buffer(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += omega * std::cos(omega * xin[i]) * dy[i];
  });
}

namespace {
template <typename T>
void require_same(OpKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) fail(kind, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
}  // namespace

template <typename T>
NodeId add(Graph<T>& g, NodeId a, NodeId b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  require_same(OpKind::Add, av, bv);
  Tensor<T> out = av;
  add_into(out, bv);
  return g.record(OpKind::Add, {a, b}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    if (gr.requires_grad(a)) add_into(gr.grad_buffer(a), dy);
    if (gr.requires_grad(b)) add_into(gr.grad_buffer(b), dy);
  });
}

template <typename T>
NodeId sub(Graph<T>& g, NodeId a, NodeId b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  require_same(OpKind::Sub, av, bv);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return g.record(OpKind::Sub, {a, b}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    if (gr.requires_grad(a)) add_into(gr.grad_buffer(a), dy);
    if (gr.requires_grad(b)) add_into(gr.grad_buffer(b), dy, T(-1));
  });
}

template <typename T>
NodeId mul(Graph<T>& g, NodeId a, NodeId b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  require_same(OpKind::Mul, av, bv);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return g.record(OpKind::Mul, {a, b}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    const auto& k = simd::kernels<T>();
    if (gr.requires_grad(a)) k.mul_acc(dy.size(), dy.ptr(), gr.value(b).ptr(), gr.grad_buffer(a).ptr());
    if (gr.requires_grad(b)) k.mul_acc(dy.size(), dy.ptr(), gr.value(a).ptr(), gr.grad_buffer(b).ptr());
  });
}

template <typename T>
NodeId scale(Graph<T>& g, NodeId x, T factor) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * xv[i];
  return g.record(OpKind::Scale, {x}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    add_into(gr.grad_buffer(x), gr.grad(self), factor);
  });
}

template <typename T>
NodeId simple_gate(Graph<T>& g, NodeId x) {
  const Tensor<T>& xv = g.value(x);
  const auto [rows, cols] = rows_of(xv.shape());
  if (cols % 2 != 0) fail(OpKind::SimpleGate, "channel count " + std::to_string(cols) + " is odd");
  const std::size_t half = cols / 2;
  Shape oshape = xv.shape();
  oshape.back() = half;
  Tensor<T> out(oshape);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = xv.ptr() + r * cols;
    T* dst = out.ptr() + r * half;
    for (std::size_t c = 0; c < half; ++c) dst[c] = src[c] * src[c + half];
  }
  return g.record(OpKind::SimpleGate, {x}, std::move(out), [=, rows = rows, cols = cols](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    const Tensor<T>& xin = gr.value(x);
    Tensor<T>& dx = gr.grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = xin.ptr() + r * cols;
      const T* gy = dy.ptr() + r * half;
      T* gx = dx.ptr() + r * cols;
      for (std::size_t c = 0; c < half; ++c) {
        gx[c] += gy[c] * src[c + half];
        gx[c + half] += gy[c] * src[c];
      }
    }
  });
}

template <typename T>
NodeId layer_norm(Graph<T>& g, NodeId x, NodeId gamma, NodeId beta, T eps) {
  constexpr OpKind kind = OpKind::LayerNorm;
  const Tensor<T>& xv = g.value(x);
  const auto [rows, cols] = rows_of(xv.shape());
  if (g.value(gamma).size() != cols || g.value(beta).size() != cols) {
    fail(kind, "affine parameters must have " + std::to_string(cols) + " entries");
  }
  auto xhat = std::make_shared<std::vector<T>>(rows * cols);
  auto rstd = std::make_shared<std::vector<T>>(rows);
  Tensor<T> out(xv.shape());
  const T* gp = g.value(gamma).ptr();
  const T* bp = g.value(beta).ptr();
  parallel_for(rows, 256, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const T* src = xv.ptr() + r * cols;
      T mu = 0;
      for (std::size_t c = 0; c < cols; ++c) mu += src[c];
      mu /= T(cols);
      T var = 0;
      for (std::size_t c = 0; c < cols; ++c) var += (src[c] - mu) * (src[c] - mu);
      var /= T(cols);
      const T rs = T(1) / std::sqrt(var + eps);
      (*rstd)[r] = rs;
      T* xh = xhat->data() + r * cols;
      T* dst = out.ptr() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) {
        xh[c] = (src[c] - mu) * rs;
        dst[c] = xh[c] * gp[c] + bp[c];
      }
    }
  });
  return g.record(kind, {x, gamma, beta}, std::move(out), [=, rows = rows, cols = cols](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    const T* gam = gr.value(gamma).ptr();
    if (gr.requires_grad(gamma) || gr.requires_grad(beta)) {
      Tensor<T>& dg = gr.grad_buffer(gamma);
      Tensor<T>& db = gr.grad_buffer(beta);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gy = dy.ptr() + r * cols;
        const T* xh = xhat->data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
          dg[c] += gy[c] * xh[c];
          db[c] += gy[c];
        }
      }
    }
    if (gr.requires_grad(x)) {
      Tensor<T>& dx = gr.grad_buffer(x);
      parallel_for(rows, 256, [&](std::size_t r0, std::size_t r1) {
        std::vector<T> dxh(cols);
        for (std::size_t r = r0; r < r1; ++r) {
          const T* gy = dy.ptr() + r * cols;
          const T* xh = xhat->data() + r * cols;
          T s1 = 0, s2 = 0;
          for (std::size_t c = 0; c < cols; ++c) {
            dxh[c] = gy[c] * gam[c];
            s1 += dxh[c];
            s2 += dxh[c] * xh[c];
          }
          const T rs = (*rstd)[r] / T(cols);
          T* gx = dx.ptr() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) gx[c] += rs * (T(cols) * dxh[c] - s1 - xh[c] * s2);
        }
      });
    }
  });
}

template <typename T>
NodeId channel_norm(Graph<T>& g, NodeId x, NodeId gamma, NodeId beta, T eps) {
  constexpr OpKind kind = OpKind::ChannelNorm;
  const Tensor<T>& xv = g.value(x);
  const auto [rows, cols] = rows_of(xv.shape());
  if (g.value(gamma).size() != cols || g.value(beta).size() != cols) {
    fail(kind, "affine parameters must have " + std::to_string(cols) + " entries");
  }
  std::vector<T> mu(cols, T(0)), var(cols, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) mu[c] += xv[r * cols + c];
  }
  for (auto& m : mu) m /= T(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const T d = xv[r * cols + c] - mu[c];
      var[c] += d * d;
    }
  }
  auto rstd = std::make_shared<std::vector<T>>(cols);
  for (std::size_t c = 0; c < cols; ++c) (*rstd)[c] = T(1) / std::sqrt(var[c] / T(rows) + eps);
  auto xhat = std::make_shared<std::vector<T>>(rows * cols);
  Tensor<T> out(xv.shape());
  const T* gp = g.value(gamma).ptr();
  const T* bp = g.value(beta).ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      (*xhat)[i] = (xv[i] - mu[c]) * (*rstd)[c];
      out[i] = (*xhat)[i] * gp[c] + bp[c];
    }
  }
  return g.record(kind, {x, gamma, beta}, std::move(out), [=, rows = rows, cols = cols](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    const T* gam = gr.value(gamma).ptr();
    std::vector<T> s1(cols, T(0)), s2(cols, T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        s1[c] += dy[i];
        s2[c] += dy[i] * (*xhat)[i];
      }
    }
    if (gr.requires_grad(gamma) || gr.requires_grad(beta)) {
      Tensor<T>& dg = gr.grad_buffer(gamma);
      Tensor<T>& db = gr.grad_buffer(beta);
      for (std::size_t c = 0; c < cols; ++c) {
        dg[c] += s2[c];
        db[c] += s1[c];
      }
    }
    if (gr.requires_grad(x)) {
      Tensor<T>& dx = gr.grad_buffer(x);
      const T n = T(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          dx[i] += gam[c] * (*rstd)[c] / n * (n * dy[i] - s1[c] - (*xhat)[i] * s2[c]);
        }
      }
    }
  });
}

template <typename T>
NodeId global_avg_pool(Graph<T>& g, NodeId x) {
  const Tensor<T>& xv = g.value(x);
  require_rank(OpKind::GlobalAvgPool, xv.shape(), 3, "input");
  const std::size_t pixels = xv.dim(0) * xv.dim(1), c = xv.dim(2);
  Tensor<T> out({1, 1, c});
  sum_rows_into(xv.ptr(), pixels, c, out.ptr());
  for (std::size_t i = 0; i < c; ++i) out[i] /= T(pixels);
  return g.record(OpKind::GlobalAvgPool, {x}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad_buffer(x);
    const T inv = T(1) / T(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t i = 0; i < c; ++i) dx[p * c + i] += dy[i] * inv;
    }
  });
}

template <typename T>
NodeId channel_scale(Graph<T>& g, NodeId x, NodeId s) {
  const Tensor<T>& xv = g.value(x);
  const auto [rows, cols] = rows_of(xv.shape());
  if (g.value(s).size() != cols) {
    fail(OpKind::ChannelScale, "scale has " + std::to_string(g.value(s).size()) + " entries, input has " +
                                   std::to_string(cols) + " channels");
  }
  Tensor<T> out(xv.shape());
  const T* sp = g.value(s).ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] * sp[c];
  }
  return g.record(OpKind::ChannelScale, {x, s}, std::move(out), [=, rows = rows, cols = cols](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    const auto& k = simd::kernels<T>();
    if (gr.requires_grad(s)) {
      Tensor<T>& ds = gr.grad_buffer(s);
      const T* xp = gr.value(x).ptr();
      for (std::size_t r = 0; r < rows; ++r) k.mul_acc(cols, dy.ptr() + r * cols, xp + r * cols, ds.ptr());
    }
    if (gr.requires_grad(x)) {
      Tensor<T>& dx = gr.grad_buffer(x);
      const T* scp = gr.value(s).ptr();
      for (std::size_t r = 0; r < rows; ++r) k.mul_acc(cols, dy.ptr() + r * cols, scp, dx.ptr() + r * cols);
    }
  });
}

template <typename T>
NodeId pixel_shuffle(Graph<T>& g, NodeId x, std::size_t factor) {
  constexpr OpKind kind = OpKind::PixelShuffle;
  const Tensor<T>& xv = g.value(x);
  require_rank(kind, xv.shape(), 3, "input");
  const std::size_t r2 = factor * factor;
  if (factor == 0 || xv.dim(2) % r2 != 0) {
    fail(kind, "channels " + std::to_string(xv.dim(2)) + " not divisible by factor^2 = " + std::to_string(r2));
  }
  const std::size_t h = xv.dim(0), w = xv.dim(1), c = xv.dim(2) / r2;
  Tensor<T> out({h * factor, w * factor, c});
  auto map = [=](std::size_t y, std::size_t xx, std::size_t ch, std::size_t i, std::size_t j, std::size_t& src,
                 std::size_t& dst) {
    src = (y * w + xx) * c * r2 + ch * r2 + i * factor + j;
    dst = ((y * factor + i) * w * factor + xx * factor + j) * c + ch;
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < factor; ++i)
          for (std::size_t j = 0; j < factor; ++j) {
            std::size_t s, d;
            map(y, xx, ch, i, j, s, d);
            out[d] = xv[s];
          }
  return g.record(kind, {x}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad_buffer(x);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < factor; ++i)
            for (std::size_t j = 0; j < factor; ++j) {
              std::size_t s, d;
              map(y, xx, ch, i, j, s, d);
              dx[s] += dy[d];
            }
  });
}

template <typename T>
NodeId concat_channels(Graph<T>& g, const std::vector<NodeId>& parts) {
  constexpr OpKind kind = OpKind::Concat;
  if (parts.empty()) fail(kind, "needs at least one input");
  Shape lead = g.value(parts[0]).shape();
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (NodeId p : parts) {
    Shape s = g.value(p).shape();
    const std::size_t cw = s.back();
    s.pop_back();
    if (s != lead) fail(kind, "leading dims differ: " + shape_str(g.value(p).shape()) + " vs " + shape_str(g.value(parts[0]).shape()));
    widths.push_back(cw);
    total += cw;
  }
  const std::size_t rows = numel(lead);
  Shape oshape = lead;
  oshape.push_back(total);
  Tensor<T> out(oshape);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* src = g.value(parts[k]).ptr();
    for (std::size_t r = 0; r < rows; ++r) std::memcpy(out.ptr() + r * total + off, src + r * widths[k], widths[k] * sizeof(T));
    off += widths[k];
  }
  return g.record(kind, parts, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    std::size_t o = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (gr.requires_grad(parts[k])) {
        Tensor<T>& dx = gr.grad_buffer(parts[k]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[k]; ++c) dx[r * widths[k] + c] += dy[r * total + o + c];
        }
      }
      o += widths[k];
    }
  });
}

template <typename T>
NodeId pad_spatial(Graph<T>& g, NodeId x, std::size_t bottom, std::size_t right) {
  const Tensor<T>& xv = g.value(x);
  require_rank(OpKind::PadSpatial, xv.shape(), 3, "input");
  const std::size_t h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
  const std::size_t wo = w + right;
  Tensor<T> out({h + bottom, wo, c});
  for (std::size_t y = 0; y < h; ++y) std::memcpy(out.ptr() + y * wo * c, xv.ptr() + y * w * c, w * c * sizeof(T));
  return g.record(OpKind::PadSpatial, {x}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad_buffer(x);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t i = 0; i < w * c; ++i) dx[y * w * c + i] += dy[y * wo * c + i];
    }
  });
}

template <typename T>
NodeId crop_spatial(Graph<T>& g, NodeId x, std::size_t height, std::size_t width) {
  const Tensor<T>& xv = g.value(x);
  require_rank(OpKind::CropSpatial, xv.shape(), 3, "input");
  const std::size_t w = xv.dim(1), c = xv.dim(2);
  if (height > xv.dim(0) || width > w || height == 0 || width == 0) {
    fail(OpKind::CropSpatial, "crop " + std::to_string(height) + "x" + std::to_string(width) + " outside input " +
                                  shape_str(xv.shape()));
  }
  Tensor<T> out({height, width, c});
  for (std::size_t y = 0; y < height; ++y) {
    std::memcpy(out.ptr() + y * width * c, xv.ptr() + y * w * c, width * c * sizeof(T));
  }
  return g.record(OpKind::CropSpatial, {x}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad_buffer(x);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t i = 0; i < width * c; ++i) dx[y * w * c + i] += dy[y * width * c + i];
    }
  });
}

template <typename T>
NodeId gather_rows(Graph<T>& g, NodeId x, const std::vector<std::uint32_t>& rows) {
  const Tensor<T>& xv = g.value(x);
  const auto [n, d] = rows_of(xv.shape());
  if (rows.empty()) fail(OpKind::GatherRows, "empty row selection");
  for (auto r : rows) {
    if (r >= n) fail(OpKind::GatherRows, "row " + std::to_string(r) + " out of range for " + std::to_string(n) + " rows");
  }
  Tensor<T> out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) std::memcpy(out.ptr() + i * d, xv.ptr() + rows[i] * d, d * sizeof(T));
  return g.record(OpKind::GatherRows, {x}, std::move(out), [=, d = d](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad_buffer(x);
    const auto& k = simd::kernels<T>();
    for (std::size_t i = 0; i < rows.size(); ++i) k.axpy(d, T(1), dy.ptr() + i * d, dx.ptr() + rows[i] * d);
  });
}

template <typename T>
NodeId reshape(Graph<T>& g, NodeId x, Shape shape) {
  const Tensor<T>& xv = g.value(x);
  if (numel(shape) != xv.size()) {
    fail(OpKind::Reshape, "cannot view " + shape_str(xv.shape()) + " as " + shape_str(shape));
  }
  Tensor<T> out = xv.reshaped(std::move(shape));
  return g.record(OpKind::Reshape, {x}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    add_into(gr.grad_buffer(x), gr.grad(self));
  });
}

template <typename T>
NodeId mse_loss(Graph<T>& g, NodeId a, NodeId b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  require_same(OpKind::MseLoss, av, bv);
  T s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T d = av[i] - bv[i];
    s += d * d;
  }
  const std::size_t n = av.size();
  Tensor<T> out({1}, s / T(n));
  return g.record(OpKind::MseLoss, {a, b}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const T scale_by = T(2) * gr.grad(self)[0] / T(n);
    const Tensor<T>& ai = gr.value(a);
    const Tensor<T>& bi = gr.value(b);
    if (gr.requires_grad(a)) {
      Tensor<T>& da = gr.grad_buffer(a);
      for (std::size_t i = 0; i < n; ++i) da[i] += scale_by * (ai[i] - bi[i]);
    }
    if (gr.requires_grad(b)) {
      Tensor<T>& db = gr.grad_buffer(b);
      for (std::size_t i = 0; i < n; ++i) db[i] -= scale_by * (ai[i] - bi[i]);
    }
  });
}

template <typename T>
NodeId sum(Graph<T>& g, NodeId x) {
  const Tensor<T>& xv = g.value(x);
  T s = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  return g.record(OpKind::Sum, {x}, Tensor<T>({1}, s), [=](Graph<T>& gr, NodeId self) {
    const T gy = gr.grad(self)[0];
    Tensor<T>& dx = gr.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gy;
  });
}

template <typename T>
NodeId mean(Graph<T>& g, NodeId x) {
  const Tensor<T>& xv = g.value(x);
  T s = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  const std::size_t n = xv.size();
  return g.record(OpKind::Mean, {x}, Tensor<T>({1}, s / T(n)), [=](Graph<T>& gr, NodeId self) {
    const T gy = gr.grad(self)[0] / T(n);
    Tensor<T>& dx = gr.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gy;
  });
}

#define UHAL_INSTANTIATE_OPS(T)                                                                          \
  template NodeId conv2d<T>(Graph<T>&, NodeId, NodeId, std::optional<NodeId>, Conv2dAttrs);             \
  template NodeId depthwise_conv2d<T>(Graph<T>&, NodeId, NodeId, std::optional<NodeId>, std::size_t);   \
  template NodeId linear<T>(Graph<T>&, NodeId, NodeId, std::optional<NodeId>);                          \
  template NodeId relu<T>(Graph<T>&, NodeId);                                                           \
  template NodeId sine<T>(Graph<T>&, NodeId, T);                                                        \
  template NodeId add<T>(Graph<T>&, NodeId, NodeId);                                                    \
  template NodeId sub<T>(Graph<T>&, NodeId, NodeId);                                                    \
  template NodeId mul<T>(Graph<T>&, NodeId, NodeId);                                                    \
  template NodeId scale<T>(Graph<T>&, NodeId, T);                                                       \
  template NodeId simple_gate<T>(Graph<T>&, NodeId);                                                    \
  template NodeId layer_norm<T>(Graph<T>&, NodeId, NodeId, NodeId, T);                                  \
  template NodeId channel_norm<T>(Graph<T>&, NodeId, NodeId, NodeId, T);                                \
  template NodeId global_avg_pool<T>(Graph<T>&, NodeId);                                                \
  template NodeId channel_scale<T>(Graph<T>&, NodeId, NodeId);                                          \
  template NodeId pixel_shuffle<T>(Graph<T>&, NodeId, std::size_t);                                     \
  template NodeId concat_channels<T>(Graph<T>&, const std::vector<NodeId>&);                            \
  template NodeId pad_spatial<T>(Graph<T>&, NodeId, std::size_t, std::size_t);                          \
  template NodeId crop_spatial<T>(Graph<T>&, NodeId, std::size_t, std::size_t);                         \
  template NodeId gather_rows<T>(Graph<T>&, NodeId, const std::vector<std::uint32_t>&);                 \
  template NodeId reshape<T>(Graph<T>&, NodeId, Shape);                                                 \
  template NodeId mse_loss<T>(Graph<T>&, NodeId, NodeId);                                               \
  template NodeId sum<T>(Graph<T>&, NodeId);                                                            \
  template NodeId mean<T>(Graph<T>&, NodeId);

UHAL_INSTANTIATE_OPS(float)
UHAL_INSTANTIATE_OPS(double)

#undef UHAL_INSTANTIATE_OPS

}  // namespace ops
}  // namespace uhal::core
