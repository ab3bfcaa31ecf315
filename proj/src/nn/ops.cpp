#include "srd/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace srd::nn {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.graph != b.graph) throw std::invalid_argument(std::string(op) + ": operands live on different graphs");
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
}

template <typename T>
void require_rank(const Var<T>& a, int rank, const char* op) {
  if (a.value().rank() != rank)
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_string(a.shape()));
}

// Runs `body(grad_storage)` if node `id` participates in backprop.
template <typename T, typename F>
void with_grad(Graph<T>* g, int id, F&& body) {
  if (g->requires_grad(id)) body(g->grad(id).storage());
}

// Valid output-column range [lo, hi) for kernel offset `off` (= kj - pad).
inline void valid_range(int off, int in_w, int out_w, int& lo, int& hi) {
  lo = std::max(0, -off);
  hi = std::min(out_w, in_w - off);
  if (hi < lo) hi = lo;
}

// Writes the column matrix of one image into rows of stride `row_stride`.
template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int pad, int out_h, int out_w, T* col,
            std::size_t row_stride) {
  for (int c = 0; c < channels; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * row_stride;
        const int off = kj - pad;
        int lo, hi;
        valid_range(off, w, out_w, lo, hi);
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh + ki - pad;
          T* dst = row + oh * out_w;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = xc + ih * w + off;
          for (int ow = 0; ow < lo; ++ow) dst[ow] = T(0);
          for (int ow = lo; ow < hi; ++ow) dst[ow] = src[ow];
          for (int ow = hi; ow < out_w; ++ow) dst[ow] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int channels, int h, int w, int k, int pad, int out_h, int out_w, T* x,
                std::size_t row_stride) {
  for (int c = 0; c < channels; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * row_stride;
        const int off = kj - pad;
        int lo, hi;
        valid_range(off, w, out_w, lo, hi);
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh + ki - pad;
          if (ih < 0 || ih >= h) continue;
          const T* src = row + oh * out_w;
          T* dst = xc + ih * w + off;
          for (int ow = lo; ow < hi; ++ow) dst[ow] += src[ow];
        }
      }
    }
  }
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Graph<T>* g = a.graph;
  const int ia = a.id, ib = b.id;
  return g->record(std::move(out), {a, b}, [g, ia, ib](int self) {
    const auto& gy = g->grad(self).storage();
    for (int dst : {ia, ib})
      with_grad(g, dst, [&](auto& gd) {
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += gy[i];
      });
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  Graph<T>* g = a.graph;
  const int ia = a.id, ib = b.id;
  return g->record(std::move(out), {a, b}, [g, ia, ib](int self) {
    const auto& gy = g->grad(self).storage();
    with_grad(g, ia, [&](auto& gd) {
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += gy[i];
    });
    with_grad(g, ib, [&](auto& gd) {
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] -= gy[i];
    });
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Graph<T>* g = a.graph;
  const int ia = a.id, ib = b.id;
  return g->record(std::move(out), {a, b}, [g, ia, ib](int self) {
    const auto& gy = g->grad(self).storage();
    const auto& av = g->value(ia).storage();
    const auto& bv = g->value(ib).storage();
    with_grad(g, ia, [&](auto& gd) {
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += gy[i] * bv[i];
    });
    with_grad(g, ib, [&](auto& gd) {
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += gy[i] * av[i];
    });
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v *= factor;
  Graph<T>* g = a.graph;
  const int ia = a.id;
  return g->record(std::move(out), {a}, [g, ia, factor](int self) {
    const auto& gy = g->grad(self).storage();
    with_grad(g, ia, [&](auto& gd) {
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += gy[i] * factor;
    });
  });
}

template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias) {
  require_rank(x, 4, "add_channel_bias");
  require_rank(bias, 2, "add_channel_bias");
  const int B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (bias.dim(0) != B || bias.dim(1) != C)
    throw std::invalid_argument("add_channel_bias: bias " + shape_string(bias.shape()) + " vs input " +
                                shape_string(x.shape()));
  Tensor<T> out = x.value();
  const auto& bv = bias.value().storage();
  for (int bc = 0; bc < B * C; ++bc) {
    T* p = out.data() + static_cast<std::size_t>(bc) * HW;
    for (int i = 0; i < HW; ++i) p[i] += bv[static_cast<std::size_t>(bc)];
  }
  Graph<T>* g = x.graph;
  const int ix = x.id, ib = bias.id;
  return g->record(std::move(out), {x, bias}, [g, ix, ib, B, C, HW](int self) {
    const auto& gy = g->grad(self).storage();
    with_grad(g, ix, [&](auto& gd) {
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += gy[i];
    });
    with_grad(g, ib, [&](auto& gd) {
      for (int bc = 0; bc < B * C; ++bc) {
        T s = 0;
        const T* p = gy.data() + static_cast<std::size_t>(bc) * HW;
        for (int i = 0; i < HW; ++i) s += p[i];
        gd[static_cast<std::size_t>(bc)] += s;
      }
    });
  });
}

// 'Same' convolution as k*k shifted GEMMs over a zero-padded, flattened
// input: output pixel q reads padded pixel q + (ki-pad)*Wp + (kj-pad).
// Border outputs are computed and discarded.
template <typename T>
Var<T> conv2d_same(Var<T> x, Var<T> w, Var<T> b, int pad) {
  const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(0), k = w.dim(2), kk = k * k;
  const int Hp = H + 2 * pad, Wp = W + 2 * pad;
  const long P = static_cast<long>(B) * Hp * Wp;
  const long margin = static_cast<long>(pad) * Wp + pad;
  const long L = P + 2 * margin;

  auto xp = std::make_shared<Mat<T>>(Ci, L);
  xp->setZero();
  const T* xv = x.value().data();
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < Ci; ++c) {
      const T* src = xv + (static_cast<std::size_t>(n) * Ci + c) * H * W;
      T* dst = xp->data() + static_cast<std::size_t>(c) * L + margin + static_cast<long>(n) * Hp * Wp;
      for (int i = 0; i < H; ++i) std::copy_n(src + i * W, W, dst + (i + pad) * Wp + pad);
    }
  auto shift = [=](int o) { return margin + static_cast<long>(o / k - pad) * Wp + (o % k - pad); };

  // Per-offset weight slices [Co, Ci].
  auto wk = std::make_shared<std::vector<Mat<T>>>(kk, Mat<T>(Co, Ci));
  const T* wv = w.value().data();
  for (int o = 0; o < Co; ++o)
    for (int c = 0; c < Ci; ++c)
      for (int q = 0; q < kk; ++q) (*wk)[q](o, c) = wv[(static_cast<std::size_t>(o) * Ci + c) * kk + q];

  Mat<T> yp(Co, P);
  yp.noalias() = (*wk)[0] * xp->middleCols(shift(0), P);
  for (int q = 1; q < kk; ++q) yp.noalias() += (*wk)[q] * xp->middleCols(shift(q), P);

  Tensor<T> out({B, Co, H, W});
  const auto& bias = b.value().storage();
  for (int n = 0; n < B; ++n)
    for (int o = 0; o < Co; ++o) {
      const T* src = yp.data() + static_cast<std::size_t>(o) * P + static_cast<long>(n) * Hp * Wp;
      T* dst = out.data() + (static_cast<std::size_t>(n) * Co + o) * H * W;
      const T bo = bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) dst[i * W + j] = src[(i + pad) * Wp + j + pad] + bo;
    }

  Graph<T>* g = x.graph;
  const int ix = x.id, iw = w.id, ib = b.id;
  return g->record(std::move(out), {x, w, b}, [=](int self) {
    const T* gy = g->grad(self).data();
    Mat<T> gyp = Mat<T>::Zero(Co, P);
    for (int n = 0; n < B; ++n)
      for (int o = 0; o < Co; ++o) {
        const T* src = gy + (static_cast<std::size_t>(n) * Co + o) * H * W;
        T* dst = gyp.data() + static_cast<std::size_t>(o) * P + static_cast<long>(n) * Hp * Wp;
        for (int i = 0; i < H; ++i) std::copy_n(src + i * W, W, dst + (i + pad) * Wp + pad);
      }
    if (g->requires_grad(iw)) {
      T* gw = g->grad(iw).data();
      Mat<T> dwk(Co, Ci);
      for (int q = 0; q < kk; ++q) {
        dwk.noalias() = gyp * xp->middleCols(shift(q), P).transpose();
        for (int o = 0; o < Co; ++o)
          for (int c = 0; c < Ci; ++c) gw[(static_cast<std::size_t>(o) * Ci + c) * kk + q] += dwk(o, c);
      }
    }
    if (g->requires_grad(ib)) {
      auto& gb = g->grad(ib).storage();
      for (int o = 0; o < Co; ++o) gb[static_cast<std::size_t>(o)] += gyp.row(o).sum();
    }
    if (g->requires_grad(ix)) {
      Mat<T> dxp = Mat<T>::Zero(Ci, L);
      for (int q = 0; q < kk; ++q) dxp.middleCols(shift(q), P).noalias() += (*wk)[q].transpose() * gyp;
      T* gx = g->grad(ix).data();
      for (int n = 0; n < B; ++n)
        for (int c = 0; c < Ci; ++c) {
          const T* src = dxp.data() + static_cast<std::size_t>(c) * L + margin + static_cast<long>(n) * Hp * Wp;
          T* dst = gx + (static_cast<std::size_t>(n) * Ci + c) * H * W;
          for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) dst[i * W + j] += src[(i + pad) * Wp + j + pad];
        }
    }
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(0), k = w.dim(2);
  if (w.dim(1) != Ci || w.dim(3) != k)
    throw std::invalid_argument("conv2d: weight " + shape_string(w.shape()) + " incompatible with input " +
                                shape_string(x.shape()));
  if (b.value().size() != static_cast<std::size_t>(Co)) throw std::invalid_argument("conv2d: bias size mismatch");
  const int Ho = H + 2 * pad - k + 1, Wo = W + 2 * pad - k + 1;
  if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");
  const int K = Ci * k * k, HWo = Ho * Wo;
  if (Ho == H && Wo == W && k > 1) return conv2d_same(x, w, b, pad);
  const long cols_n = static_cast<long>(B) * HWo;

  // One GEMM over the whole batch: Y[Co, B*HWo] = W[Co, K] * col[K, B*HWo].
  // The column matrix is kept for the weight gradient.
  auto cols = std::make_shared<Mat<T>>(K, cols_n);
  for (int n = 0; n < B; ++n)
    im2col(x.value().data() + static_cast<std::size_t>(n) * Ci * H * W, Ci, H, W, k, pad, Ho, Wo,
           cols->data() + static_cast<std::size_t>(n) * HWo, static_cast<std::size_t>(cols_n));
  Mat<T> y = ConstMatMap<T>(w.value().data(), Co, K) * ConstMatMap<T>(cols->data(), K, cols_n);
  Tensor<T> out({B, Co, Ho, Wo});
  const auto& bias = b.value().storage();
  for (int n = 0; n < B; ++n)
    for (int o = 0; o < Co; ++o) {
      const T* src = y.data() + static_cast<std::size_t>(o) * cols_n + static_cast<std::size_t>(n) * HWo;
      T* dst = out.data() + (static_cast<std::size_t>(n) * Co + o) * HWo;
      const T bo = bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < HWo; ++i) dst[i] = src[i] + bo;
    }

  Graph<T>* g = x.graph;
  const int ix = x.id, iw = w.id, ib = b.id;
  return g->record(std::move(out), {x, w, b}, [=](int self) {
    const T* gy = g->grad(self).data();
    // Gather the output gradient into [Co, B*HWo].
    Mat<T> gym(Co, cols_n);
    for (int n = 0; n < B; ++n)
      for (int o = 0; o < Co; ++o)
        std::copy_n(gy + (static_cast<std::size_t>(n) * Co + o) * HWo, HWo,
                    gym.data() + static_cast<std::size_t>(o) * cols_n + static_cast<std::size_t>(n) * HWo);
    if (g->requires_grad(iw))
      MatMap<T>(g->grad(iw).data(), Co, K).noalias() += gym * ConstMatMap<T>(cols->data(), K, cols_n).transpose();
    if (g->requires_grad(ib)) {
      auto& gb = g->grad(ib).storage();
      for (int o = 0; o < Co; ++o) gb[static_cast<std::size_t>(o)] += gym.row(o).sum();
    }
    if (g->requires_grad(ix)) {
      Mat<T> dcol = ConstMatMap<T>(g->value(iw).data(), Co, K).transpose() * gym;
      for (int n = 0; n < B; ++n)
        col2im_add(dcol.data() + static_cast<std::size_t>(n) * HWo, Ci, H, W, k, pad, Ho, Wo,
                   g->grad(ix).data() + static_cast<std::size_t>(n) * Ci * H * W, static_cast<std::size_t>(cols_n));
    }
  });
}

template <typename T>
Var<T> avg_pool2(Var<T> x) {
  require_rank(x, 4, "avg_pool2");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw std::invalid_argument("avg_pool2: spatial size must be even, got " + shape_string(x.shape()));
  const int Ho = H / 2, Wo = W / 2;
  Tensor<T> out({B, C, Ho, Wo});
  const T* xv = x.value().data();
  for (int bc = 0; bc < B * C; ++bc)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j) {
        const T* p = xv + (static_cast<std::size_t>(bc) * H + 2 * i) * W + 2 * j;
        out[(static_cast<std::size_t>(bc) * Ho + i) * Wo + j] = (p[0] + p[1] + p[W] + p[W + 1]) * T(0.25);
      }
  Graph<T>* g = x.graph;
  const int ix = x.id;
  return g->record(std::move(out), {x}, [g, ix, B, C, H, W, Ho, Wo](int self) {
    const auto& gy = g->grad(self).storage();
    with_grad(g, ix, [&](auto& gd) {
      for (int bc = 0; bc < B * C; ++bc)
        for (int i = 0; i < Ho; ++i)
          for (int j = 0; j < Wo; ++j) {
            const T v = gy[(static_cast<std::size_t>(bc) * Ho + i) * Wo + j] * T(0.25);
            T* p = gd.data() + (static_cast<std::size_t>(bc) * H + 2 * i) * W + 2 * j;
            p[0] += v;
            p[1] += v;
            p[W] += v;
            p[W + 1] += v;
          }
    });
  });
}

template <typename T>
Var<T> upsample_nearest2(Var<T> x) {
  require_rank(x, 4, "upsample_nearest2");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = 2 * H, Wo = 2 * W;
  Tensor<T> out({B, C, Ho, Wo});
  const T* xv = x.value().data();
  for (int bc = 0; bc < B * C; ++bc)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j)
        out[(static_cast<std::size_t>(bc) * Ho + i) * Wo + j] = xv[(static_cast<std::size_t>(bc) * H + i / 2) * W + j / 2];
  Graph<T>* g = x.graph;
  const int ix = x.id;
  return g->record(std::move(out), {x}, [g, ix, B, C, H, W, Ho, Wo](int self) {
    const auto& gy = g->grad(self).storage();
    with_grad(g, ix, [&](auto& gd) {
      for (int bc = 0; bc < B * C; ++bc)
        for (int i = 0; i < Ho; ++i)
          for (int j = 0; j < Wo; ++j)
            gd[(static_cast<std::size_t>(bc) * H + i / 2) * W + j / 2] += gy[(static_cast<std::size_t>(bc) * Ho + i) * Wo + j];
    });
  });
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  const int B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  if (b.dim(0) != B || b.dim(2) != H || b.dim(3) != W)
    throw std::invalid_argument("concat_channels: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const std::size_t HW = static_cast<std::size_t>(H) * W;
  Tensor<T> out({B, Ca + Cb, H, W});
  for (int n = 0; n < B; ++n) {
    std::copy_n(a.value().data() + n * Ca * HW, Ca * HW, out.data() + n * (Ca + Cb) * HW);
    std::copy_n(b.value().data() + n * Cb * HW, Cb * HW, out.data() + (n * (Ca + Cb) + Ca) * HW);
  }
  Graph<T>* g = a.graph;
  const int ia = a.id, ib = b.id;
  return g->record(std::move(out), {a, b}, [g, ia, ib, B, Ca, Cb, HW](int self) {
    const T* gy = g->grad(self).data();
    with_grad(g, ia, [&](auto& gd) {
      for (int n = 0; n < B; ++n)
        for (std::size_t i = 0; i < Ca * HW; ++i) gd[n * Ca * HW + i] += gy[n * (Ca + Cb) * HW + i];
    });
    with_grad(g, ib, [&](auto& gd) {
      for (int n = 0; n < B; ++n)
        for (std::size_t i = 0; i < Cb * HW; ++i) gd[n * Cb * HW + i] += gy[(n * (Ca + Cb) + Ca) * HW + i];
    });
  });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  require_rank(x, 4, "global_avg_pool");
  const int B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> out({B, C});
  for (int bc = 0; bc < B * C; ++bc) {
    const T* p = x.value().data() + static_cast<std::size_t>(bc) * HW;
    T s = 0;
    for (int i = 0; i < HW; ++i) s += p[i];
    out[static_cast<std::size_t>(bc)] = s / T(HW);
  }
  Graph<T>* g = x.graph;
  const int ix = x.id;
  return g->record(std::move(out), {x}, [g, ix, B, C, HW](int self) {
    const auto& gy = g->grad(self).storage();
    with_grad(g, ix, [&](auto& gd) {
      for (int bc = 0; bc < B * C; ++bc) {
        const T v = gy[static_cast<std::size_t>(bc)] / T(HW);
        for (int i = 0; i < HW; ++i) gd[static_cast<std::size_t>(bc) * HW + i] += v;
      }
    });
  });
}

template <typename T>
Var<T> silu(Var<T> x) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  const auto n = static_cast<Eigen::Index>(x.value().size());
  auto sig = std::make_shared<Arr>(n);
  Eigen::Map<const Arr> xv(x.value().data(), n);
  *sig = T(1) / (T(1) + (-xv).exp());
  Tensor<T> out(x.shape());
  Eigen::Map<Arr>(out.data(), n) = xv * *sig;
  Graph<T>* g = x.graph;
  const int ix = x.id;
  return g->record(std::move(out), {x}, [g, ix, n, sig](int self) {
    Eigen::Map<const Arr> gy(g->grad(self).data(), n);
    Eigen::Map<const Arr> xs(g->value(ix).data(), n);
    with_grad(g, ix, [&](auto& gd) {
      Eigen::Map<Arr>(gd.data(), n) += gy * (*sig * (T(1) + xs * (T(1) - *sig)));
    });
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v = v > T(0) ? v : T(0);
  Graph<T>* g = x.graph;
  const int ix = x.id;
  return g->record(std::move(out), {x}, [g, ix](int self) {
    const auto& gy = g->grad(self).storage();
    const auto& xv = g->value(ix).storage();
    with_grad(g, ix, [&](auto& gd) {
      for (std::size_t i = 0; i < gd.size(); ++i)
        if (xv[i] > T(0)) gd[i] += gy[i];
    });
  });
}

template <typename T>
Var<T> group_norm(Var<T> x, Var<T> gamma, Var<T> beta, int groups, T eps) {
  require_rank(x, 4, "group_norm");
  const int B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (groups < 1 || C % groups) throw std::invalid_argument("group_norm: groups must divide channel count");
  if (gamma.value().size() != static_cast<std::size_t>(C) || beta.value().size() != static_cast<std::size_t>(C))
    throw std::invalid_argument("group_norm: affine parameter size mismatch");
  const int Cg = C / groups;
  const std::size_t N = static_cast<std::size_t>(Cg) * HW;
  auto xhat = std::make_shared<Buffer<T>>(x.value().size());
  auto inv_std = std::make_shared<Buffer<T>>(static_cast<std::size_t>(B) * groups);
  Tensor<T> out(x.shape());
  const auto& gm = gamma.value().storage();
  const auto& bt = beta.value().storage();
  for (int n = 0; n < B; ++n)
    for (int gi = 0; gi < groups; ++gi) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + static_cast<std::size_t>(gi) * Cg) * HW;
      const T* p = x.value().data() + base;
      Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> grp(p, static_cast<Eigen::Index>(N));
      const double mean = static_cast<double>(grp.sum()) / static_cast<double>(N);
      const double var =
          static_cast<double>((grp - static_cast<T>(mean)).square().sum()) / static_cast<double>(N);
      const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      (*inv_std)[static_cast<std::size_t>(n * groups + gi)] = is;
      const T mu = static_cast<T>(mean);
      for (int c = 0; c < Cg; ++c) {
        const std::size_t ch = static_cast<std::size_t>(gi * Cg + c);
        const std::size_t off = static_cast<std::size_t>(c) * HW;
        const T* src = p + off;
        T* xh = xhat->data() + base + off;
        T* dst = out.data() + base + off;
        const T a = gm[ch], b = bt[ch];
        for (int i = 0; i < HW; ++i) {
          xh[i] = (src[i] - mu) * is;
          dst[i] = a * xh[i] + b;
        }
      }
    }
  Graph<T>* g = x.graph;
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return g->record(std::move(out), {x, gamma, beta}, [=](int self) {
    const auto& gy = g->grad(self).storage();
    const auto& gm = g->value(ig).storage();
    with_grad(g, ig, [&](auto& gd) {
      for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
          T s = 0;
          const std::size_t base = (static_cast<std::size_t>(n) * C + c) * HW;
          for (int i = 0; i < HW; ++i) s += gy[base + i] * (*xhat)[base + i];
          gd[static_cast<std::size_t>(c)] += s;
        }
    });
    with_grad(g, ib, [&](auto& gd) {
      for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
          T s = 0;
          const std::size_t base = (static_cast<std::size_t>(n) * C + c) * HW;
          for (int i = 0; i < HW; ++i) s += gy[base + i];
          gd[static_cast<std::size_t>(c)] += s;
        }
    });
    with_grad(g, ix, [&](auto& gd) {
      for (int n = 0; n < B; ++n)
        for (int gi = 0; gi < groups; ++gi) {
          const std::size_t base = (static_cast<std::size_t>(n) * C + static_cast<std::size_t>(gi) * Cg) * HW;
          using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
          T sum_d = 0, sum_dx = 0;
          for (int c = 0; c < Cg; ++c) {
            const std::size_t off = base + static_cast<std::size_t>(c) * HW;
            const T gmc = gm[static_cast<std::size_t>(gi * Cg + c)];
            Eigen::Map<const Arr> gyc(gy.data() + off, HW), xhc(xhat->data() + off, HW);
            sum_d += gmc * gyc.sum();
            sum_dx += gmc * (gyc * xhc).sum();
          }
          const T is = (*inv_std)[static_cast<std::size_t>(n * groups + gi)];
          const T invN = T(1) / static_cast<T>(N);
          for (int c = 0; c < Cg; ++c) {
            const std::size_t off = base + static_cast<std::size_t>(c) * HW;
            const T gmc = gm[static_cast<std::size_t>(gi * Cg + c)];
            Eigen::Map<const Arr> gyc(gy.data() + off, HW), xhc(xhat->data() + off, HW);
            Eigen::Map<Arr>(gd.data() + off, HW) += is * (gmc * gyc - invN * sum_d - xhc * (invN * sum_dx));
          }
        }
    });
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  require_rank(w, 2, "linear");
  const int O = w.dim(0), I = w.dim(1);
  if (x.dim(-1) != I)
    throw std::invalid_argument("linear: input " + shape_string(x.shape()) + " vs weight " + shape_string(w.shape()));
  if (b.value().size() != static_cast<std::size_t>(O)) throw std::invalid_argument("linear: bias size mismatch");
  const int N = static_cast<int>(x.value().size() / static_cast<std::size_t>(I));
  Shape out_shape = x.shape();
  out_shape.back() = O;
  Tensor<T> out(out_shape);
  MatMap<T> y(out.data(), N, O);
  y.noalias() = ConstMatMap<T>(x.value().data(), N, I) * ConstMatMap<T>(w.value().data(), O, I).transpose();
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.value().data(), O);
  Graph<T>* g = x.graph;
  const int ix = x.id, iw = w.id, ib = b.id;
  return g->record(std::move(out), {x, w, b}, [g, ix, iw, ib, N, O, I](int self) {
    ConstMatMap<T> gy(g->grad(self).data(), N, O);
    if (g->requires_grad(ix))
      MatMap<T>(g->grad(ix).data(), N, I).noalias() += gy * ConstMatMap<T>(g->value(iw).data(), O, I);
    if (g->requires_grad(iw))
      MatMap<T>(g->grad(iw).data(), O, I).noalias() += gy.transpose() * ConstMatMap<T>(g->value(ix).data(), N, I);
    if (g->requires_grad(ib)) {
      auto& gb = g->grad(ib).storage();
      for (int o = 0; o < O; ++o) gb[static_cast<std::size_t>(o)] += gy.col(o).sum();
    }
  });
}

template <typename T>
Var<T> to_tokens(Var<T> x) {
  require_rank(x, 4, "to_tokens");
  const int B = x.dim(0), C = x.dim(1), N = x.dim(2) * x.dim(3);
  Tensor<T> out({B, N, C});
  for (int b = 0; b < B; ++b)
    MatMap<T>(out.data() + static_cast<std::size_t>(b) * N * C, N, C) =
        ConstMatMap<T>(x.value().data() + static_cast<std::size_t>(b) * C * N, C, N).transpose();
  Graph<T>* g = x.graph;
  const int ix = x.id;
  return g->record(std::move(out), {x}, [g, ix, B, C, N](int self) {
    if (!g->requires_grad(ix)) return;
    for (int b = 0; b < B; ++b)
      MatMap<T>(g->grad(ix).data() + static_cast<std::size_t>(b) * C * N, C, N) +=
          ConstMatMap<T>(g->grad(self).data() + static_cast<std::size_t>(b) * N * C, N, C).transpose();
  });
}

template <typename T>
Var<T> from_tokens(Var<T> x, int h, int w) {
  require_rank(x, 3, "from_tokens");
  const int B = x.dim(0), N = x.dim(1), C = x.dim(2);
  if (N != h * w) throw std::invalid_argument("from_tokens: token count does not match spatial grid");
  Tensor<T> out({B, C, h, w});
  for (int b = 0; b < B; ++b)
    MatMap<T>(out.data() + static_cast<std::size_t>(b) * C * N, C, N) =
        ConstMatMap<T>(x.value().data() + static_cast<std::size_t>(b) * N * C, N, C).transpose();
  Graph<T>* g = x.graph;
  const int ix = x.id;
  return g->record(std::move(out), {x}, [g, ix, B, C, N](int self) {
    if (!g->requires_grad(ix)) return;
    for (int b = 0; b < B; ++b)
      MatMap<T>(g->grad(ix).data() + static_cast<std::size_t>(b) * N * C, N, C) +=
          ConstMatMap<T>(g->grad(self).data() + static_cast<std::size_t>(b) * C * N, C, N).transpose();
  });
}

template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool transpose_b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const int B = a.dim(0), M = a.dim(1), K = a.dim(2);
  const int N = transpose_b ? b.dim(1) : b.dim(2);
  const int Kb = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != B || Kb != K)
    throw std::invalid_argument("bmm: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const int Br = transpose_b ? N : K, Bc = transpose_b ? K : N;
  Tensor<T> out({B, M, N});
  for (int n = 0; n < B; ++n) {
    ConstMatMap<T> am(a.value().data() + static_cast<std::size_t>(n) * M * K, M, K);
    ConstMatMap<T> bm(b.value().data() + static_cast<std::size_t>(n) * Br * Bc, Br, Bc);
    MatMap<T> y(out.data() + static_cast<std::size_t>(n) * M * N, M, N);
    if (transpose_b)
      y.noalias() = am * bm.transpose();
    else
      y.noalias() = am * bm;
  }
  Graph<T>* g = a.graph;
  const int ia = a.id, ib = b.id;
  return g->record(std::move(out), {a, b}, [=](int self) {
    for (int n = 0; n < B; ++n) {
      ConstMatMap<T> gy(g->grad(self).data() + static_cast<std::size_t>(n) * M * N, M, N);
      ConstMatMap<T> am(g->value(ia).data() + static_cast<std::size_t>(n) * M * K, M, K);
      ConstMatMap<T> bm(g->value(ib).data() + static_cast<std::size_t>(n) * Br * Bc, Br, Bc);
      if (g->requires_grad(ia)) {
        MatMap<T> ga(g->grad(ia).data() + static_cast<std::size_t>(n) * M * K, M, K);
        if (transpose_b)
          ga.noalias() += gy * bm;
        else
          ga.noalias() += gy * bm.transpose();
      }
      if (g->requires_grad(ib)) {
        MatMap<T> gb(g->grad(ib).data() + static_cast<std::size_t>(n) * Br * Bc, Br, Bc);
        if (transpose_b)
          gb.noalias() += gy.transpose() * am;
        else
          gb.noalias() += am.transpose() * gy;
      }
    }
  });
}

template <typename T>
Var<T> softmax_last(Var<T> x) {
  const int L = x.dim(-1);
  const std::size_t rows = x.value().size() / static_cast<std::size_t>(L);
  Tensor<T> out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    T* p = out.data() + r * L;
    const T mx = *std::max_element(p, p + L);
    T s = 0;
    for (int i = 0; i < L; ++i) {
      p[i] = std::exp(p[i] - mx);
      s += p[i];
    }
    for (int i = 0; i < L; ++i) p[i] /= s;
  }
  Graph<T>* g = x.graph;
  const int ix = x.id;
  return g->record(std::move(out), {x}, [g, ix, rows, L](int self) {
    const auto& gy = g->grad(self).storage();
    const auto& y = g->value(self).storage();
    with_grad(g, ix, [&](auto& gd) {
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (int i = 0; i < L; ++i) dot += gy[r * L + i] * y[r * L + i];
        for (int i = 0; i < L; ++i) gd[r * L + i] += y[r * L + i] * (gy[r * L + i] - dot);
      }
    });
  });
}

template <typename T>
Var<T> scale_rows(Var<T> x, std::span<const T> factor) {
  require_rank(x, 3, "scale_rows");
  const int B = x.dim(0), N = x.dim(1), C = x.dim(2);
  if (factor.size() != static_cast<std::size_t>(N))
    throw std::invalid_argument("scale_rows: " + std::to_string(factor.size()) + " factors for " + std::to_string(N) +
                                " tokens");
  auto f = std::make_shared<std::vector<T>>(factor.begin(), factor.end());
  Tensor<T> out = x.value();
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) out[(static_cast<std::size_t>(b) * N + n) * C + c] *= (*f)[static_cast<std::size_t>(n)];
  Graph<T>* g = x.graph;
  const int ix = x.id;
  return g->record(std::move(out), {x}, [g, ix, f, B, N, C](int self) {
    const auto& gy = g->grad(self).storage();
    with_grad(g, ix, [&](auto& gd) {
      for (int b = 0; b < B; ++b)
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const std::size_t k = (static_cast<std::size_t>(b) * N + n) * C + c;
            gd[k] += gy[k] * (*f)[static_cast<std::size_t>(n)];
          }
    });
  });
}

template <typename T>
Var<T> slice_last(Var<T> x, int start, int length) {
  const int L = x.dim(-1);
  if (start < 0 || length < 1 || start + length > L) throw std::invalid_argument("slice_last: range out of bounds");
  const std::size_t rows = x.value().size() / static_cast<std::size_t>(L);
  Shape shape = x.shape();
  shape.back() = length;
  Tensor<T> out(shape);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.value().data() + r * L + start, length, out.data() + r * length);
  Graph<T>* g = x.graph;
  const int ix = x.id;
  return g->record(std::move(out), {x}, [g, ix, rows, L, start, length](int self) {
    const auto& gy = g->grad(self).storage();
    with_grad(g, ix, [&](auto& gd) {
      for (std::size_t r = 0; r < rows; ++r)
        for (int i = 0; i < length; ++i) gd[r * L + start + i] += gy[r * length + i];
    });
  });
}

template <typename T>
Var<T> concat_last(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_last: no inputs");
  if (parts.size() == 1) return parts.front();
  Shape shape = parts.front().shape();
  const std::size_t rows = parts.front().value().size() / static_cast<std::size_t>(shape.back());
  std::vector<int> widths;
  int total = 0;
  for (const auto& p : parts) {
    if (p.value().size() / static_cast<std::size_t>(p.dim(-1)) != rows)
      throw std::invalid_argument("concat_last: leading dimensions differ");
    widths.push_back(p.dim(-1));
    total += p.dim(-1);
  }
  shape.back() = total;
  Tensor<T> out(shape);
  int offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(parts[k].value().data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  Graph<T>* g = parts.front().graph;
  std::vector<int> ids;
  for (const auto& p : parts) ids.push_back(p.id);
  return g->record(std::move(out), std::span<const Var<T>>(parts), [g, ids, widths, rows, total](int self) {
    const auto& gy = g->grad(self).storage();
    int offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      with_grad(g, ids[k], [&](auto& gd) {
        for (std::size_t r = 0; r < rows; ++r)
          for (int i = 0; i < widths[k]; ++i) gd[r * widths[k] + i] += gy[r * total + offset + i];
      });
      offset += widths[k];
    }
  });
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mse");
  const auto& av = a.value().storage();
  const auto& bv = b.value().storage();
  double s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    s += d * d;
  }
  const std::size_t n = av.size();
  Tensor<T> out({1}, static_cast<T>(s / static_cast<double>(n)));
  Graph<T>* g = a.graph;
  const int ia = a.id, ib = b.id;
  return g->record(std::move(out), {a, b}, [g, ia, ib, n](int self) {
    const T gy = g->grad(self)[0];
    const auto& av = g->value(ia).storage();
    const auto& bv = g->value(ib).storage();
    const T c = T(2) * gy / static_cast<T>(n);
    with_grad(g, ia, [&](auto& gd) {
      for (std::size_t i = 0; i < n; ++i) gd[i] += c * (av[i] - bv[i]);
    });
    with_grad(g, ib, [&](auto& gd) {
      for (std::size_t i = 0; i < n; ++i) gd[i] -= c * (av[i] - bv[i]);
    });
  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const int B = logits.dim(0), K = logits.dim(1);
  if (labels.size() != static_cast<std::size_t>(B)) throw std::invalid_argument("cross_entropy: label count mismatch");
  auto probs = std::make_shared<Buffer<T>>(logits.value().storage());
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double loss = 0;
  for (int b = 0; b < B; ++b) {
    T* p = probs->data() + static_cast<std::size_t>(b) * K;
    const int y = (*lab)[static_cast<std::size_t>(b)];
    if (y < 0 || y >= K) throw std::invalid_argument("cross_entropy: label out of range");
    const T mx = *std::max_element(p, p + K);
    double s = 0;
    for (int k = 0; k < K; ++k) s += std::exp(static_cast<double>(p[k] - mx));
    loss += -(static_cast<double>(p[y] - mx) - std::log(s));
    for (int k = 0; k < K; ++k) p[k] = static_cast<T>(std::exp(static_cast<double>(p[k] - mx)) / s);
  }
  Tensor<T> out({1}, static_cast<T>(loss / B));
  Graph<T>* g = logits.graph;
  const int il = logits.id;
  return g->record(std::move(out), {logits}, [g, il, probs, lab, B, K](int self) {
    const T gy = g->grad(self)[0];
    with_grad(g, il, [&](auto& gd) {
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k) {
          const std::size_t i = static_cast<std::size_t>(b) * K + k;
          const T onehot = (*lab)[static_cast<std::size_t>(b)] == k ? T(1) : T(0);
          gd[i] += gy * ((*probs)[i] - onehot) / static_cast<T>(B);
        }
    });
  });
}

template <typename T>
Var<T> sum_all(Var<T> x) {
  double s = 0;
  for (T v : x.value().storage()) s += v;
  Tensor<T> out({1}, static_cast<T>(s));
  Graph<T>* g = x.graph;
  const int ix = x.id;
  return g->record(std::move(out), {x}, [g, ix](int self) {
    const T gy = g->grad(self)[0];
    with_grad(g, ix, [&](auto& gd) {
      for (auto& v : gd) v += gy;
    });
  });
}

#define SRD_INSTANTIATE_OPS(T)                                                              \
  template Var<T> add(Var<T>, Var<T>);                                                      \
  template Var<T> sub(Var<T>, Var<T>);                                                      \
  template Var<T> mul(Var<T>, Var<T>);                                                      \
  template Var<T> scale(Var<T>, T);                                                         \
  template Var<T> add_channel_bias(Var<T>, Var<T>);                                         \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, int);                                      \
  template Var<T> avg_pool2(Var<T>);                                                        \
  template Var<T> upsample_nearest2(Var<T>);                                                \
  template Var<T> concat_channels(Var<T>, Var<T>);                                          \
  template Var<T> global_avg_pool(Var<T>);                                                  \
  template Var<T> silu(Var<T>);                                                             \
  template Var<T> relu(Var<T>);                                                             \
  template Var<T> group_norm(Var<T>, Var<T>, Var<T>, int, T);                               \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                           \
  template Var<T> to_tokens(Var<T>);                                                        \
  template Var<T> from_tokens(Var<T>, int, int);                                            \
  template Var<T> bmm(Var<T>, Var<T>, bool);                                                \
  template Var<T> softmax_last(Var<T>);                                                     \
  template Var<T> scale_rows(Var<T>, std::span<const T>);                                   \
  template Var<T> slice_last(Var<T>, int, int);                                             \
  template Var<T> concat_last(const std::vector<Var<T>>&);                                  \
  template Var<T> mse(Var<T>, Var<T>);                                                      \
  template Var<T> cross_entropy(Var<T>, std::span<const int>);                              \
  template Var<T> sum_all(Var<T>);

SRD_INSTANTIATE_OPS(float)
SRD_INSTANTIATE_OPS(double)

#undef SRD_INSTANTIATE_OPS

}  // namespace srd::nn
