#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "deepnose/autodiff.hpp"
#include "deepnose/common.hpp"

namespace deepnose {

namespace detail {

// Deterministic parallel reduction: each slab accumulates its contiguous item
// range sequentially, slabs are combined in fixed order afterwards, so the
// result does not depend on the worker count.
template <typename Acc, typename F>
std::vector<Acc> slab_accumulate(std::size_t n_items, std::size_t slot_count, F&& per_item) {
  std::vector<Acc> buf(kReductionSlabs * slot_count, Acc(0));
  parallel_for(kReductionSlabs, [&](std::size_t s) {
    Acc* acc = buf.data() + s * slot_count;
    for (std::size_t i = slab_begin(n_items, s); i < slab_begin(n_items, s + 1); ++i) per_item(acc, i);
  });
  std::vector<Acc> total(slot_count, Acc(0));
  for (std::size_t s = 0; s < kReductionSlabs; ++s) {
    const Acc* acc = buf.data() + s * slot_count;
    for (std::size_t k = 0; k < slot_count; ++k) total[k] += acc[k];
  }
  return total;
}

// Per-thread column scratch, grown on demand and reused across calls.
template <typename T>
std::vector<T>& conv_scratch(int which) {
  thread_local std::vector<T> bufs[2];
  return bufs[which];
}

// Unrolls the 3x3x3 taps of one sample into a column matrix.  col is
// [Cin*27][D*H*W] with row index ci*27 + (dz*3 + dy)*3 + dx; col[k][p] holds
// the input value tap k reads when producing output position p, zero where
// the tap falls in the padding.  Rows are built from shifted contiguous
// copies, so the convolution itself becomes a plain matrix product.
template <typename T>
void im2col_3x3(const T* in, std::size_t cin, std::size_t d, std::size_t h, std::size_t w, T* col) {
  const std::size_t dhw = d * h * w;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const T* in_c = in + ci * dhw;
    for (std::size_t dz = 0; dz < 3; ++dz)
      for (std::size_t dy = 0; dy < 3; ++dy)
        for (std::size_t dx = 0; dx < 3; ++dx) {
          T* row = col + (ci * 27 + (dz * 3 + dy) * 3 + dx) * dhw;
          for (std::size_t z = 0; z < d; ++z) {
            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(z + dz) - 1;
            T* rz = row + z * h * w;
            if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(d)) {
              std::fill(rz, rz + h * w, T(0));
              continue;
            }
            const T* sz = in_c + static_cast<std::size_t>(iz) * h * w;
            for (std::size_t y = 0; y < h; ++y) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - 1;
              T* ry = rz + y * w;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                std::fill(ry, ry + w, T(0));
                continue;
              }
              const T* sy = sz + static_cast<std::size_t>(iy) * w;
              if (dx == 0) {
                ry[0] = T(0);
                std::copy(sy, sy + (w - 1), ry + 1);
              } else if (dx == 1) {
                std::copy(sy, sy + w, ry);
              } else {
                std::copy(sy + 1, sy + w, ry);
                ry[w - 1] = T(0);
              }
            }
          }
        }
  }
}

// Scatter inverse of im2col_3x3: adds each tap row of col back onto the input
// positions it was read from.  Entries that came from the padding are dropped.
template <typename T>
void col2im_add_3x3(const T* col, std::size_t cin, std::size_t d, std::size_t h, std::size_t w, T* out) {
  const std::size_t dhw = d * h * w;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    T* out_c = out + ci * dhw;
    for (std::size_t dz = 0; dz < 3; ++dz)
      for (std::size_t dy = 0; dy < 3; ++dy)
        for (std::size_t dx = 0; dx < 3; ++dx) {
          const T* row = col + (ci * 27 + (dz * 3 + dy) * 3 + dx) * dhw;
          for (std::size_t z = 0; z < d; ++z) {
            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(z + dz) - 1;
            if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(d)) continue;
            for (std::size_t y = 0; y < h; ++y) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - 1;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              const T* ry = row + (z * h + y) * w;
              T* oy = out_c + (static_cast<std::size_t>(iz) * h + static_cast<std::size_t>(iy)) * w;
              if (dx == 0) {
                for (std::size_t x = 1; x < w; ++x) oy[x - 1] += ry[x];
              } else if (dx == 1) {
                for (std::size_t x = 0; x < w; ++x) oy[x] += ry[x];
              } else {
                for (std::size_t x = 0; x + 1 < w; ++x) oy[x + 1] += ry[x];
              }
            }
          }
        }
  }
}

// C[M][P] = A[M][K] * B[K][P], all row-major.  Row i starts from bias[i]
// (zero when bias is null) unless accumulate is set.  Output rows are
// processed four at a time and P in strips small enough that the active
// output rows stay in L1 while the inner loop runs contiguous fused
// multiply-adds.  Per output element the k terms are summed in order, so the
// strip width does not affect the result.
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, std::size_t M, std::size_t K, std::size_t P, const T* bias,
             bool accumulate) {
  constexpr std::size_t kStrip = 1024;
  for (std::size_t i0 = 0; i0 < M; i0 += 4) {
    const std::size_t ib = std::min<std::size_t>(4, M - i0);
    if (!accumulate)
      for (std::size_t di = 0; di < ib; ++di) {
        T* c = C + (i0 + di) * P;
        std::fill(c, c + P, bias ? bias[i0 + di] : T(0));
      }
    for (std::size_t p0 = 0; p0 < P; p0 += kStrip) {
      const std::size_t pc = std::min(kStrip, P - p0);
      for (std::size_t k = 0; k < K; ++k) {
        const T* __restrict bk = B + k * P + p0;
        if (ib == 4) {
          const T a0 = A[(i0 + 0) * K + k], a1 = A[(i0 + 1) * K + k];
          const T a2 = A[(i0 + 2) * K + k], a3 = A[(i0 + 3) * K + k];
          T* __restrict c0 = C + (i0 + 0) * P + p0;
          T* __restrict c1 = C + (i0 + 1) * P + p0;
          T* __restrict c2 = C + (i0 + 2) * P + p0;
          T* __restrict c3 = C + (i0 + 3) * P + p0;
          for (std::size_t p = 0; p < pc; ++p) {
            const T b = bk[p];
            c0[p] += a0 * b;
            c1[p] += a1 * b;
            c2[p] += a2 * b;
            c3[p] += a3 * b;
          }
        } else {
          for (std::size_t di = 0; di < ib; ++di) {
            const T a = A[(i0 + di) * K + k];
            T* __restrict c = C + (i0 + di) * P + p0;
            for (std::size_t p = 0; p < pc; ++p) c[p] += a * bk[p];
          }
        }
      }
    }
  }
}

// B[j][i] = A[i][j] for row-major A of [rows][cols].
template <typename T>
void transpose(const T* A, std::size_t rows, std::size_t cols, T* B) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) B[j * rows + i] = A[i * cols + j];
}

// Dot product over fixed-width lane accumulators; the lane layout pins the
// summation order for a given n.
template <typename T>
inline T dot_lanes(const T* __restrict a, const T* __restrict b, std::size_t n) {
  constexpr std::size_t kL = 8;
  T l0[kL] = {}, l1[kL] = {}, l2[kL] = {}, l3[kL] = {};
  std::size_t p = 0;
  for (; p + 4 * kL <= n; p += 4 * kL)
    for (std::size_t l = 0; l < kL; ++l) {
      l0[l] += a[p + l] * b[p + l];
      l1[l] += a[p + kL + l] * b[p + kL + l];
      l2[l] += a[p + 2 * kL + l] * b[p + 2 * kL + l];
      l3[l] += a[p + 3 * kL + l] * b[p + 3 * kL + l];
    }
  for (; p + kL <= n; p += kL)
    for (std::size_t l = 0; l < kL; ++l) l0[l] += a[p + l] * b[p + l];
  T s = 0;
  for (; p < n; ++p) s += a[p] * b[p];
  for (std::size_t l = 0; l < kL; ++l) s += l0[l] + l1[l] + l2[l] + l3[l];
  return s;
}

// C[M][N] += A[M][P] * B[N][P]^T.  Rows of both operands are contiguous, so
// every entry is a streaming dot product; P is chunked to keep the active
// rows of A cache resident while a row of B is consumed.
template <typename T>
void gemm_nt_acc(const T* A, const T* B, T* C, std::size_t M, std::size_t N, std::size_t P) {
  constexpr std::size_t kChunk = 1024;
  for (std::size_t p0 = 0; p0 < P; p0 += kChunk) {
    const std::size_t pc = std::min(kChunk, P - p0);
    for (std::size_t j = 0; j < N; ++j) {
      const T* bj = B + j * P + p0;
      for (std::size_t i = 0; i < M; ++i) C[i * N + j] += dot_lanes(A + i * P + p0, bj, pc);
    }
  }
}

}  // namespace detail

// 3D convolution, kernel 3x3x3, stride 1, zero padding 1.
// x: [N][Cin][D][H][W], weight: [Cout][Cin][3][3][3], bias: [Cout].
template <typename T>
NodePtr<T> conv3d(const NodePtr<T>& x, const NodePtr<T>& weight, const NodePtr<T>& bias) {
  const auto& xs = x->value.shape;
  const auto& ws = weight->value.shape;
  if (xs.size() != 5) raise(ErrorKind::ShapeMismatch, "conv3d: input must be rank 5, got " + shape_string(xs));
  if (ws.size() != 5 || ws[2] != 3 || ws[3] != 3 || ws[4] != 3)
    raise(ErrorKind::ShapeMismatch, "conv3d: weight must be [Cout][Cin][3][3][3], got " + shape_string(ws));
  if (ws[1] != xs[1])
    raise(ErrorKind::ShapeMismatch, "conv3d: input has " + std::to_string(xs[1]) + " channels, weight expects " +
                                        std::to_string(ws[1]));
  if (bias->value.shape != std::vector<std::size_t>{ws[0]})
    raise(ErrorKind::ShapeMismatch, "conv3d: bias must be [Cout]");

  const std::size_t n = xs[0], cin = xs[1], d = xs[2], h = xs[3], w = xs[4], cout = ws[0];
  const std::size_t dhw = d * h * w;
  // Volumes this small make the strided-FMA loops overhead bound; flip the
  // product so the reduction runs along the long channel-tap axis instead.
  const bool tiny = dhw < 32;
  Tensor<T> out({n, cout, d, h, w});
  {
    const T* xv = x->value.data();
    const T* wv = weight->value.data();
    const T* bv = bias->value.data();
    T* ov = out.data();
    parallel_for(n, [&](std::size_t i) {
      auto& col = detail::conv_scratch<T>(0);
      col.resize(cin * 27 * dhw);
      detail::im2col_3x3(xv + i * cin * dhw, cin, d, h, w, col.data());
      T* oc = ov + i * cout * dhw;
      if (tiny) {
        auto& colt = detail::conv_scratch<T>(1);
        colt.resize(dhw * cin * 27);
        detail::transpose(col.data(), cin * 27, dhw, colt.data());
        for (std::size_t co = 0; co < cout; ++co) std::fill(oc + co * dhw, oc + (co + 1) * dhw, bv[co]);
        detail::gemm_nt_acc(wv, colt.data(), oc, cout, dhw, cin * 27);
      } else {
        detail::gemm_nn(wv, col.data(), oc, cout, cin * 27, dhw, bv, false);
      }
    });
  }

  return make_op<T>("conv3d", std::move(out), {x, weight, bias}, [=](Node<T>& self) {
    const T* gv = self.grad.data();
    const T* xv = x->value.data();
    if (bias->requires_grad) {
      auto sums = detail::slab_accumulate<T>(n, cout, [&](T* acc, std::size_t i) {
        const T* g = gv + i * cout * dhw;
        for (std::size_t co = 0; co < cout; ++co) {
          T s = 0;
          const T* gc = g + co * dhw;
          for (std::size_t k = 0; k < dhw; ++k) s += gc[k];
          acc[co] += s;
        }
      });
      T* gb = bias->ensure_grad().data();
      for (std::size_t co = 0; co < cout; ++co) gb[co] += sums[co];
    }
    if (weight->requires_grad) {
      // dW[co][ci][tap] = sum over samples of dOut[co] . col[ci*27+tap], the
      // transposed-column product of the same unrolled matrix as the forward.
      const std::size_t slots = cout * cin * 27;
      auto sums = detail::slab_accumulate<T>(n, slots, [&](T* acc, std::size_t i) {
        auto& col = detail::conv_scratch<T>(0);
        col.resize(cin * 27 * dhw);
        detail::im2col_3x3(xv + i * cin * dhw, cin, d, h, w, col.data());
        if (tiny) {
          auto& colt = detail::conv_scratch<T>(1);
          colt.resize(dhw * cin * 27);
          detail::transpose(col.data(), cin * 27, dhw, colt.data());
          detail::gemm_nn<T>(gv + i * cout * dhw, colt.data(), acc, cout, dhw, cin * 27, nullptr, true);
        } else {
          detail::gemm_nt_acc(gv + i * cout * dhw, col.data(), acc, cout, cin * 27, dhw);
        }
      });
      T* gw = weight->ensure_grad().data();
      for (std::size_t k = 0; k < slots; ++k) gw[k] += sums[k];
    }
    if (x->requires_grad) {
      // Per-tap input gradients are dCol = W^T * dOut; col2im folds the 27
      // shifted rows back onto the input grid.
      const T* wv = weight->value.data();
      Tensor<T> wt({cin * 27, cout});
      T* wtv = wt.data();
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t k = 0; k < cin * 27; ++k) wtv[k * cout + co] = wv[co * cin * 27 + k];
      T* gx = x->ensure_grad().data();
      parallel_for(n, [&](std::size_t i) {
        auto& dcol = detail::conv_scratch<T>(1);
        dcol.resize(cin * 27 * dhw);
        if (tiny) {
          auto& got = detail::conv_scratch<T>(0);
          got.resize(dhw * cout);
          detail::transpose(gv + i * cout * dhw, cout, dhw, got.data());
          std::fill(dcol.begin(), dcol.end(), T(0));
          detail::gemm_nt_acc(wtv, got.data(), dcol.data(), cin * 27, dhw, cout);
        } else {
          detail::gemm_nn<T>(wtv, gv + i * cout * dhw, dcol.data(), cin * 27, cout, dhw, nullptr, false);
        }
        detail::col2im_add_3x3(dcol.data(), cin, d, h, w, gx + i * cin * dhw);
      });
    }
  });
}

// Batch normalization over [N][C][spatial...] with channel axis 1.  Batch
// statistics use the biased variance; running variance stores the unbiased
// estimate.  Statistics are accumulated in double regardless of T.
template <typename T>
struct BatchNorm3d {
  std::size_t channels = 0;
  T eps = static_cast<T>(1e-5);
  T momentum = static_cast<T>(0.1);
  NodePtr<T> gamma, beta;
  Tensor<T> running_mean, running_var;

  BatchNorm3d() = default;
  explicit BatchNorm3d(std::size_t c) : channels(c) {
    Tensor<T> g({c});
    g.fill(T(1));
    gamma = make_param(std::move(g));
    beta = make_param(Tensor<T>({c}));
    running_mean = Tensor<T>({c});
    running_var = Tensor<T>({c});
    running_var.fill(T(1));
  }

  NodePtr<T> forward(const NodePtr<T>& x, bool training) {
    const auto& xs = x->value.shape;
    if (xs.size() < 2 || xs[1] != channels)
      raise(ErrorKind::ShapeMismatch,
            "batchnorm: expected channel axis of " + std::to_string(channels) + ", got " + shape_string(xs));
    const std::size_t n = xs[0], c = channels;
    const std::size_t spatial = x->value.numel() / (n * c);
    const std::size_t m = n * spatial;

    Tensor<T> mean({c}), inv_std({c});
    if (training) {
      if (m < 2) raise(ErrorKind::InvalidConfig, "batchnorm: needs at least two values per channel in training");
      const T* xv = x->value.data();
      auto stats = detail::slab_accumulate<double>(n, 2 * c, [&](double* acc, std::size_t i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T* row = xv + (i * c + ch) * spatial;
          double s = 0, ss = 0;
          for (std::size_t k = 0; k < spatial; ++k) {
            const double v = row[k];
            s += v;
            ss += v * v;
          }
          acc[2 * ch] += s;
          acc[2 * ch + 1] += ss;
        }
      });
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double mu = stats[2 * ch] / m;
        double var = stats[2 * ch + 1] / m - mu * mu;
        if (var < 0) var = 0;
        mean.v[ch] = static_cast<T>(mu);
        inv_std.v[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        running_mean.v[ch] = (T(1) - momentum) * running_mean.v[ch] + momentum * static_cast<T>(mu);
        running_var.v[ch] =
            (T(1) - momentum) * running_var.v[ch] + momentum * static_cast<T>(var * m / (m - 1.0));
      }
    } else {
      for (std::size_t ch = 0; ch < c; ++ch) {
        mean.v[ch] = running_mean.v[ch];
        inv_std.v[ch] = T(1) / std::sqrt(running_var.v[ch] + eps);
      }
    }

    Tensor<T> out(xs);
    {
      const T* xv = x->value.data();
      T* ov = out.data();
      const T* gm = gamma->value.data();
      const T* bt = beta->value.data();
      parallel_for(n, [&](std::size_t i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T a = gm[ch] * inv_std.v[ch];
          const T b = bt[ch] - a * mean.v[ch];
          const T* xr = xv + (i * c + ch) * spatial;
          T* orow = ov + (i * c + ch) * spatial;
          for (std::size_t k = 0; k < spatial; ++k) orow[k] = a * xr[k] + b;
        }
      });
    }

    auto g = gamma;
    auto b = beta;
    return make_op<T>("batchnorm3d", std::move(out), {x, gamma, beta},
                      [=, mean = std::move(mean), inv_std = std::move(inv_std)](Node<T>& self) {
                        const T* gv = self.grad.data();
                        const T* xv = x->value.data();
                        // per channel: sum g and sum g*xhat
                        auto sums = detail::slab_accumulate<double>(n, 2 * c, [&](double* acc, std::size_t i) {
                          for (std::size_t ch = 0; ch < c; ++ch) {
                            const T* gr = gv + (i * c + ch) * spatial;
                            const T* xr = xv + (i * c + ch) * spatial;
                            const double mu = mean.v[ch], is = inv_std.v[ch];
                            double sg = 0, sgx = 0;
                            for (std::size_t k = 0; k < spatial; ++k) {
                              const double gg = gr[k];
                              sg += gg;
                              sgx += gg * (xr[k] - mu) * is;
                            }
                            acc[2 * ch] += sg;
                            acc[2 * ch + 1] += sgx;
                          }
                        });
                        if (b->requires_grad) {
                          T* gb = b->ensure_grad().data();
                          for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += static_cast<T>(sums[2 * ch]);
                        }
                        if (g->requires_grad) {
                          T* gg = g->ensure_grad().data();
                          for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += static_cast<T>(sums[2 * ch + 1]);
                        }
                        if (x->requires_grad) {
                          T* gx = x->ensure_grad().data();
                          const T* gmv = g->value.data();
                          parallel_for(n, [&](std::size_t i) {
                            for (std::size_t ch = 0; ch < c; ++ch) {
                              const double mu = mean.v[ch], is = inv_std.v[ch];
                              const double scale = gmv[ch] * is;
                              const double sg = sums[2 * ch], sgx = sums[2 * ch + 1];
                              const T* gr = gv + (i * c + ch) * spatial;
                              const T* xr = xv + (i * c + ch) * spatial;
                              T* gxr = gx + (i * c + ch) * spatial;
                              if (training) {
                                const double inv_m = 1.0 / static_cast<double>(m);
                                for (std::size_t k = 0; k < spatial; ++k) {
                                  const double xh = (xr[k] - mu) * is;
                                  gxr[k] += static_cast<T>(scale * (gr[k] - inv_m * (sg + xh * sgx)));
                                }
                              } else {
                                for (std::size_t k = 0; k < spatial; ++k)
                                  gxr[k] += static_cast<T>(scale * gr[k]);
                              }
                            }
                          });
                        }
                      });
  }
};

template <typename T>
NodePtr<T> relu(const NodePtr<T>& x) {
  Tensor<T> out(x->value.shape);
  const T* xv = x->value.data();
  T* ov = out.data();
  const std::size_t n = x->value.numel();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
  return make_op<T>("relu", std::move(out), {x}, [=](Node<T>& self) {
    if (!x->requires_grad) return;
    const T* gv = self.grad.data();
    const T* yv = self.value.data();
    T* gx = x->ensure_grad().data();
    for (std::size_t i = 0; i < n; ++i)
      if (yv[i] > T(0)) gx[i] += gv[i];
  });
}

namespace detail {

template <typename T>
void pool_shape(const Tensor<T>& x, std::size_t& n, std::size_t& c, std::size_t& d, std::size_t& h,
                std::size_t& w, const char* what) {
  const auto& s = x.shape;
  if (s.size() != 5) raise(ErrorKind::ShapeMismatch, std::string(what) + ": input must be rank 5");
  n = s[0];
  c = s[1];
  d = s[2];
  h = s[3];
  w = s[4];
  if (d < 2 || h < 2 || w < 2)
    raise(ErrorKind::ShapeMismatch, std::string(what) + ": spatial dims must be at least 2, got " + shape_string(s));
}

}  // namespace detail

// 2x2x2 max pooling, stride 2, floor semantics (trailing odd planes dropped).
// Ties resolve to the first element in (dz, dy, dx) scan order.
template <typename T>
NodePtr<T> maxpool3d(const NodePtr<T>& x) {
  std::size_t n, c, d, h, w;
  detail::pool_shape(x->value, n, c, d, h, w, "maxpool3d");
  const std::size_t d2 = d / 2, h2 = h / 2, w2 = w / 2;
  Tensor<T> out({n, c, d2, h2, w2});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.numel());
  if (x->value.numel() > std::numeric_limits<std::uint32_t>::max())
    raise(ErrorKind::ShapeMismatch, "maxpool3d: input too large");

  const T* xv = x->value.data();
  T* ov = out.data();
  std::uint32_t* am = argmax->data();
  const std::size_t in_chan = d * h * w, out_chan = d2 * h2 * w2;
  parallel_for(n * c, [&](std::size_t ic) {
    const T* in_c = xv + ic * in_chan;
    T* out_c = ov + ic * out_chan;
    std::uint32_t* am_c = am + ic * out_chan;
    for (std::size_t z = 0; z < d2; ++z)
      for (std::size_t y = 0; y < h2; ++y)
        for (std::size_t xx = 0; xx < w2; ++xx) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t dz = 0; dz < 2; ++dz)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t idx = ((2 * z + dz) * h + (2 * y + dy)) * w + (2 * xx + dx);
                if (in_c[idx] > best) {
                  best = in_c[idx];
                  best_idx = idx;
                }
              }
          out_c[(z * h2 + y) * w2 + xx] = best;
          am_c[(z * h2 + y) * w2 + xx] = static_cast<std::uint32_t>(ic * in_chan + best_idx);
        }
  });

  return make_op<T>("maxpool3d", std::move(out), {x}, [=](Node<T>& self) {
    if (!x->requires_grad) return;
    const T* gv = self.grad.data();
    T* gx = x->ensure_grad().data();
    const std::uint32_t* a = argmax->data();
    parallel_for(n * c, [&](std::size_t ic) {
      const std::size_t base = ic * out_chan;
      for (std::size_t k = 0; k < out_chan; ++k) gx[a[base + k]] += gv[base + k];
    });
  });
}

// 2x2x2 average pooling, stride 2, floor semantics.
template <typename T>
NodePtr<T> avgpool3d(const NodePtr<T>& x) {
  std::size_t n, c, d, h, w;
  detail::pool_shape(x->value, n, c, d, h, w, "avgpool3d");
  const std::size_t d2 = d / 2, h2 = h / 2, w2 = w / 2;
  Tensor<T> out({n, c, d2, h2, w2});
  const T* xv = x->value.data();
  T* ov = out.data();
  const std::size_t in_chan = d * h * w, out_chan = d2 * h2 * w2;
  parallel_for(n * c, [&](std::size_t ic) {
    const T* in_c = xv + ic * in_chan;
    T* out_c = ov + ic * out_chan;
    for (std::size_t z = 0; z < d2; ++z)
      for (std::size_t y = 0; y < h2; ++y)
        for (std::size_t xx = 0; xx < w2; ++xx) {
          T s = 0;
          for (std::size_t dz = 0; dz < 2; ++dz)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx)
                s += in_c[((2 * z + dz) * h + (2 * y + dy)) * w + (2 * xx + dx)];
          out_c[(z * h2 + y) * w2 + xx] = s / T(8);
        }
  });

  return make_op<T>("avgpool3d", std::move(out), {x}, [=](Node<T>& self) {
    if (!x->requires_grad) return;
    const T* gv = self.grad.data();
    T* gx = x->ensure_grad().data();
    parallel_for(n * c, [&](std::size_t ic) {
      const T* g_c = gv + ic * out_chan;
      T* gx_c = gx + ic * in_chan;
      for (std::size_t z = 0; z < d2; ++z)
        for (std::size_t y = 0; y < h2; ++y)
          for (std::size_t xx = 0; xx < w2; ++xx) {
            const T g8 = g_c[(z * h2 + y) * w2 + xx] / T(8);
            for (std::size_t dz = 0; dz < 2; ++dz)
              for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx)
                  gx_c[((2 * z + dz) * h + (2 * y + dy)) * w + (2 * xx + dx)] += g8;
          }
    });
  });
}

// Inverted dropout: elements kept with probability 1-rate and scaled by
// 1/(1-rate).  One uniform draw per element in flat order.  A no-op (returns
// the input node) when not training or rate == 0.
template <typename T>
NodePtr<T> dropout(const NodePtr<T>& x, double rate, Rng& rng, bool training) {
  if (rate < 0 || rate >= 1) raise(ErrorKind::InvalidConfig, "dropout: rate must be in [0, 1)");
  if (!training || rate == 0) return x;
  const std::size_t n = x->value.numel();
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(n);
  T* mv = mask->data();
  for (std::size_t i = 0; i < n; ++i) mv[i] = rng.uniform01() >= rate ? scale : T(0);
  Tensor<T> out(x->value.shape);
  const T* xv = x->value.data();
  T* ov = out.data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] * mv[i];
  return make_op<T>("dropout", std::move(out), {x}, [=](Node<T>& self) {
    if (!x->requires_grad) return;
    const T* gv = self.grad.data();
    const T* m = mask->data();
    T* gx = x->ensure_grad().data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += gv[i] * m[i];
  });
}

// Fully connected layer.  x: [N][In], weight: [Out][In], bias: [Out].
template <typename T>
NodePtr<T> linear(const NodePtr<T>& x, const NodePtr<T>& weight, const NodePtr<T>& bias) {
  const auto& xs = x->value.shape;
  const auto& ws = weight->value.shape;
  if (xs.size() != 2) raise(ErrorKind::ShapeMismatch, "linear: input must be rank 2, got " + shape_string(xs));
  if (ws.size() != 2 || ws[1] != xs[1])
    raise(ErrorKind::ShapeMismatch,
          "linear: weight " + shape_string(ws) + " does not match input " + shape_string(xs));
  if (bias->value.shape != std::vector<std::size_t>{ws[0]})
    raise(ErrorKind::ShapeMismatch, "linear: bias must be [Out]");

  const std::size_t n = xs[0], fin = xs[1], fout = ws[0];
  Tensor<T> out({n, fout});
  {
    const T* xv = x->value.data();
    const T* wv = weight->value.data();
    const T* bv = bias->value.data();
    T* ov = out.data();
    parallel_for(n, [&](std::size_t i) {
      const T* xr = xv + i * fin;
      T* orow = ov + i * fout;
      for (std::size_t o = 0; o < fout; ++o) {
        const T* wr = wv + o * fin;
        T s = bv[o];
        for (std::size_t k = 0; k < fin; ++k) s += wr[k] * xr[k];
        orow[o] = s;
      }
    });
  }

  return make_op<T>("linear", std::move(out), {x, weight, bias}, [=](Node<T>& self) {
    const T* gv = self.grad.data();
    const T* xv = x->value.data();
    if (bias->requires_grad) {
      auto sums = detail::slab_accumulate<T>(n, fout, [&](T* acc, std::size_t i) {
        const T* gr = gv + i * fout;
        for (std::size_t o = 0; o < fout; ++o) acc[o] += gr[o];
      });
      T* gb = bias->ensure_grad().data();
      for (std::size_t o = 0; o < fout; ++o) gb[o] += sums[o];
    }
    if (weight->requires_grad) {
      auto sums = detail::slab_accumulate<T>(n, fout * fin, [&](T* acc, std::size_t i) {
        const T* gr = gv + i * fout;
        const T* xr = xv + i * fin;
        for (std::size_t o = 0; o < fout; ++o) {
          const T g = gr[o];
          T* arow = acc + o * fin;
          for (std::size_t k = 0; k < fin; ++k) arow[k] += g * xr[k];
        }
      });
      T* gw = weight->ensure_grad().data();
      for (std::size_t k = 0; k < fout * fin; ++k) gw[k] += sums[k];
    }
    if (x->requires_grad) {
      const T* wv = weight->value.data();
      T* gx = x->ensure_grad().data();
      parallel_for(n, [&](std::size_t i) {
        const T* gr = gv + i * fout;
        T* gxr = gx + i * fin;
        for (std::size_t o = 0; o < fout; ++o) {
          const T g = gr[o];
          const T* wr = wv + o * fin;
          for (std::size_t k = 0; k < fin; ++k) gxr[k] += g * wr[k];
        }
      });
    }
  });
}

// Collapses [N][C][1][1]... to [N][C].
template <typename T>
NodePtr<T> flatten(const NodePtr<T>& x) {
  const auto& xs = x->value.shape;
  if (xs.size() < 2) raise(ErrorKind::ShapeMismatch, "flatten: input must be rank 2 or higher");
  const std::size_t n = xs[0];
  Tensor<T> out({n, x->value.numel() / n}, x->value.v);
  return make_op<T>("flatten", std::move(out), {x}, [=](Node<T>& self) {
    if (!x->requires_grad) return;
    const T* gv = self.grad.data();
    T* gx = x->ensure_grad().data();
    const std::size_t total = self.grad.numel();
    for (std::size_t i = 0; i < total; ++i) gx[i] += gv[i];
  });
}

// Mean over consecutive groups of rows: [B*G][F] -> [B][F].  Used to
// consolidate per-orientation features into one vector per molecule.
template <typename T>
NodePtr<T> group_mean(const NodePtr<T>& x, std::size_t group) {
  const auto& xs = x->value.shape;
  if (xs.size() != 2) raise(ErrorKind::ShapeMismatch, "group_mean: input must be rank 2, got " + shape_string(xs));
  if (group == 0 || xs[0] % group != 0)
    raise(ErrorKind::ShapeMismatch, "group_mean: " + std::to_string(xs[0]) + " rows not divisible by group " +
                                        std::to_string(group));
  const std::size_t b = xs[0] / group, f = xs[1];
  Tensor<T> out({b, f});
  const T* xv = x->value.data();
  T* ov = out.data();
  for (std::size_t i = 0; i < b; ++i) {
    T* orow = ov + i * f;
    for (std::size_t g = 0; g < group; ++g) {
      const T* xr = xv + (i * group + g) * f;
      for (std::size_t k = 0; k < f; ++k) orow[k] += xr[k];
    }
    for (std::size_t k = 0; k < f; ++k) orow[k] /= static_cast<T>(group);
  }
  return make_op<T>("group_mean", std::move(out), {x}, [=](Node<T>& self) {
    if (!x->requires_grad) return;
    const T* gv = self.grad.data();
    T* gx = x->ensure_grad().data();
    const T inv = T(1) / static_cast<T>(group);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t g = 0; g < group; ++g) {
        const T* gr = gv + i * f;
        T* gxr = gx + (i * group + g) * f;
        for (std::size_t k = 0; k < f; ++k) gxr[k] += gr[k] * inv;
      }
  });
}

// Mean of the numerically stable binary cross-entropy with logits over the
// masked entries:  l = max(z,0) - z*y + log1p(exp(-|z|)).  Returns 0 when the
// mask is empty.
template <typename T>
NodePtr<T> masked_bce_with_logits(const NodePtr<T>& logits, const Tensor<T>& labels, const Tensor<T>& mask) {
  require_same_shape(logits->value, labels, "masked_bce_with_logits: labels");
  require_same_shape(logits->value, mask, "masked_bce_with_logits: mask");
  const std::size_t total = logits->value.numel();
  const std::size_t rows = logits->value.shape.empty() ? 1 : logits->value.shape[0];
  const std::size_t row_len = total / rows;

  const T* zv = logits->value.data();
  const T* yv = labels.data();
  const T* mv = mask.data();
  auto sums = detail::slab_accumulate<double>(rows, 2, [&](double* acc, std::size_t i) {
    for (std::size_t k = i * row_len; k < (i + 1) * row_len; ++k) {
      const double m = mv[k];
      if (m == 0) continue;
      const double z = zv[k];
      const double term = std::max(z, 0.0) - z * static_cast<double>(yv[k]) + std::log1p(std::exp(-std::abs(z)));
      acc[0] += m * term;
      acc[1] += m;
    }
  });
  const double wsum = sums[1];
  Tensor<T> out({1});
  out.v[0] = wsum > 0 ? static_cast<T>(sums[0] / wsum) : T(0);

  auto labels_p = std::make_shared<Tensor<T>>(labels);
  auto mask_p = std::make_shared<Tensor<T>>(mask);
  return make_op<T>("masked_bce_with_logits", std::move(out), {logits}, [=](Node<T>& self) {
    if (!logits->requires_grad || wsum <= 0) return;
    const T g0 = self.grad.v[0];
    const T* z = logits->value.data();
    const T* y = labels_p->data();
    const T* m = mask_p->data();
    T* gz = logits->ensure_grad().data();
    const double inv = 1.0 / wsum;
    for (std::size_t k = 0; k < total; ++k) {
      if (m[k] == 0) continue;
      const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(z[k])));
      gz[k] += g0 * m[k] * static_cast<T>((sig - y[k]) * inv);
    }
  });
}

// Scalar sum_i w[i] * x[i]; diagnostic head for exercising single ops.
template <typename T>
NodePtr<T> weighted_sum(const NodePtr<T>& x, const Tensor<T>& w) {
  require_same_shape(x->value, w, "weighted_sum");
  const std::size_t n = x->value.numel();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(x->value.v[i]) * static_cast<double>(w.v[i]);
  Tensor<T> out({1});
  out.v[0] = static_cast<T>(s);
  auto wp = std::make_shared<Tensor<T>>(w);
  return make_op<T>("weighted_sum", std::move(out), {x}, [=](Node<T>& self) {
    if (!x->requires_grad) return;
    const T g0 = self.grad.v[0];
    T* gx = x->ensure_grad().data();
    const T* wv = wp->data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g0 * wv[i];
  });
}

}  // namespace deepnose
