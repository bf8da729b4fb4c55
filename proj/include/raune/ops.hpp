#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <vector>

#include "raune/autograd.hpp"
#include "raune/rng.hpp"
#include "raune/tensor.hpp"

namespace raune {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatRM<T>>;

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor<T> out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
    return make_result<T>(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        if (a->requires_grad) a->accumulate(g);
        if (b->requires_grad) b->accumulate(g);
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor<T> out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
    return make_result<T>(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        if (a->requires_grad) a->accumulate(g);
        if (b->requires_grad) {
            Tensor<T> gb(g.shape);
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] = -g[i];
            b->accumulate(gb);
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor<T> out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    return make_result<T>(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        if (a->requires_grad) {
            Tensor<T> ga(g.shape);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * b->value[i];
            a->accumulate(ga);
        }
        if (b->requires_grad) {
            Tensor<T> gb(g.shape);
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] = g[i] * a->value[i];
            b->accumulate(gb);
        }
    });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a->value, b->value, "div");
    Tensor<T> out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] / b->value[i];
    return make_result<T>(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        if (a->requires_grad) {
            Tensor<T> ga(g.shape);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] / b->value[i];
            a->accumulate(ga);
        }
        if (b->requires_grad) {
            Tensor<T> gb(g.shape);
            for (int64_t i = 0; i < g.numel(); ++i) {
                T bv = b->value[i];
                gb[i] = -g[i] * a->value[i] / (bv * bv);
            }
            b->accumulate(gb);
        }
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T c) {
    Tensor<T> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] + c;
    return make_result<T>(std::move(out), {x}, [x](const Tensor<T>& g) {
        if (x->requires_grad) x->accumulate(g);
    });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& x, T c) {
    Tensor<T> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] * c;
    return make_result<T>(std::move(out), {x}, [x, c](const Tensor<T>& g) {
        if (x->requires_grad) {
            Tensor<T> gx(g.shape);
            for (int64_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * c;
            x->accumulate(gx);
        }
    });
}

template <typename T>
Var<T> abs_value(const Var<T>& x) {
    Tensor<T> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::abs(x->value[i]);
    return make_result<T>(std::move(out), {x}, [x](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(g.shape);
        for (int64_t i = 0; i < g.numel(); ++i) {
            T v = x->value[i];
            gx[i] = v > T(0) ? g[i] : (v < T(0) ? -g[i] : T(0));
        }
        x->accumulate(gx);
    });
}

template <typename T>
Var<T> square(const Var<T>& x) {
    Tensor<T> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] * x->value[i];
    return make_result<T>(std::move(out), {x}, [x](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(g.shape);
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] = T(2) * g[i] * x->value[i];
        x->accumulate(gx);
    });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
    return make_result<T>(std::move(out), {x}, [x](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(g.shape);
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] = x->value[i] > T(0) ? g[i] : T(0);
        x->accumulate(gx);
    });
}

// negative_slope 0 degenerates to plain ReLU.
template <typename T>
Var<T> leaky_relu(const Var<T>& x, T negative_slope) {
    Tensor<T> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        T v = x->value[i];
        out[i] = v > T(0) ? v : negative_slope * v;
    }
    return make_result<T>(std::move(out), {x}, [x, negative_slope](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(g.shape);
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] = x->value[i] > T(0) ? g[i] : negative_slope * g[i];
        x->accumulate(gx);
    });
}

template <typename T>
Var<T> tanh_value(const Var<T>& x) {
    Tensor<T> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(x->value[i]);
    Tensor<T> saved = out;
    return make_result<T>(std::move(out), {x}, [x, saved = std::move(saved)](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(g.shape);
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * (T(1) - saved[i] * saved[i]);
        x->accumulate(gx);
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        T v = x->value[i];
        out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    }
    Tensor<T> saved = out;
    return make_result<T>(std::move(out), {x}, [x, saved = std::move(saved)](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(g.shape);
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * saved[i] * (T(1) - saved[i]);
        x->accumulate(gx);
    });
}

// ---------------------------------------------------------------------------
// Reductions and reshape
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum_all(const Var<T>& x) {
    T s = 0;
    for (int64_t i = 0; i < x->value.numel(); ++i) s += x->value[i];
    return make_result<T>(Tensor<T>::scalar(s), {x}, [x](const Tensor<T>& g) {
        if (x->requires_grad) x->accumulate(Tensor<T>::full(x->value.shape, g[0]));
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
    int64_t n = x->value.numel();
    T s = 0;
    for (int64_t i = 0; i < n; ++i) s += x->value[i];
    T m = n ? s / T(n) : T(0);
    return make_result<T>(Tensor<T>::scalar(m), {x}, [x, n](const Tensor<T>& g) {
        if (x->requires_grad) x->accumulate(Tensor<T>::full(x->value.shape, g[0] / T(n)));
    });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape s) {
    if (shape_numel(s) != x->value.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x->value.shape) + " as " + shape_str(s));
    Tensor<T> out;
    out.shape = std::move(s);
    out.data = x->value.data;
    return make_result<T>(std::move(out), {x}, [x](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx;
        gx.shape = x->value.shape;
        gx.data = g.data;
        x->accumulate(gx);
    });
}

// ---------------------------------------------------------------------------
// Padding
// ---------------------------------------------------------------------------

// Reflection padding without edge repetition; requires pad <= size - 1.
template <typename T>
Var<T> reflect_pad2d(const Var<T>& x, int pad) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4) throw ShapeError("reflect_pad2d: expected NCHW, got " + shape_str(v.shape));
    int64_t N = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
    if (pad > H - 1 || pad > W - 1)
        throw ShapeError("reflect_pad2d: pad " + std::to_string(pad) + " too large for " + shape_str(v.shape));
    Tensor<T> out({N, C, H + 2 * pad, W + 2 * pad});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t h = 0; h < H + 2 * pad; ++h) {
                int64_t sh = reflect_index(h - pad, H);
                for (int64_t w = 0; w < W + 2 * pad; ++w)
                    out.at(n, c, h, w) = v.at(n, c, sh, reflect_index(w - pad, W));
            }
    return make_result<T>(std::move(out), {x}, [x, pad, N, C, H, W](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx({N, C, H, W});
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t h = 0; h < H + 2 * pad; ++h) {
                    int64_t sh = reflect_index(h - pad, H);
                    for (int64_t w = 0; w < W + 2 * pad; ++w)
                        gx.at(n, c, sh, reflect_index(w - pad, W)) += g.at(n, c, h, w);
                }
        x->accumulate(gx);
    });
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)
// ---------------------------------------------------------------------------

namespace detail {

// col[(c*kh+r)*kw+s, gh*Wg+gw] = img[c, gh*stride - pad + r, gw*stride - pad + s], zero outside.
template <typename T>
void im2col(const T* img, int64_t C, int64_t H, int64_t W, int kh, int kw, int stride, int pad, int64_t Hg,
            int64_t Wg, T* col) {
    const int64_t P = Hg * Wg;
    for (int64_t c = 0; c < C; ++c)
        for (int r = 0; r < kh; ++r)
            for (int s = 0; s < kw; ++s) {
                T* dst = col + ((c * kh + r) * kw + s) * P;
                for (int64_t gh = 0; gh < Hg; ++gh) {
                    int64_t ih = gh * stride - pad + r;
                    T* drow = dst + gh * Wg;
                    if (ih < 0 || ih >= H) {
                        std::fill(drow, drow + Wg, T(0));
                        continue;
                    }
                    const T* srow = img + (c * H + ih) * W;
                    for (int64_t gw = 0; gw < Wg; ++gw) {
                        int64_t iw = gw * stride - pad + s;
                        drow[gw] = (iw >= 0 && iw < W) ? srow[iw] : T(0);
                    }
                }
            }
}

// Adjoint of im2col: scatter-adds columns back into the image.
template <typename T>
void col2im_add(const T* col, int64_t C, int64_t H, int64_t W, int kh, int kw, int stride, int pad, int64_t Hg,
                int64_t Wg, T* img) {
    const int64_t P = Hg * Wg;
    for (int64_t c = 0; c < C; ++c)
        for (int r = 0; r < kh; ++r)
            for (int s = 0; s < kw; ++s) {
                const T* src = col + ((c * kh + r) * kw + s) * P;
                for (int64_t gh = 0; gh < Hg; ++gh) {
                    int64_t ih = gh * stride - pad + r;
                    if (ih < 0 || ih >= H) continue;
                    T* drow = img + (c * H + ih) * W;
                    const T* srow = src + gh * Wg;
                    for (int64_t gw = 0; gw < Wg; ++gw) {
                        int64_t iw = gw * stride - pad + s;
                        if (iw >= 0 && iw < W) drow[iw] += srow[gw];
                    }
                }
            }
}

}  // namespace detail

// x: (N, Cin, H, W), w: (Cout, Cin, kh, kw), optional b: (Cout). Zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    const Tensor<T>& xv = x->value;
    const Tensor<T>& wv = w->value;
    if (xv.rank() != 4 || wv.rank() != 4) throw ShapeError("conv2d: expected rank-4 input and weight");
    int64_t N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    int64_t Cout = wv.dim(0);
    int kh = int(wv.dim(2)), kw = int(wv.dim(3));
    if (wv.dim(1) != Cin)
        throw ShapeError("conv2d: input channels " + std::to_string(Cin) + " != weight channels " +
                         std::to_string(wv.dim(1)));
    if (b && b->value.numel() != Cout) throw ShapeError("conv2d: bias size mismatch");
    int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho < 1 || Wo < 1) throw ShapeError("conv2d: kernel larger than padded input");
    const int64_t K = Cin * kh * kw, P = Ho * Wo;

    Tensor<T> out({N, Cout, Ho, Wo});
    std::vector<T> col(size_t(K * P));
    CMapM<T> Wm(wv.data.data(), Cout, K);
    for (int64_t n = 0; n < N; ++n) {
        detail::im2col(xv.data.data() + n * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
        CMapM<T> Cm(col.data(), K, P);
        MapM<T> Ym(out.data.data() + n * Cout * P, Cout, P);
        Ym.noalias() = Wm * Cm;
        if (b)
            for (int64_t co = 0; co < Cout; ++co) Ym.row(co).array() += b->value[co];
    }

    std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
    return make_result<T>(std::move(out), std::move(parents),
                          [x, w, b, N, Cin, H, W, Cout, kh, kw, stride, pad, Ho, Wo, K, P](const Tensor<T>& g) {
                              std::vector<T> col(size_t(K * P));
                              CMapM<T> Wm(w->value.data.data(), Cout, K);
                              Tensor<T> dw, dx;
                              if (w->requires_grad) dw = Tensor<T>(w->value.shape);
                              if (x->requires_grad) dx = Tensor<T>(x->value.shape);
                              for (int64_t n = 0; n < N; ++n) {
                                  CMapM<T> Gm(g.data.data() + n * Cout * P, Cout, P);
                                  if (w->requires_grad) {
                                      detail::im2col(x->value.data.data() + n * Cin * H * W, Cin, H, W, kh, kw,
                                                     stride, pad, Ho, Wo, col.data());
                                      CMapM<T> Cm(col.data(), K, P);
                                      MapM<T> Dw(dw.data.data(), Cout, K);
                                      Dw.noalias() += Gm * Cm.transpose();
                                  }
                                  if (x->requires_grad) {
                                      MapM<T> Dcol(col.data(), K, P);
                                      Dcol.noalias() = Wm.transpose() * Gm;
                                      detail::col2im_add(col.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                                                         dx.data.data() + n * Cin * H * W);
                                  }
                              }
                              if (w->requires_grad) w->accumulate(dw);
                              if (x->requires_grad) x->accumulate(dx);
                              if (b && b->requires_grad) {
                                  Tensor<T> db(b->value.shape);
                                  for (int64_t n = 0; n < N; ++n)
                                      for (int64_t co = 0; co < Cout; ++co) {
                                          const T* gp = g.data.data() + (n * Cout + co) * P;
                                          T s = 0;
                                          for (int64_t p = 0; p < P; ++p) s += gp[p];
                                          db[co] += s;
                                      }
                                  b->accumulate(db);
                              }
                          });
}

// x: (N, Cin, H, W), w: (Cin, Cout, kh, kw), optional b: (Cout).
// Output spatial size: (H-1)*stride - 2*pad + kh.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    const Tensor<T>& xv = x->value;
    const Tensor<T>& wv = w->value;
    if (xv.rank() != 4 || wv.rank() != 4) throw ShapeError("conv_transpose2d: expected rank-4 input and weight");
    int64_t N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    int64_t Cout = wv.dim(1);
    int kh = int(wv.dim(2)), kw = int(wv.dim(3));
    if (wv.dim(0) != Cin) throw ShapeError("conv_transpose2d: input/weight channel mismatch");
    if (b && b->value.numel() != Cout) throw ShapeError("conv_transpose2d: bias size mismatch");
    int64_t Ho = (H - 1) * stride - 2 * pad + kh;
    int64_t Wo = (W - 1) * stride - 2 * pad + kw;
    if (Ho < 1 || Wo < 1) throw ShapeError("conv_transpose2d: degenerate output size");
    const int64_t K = Cout * kh * kw, P = H * W;

    Tensor<T> out({N, Cout, Ho, Wo});
    std::vector<T> col(size_t(K * P));
    CMapM<T> Wm(wv.data.data(), Cin, K);
    for (int64_t n = 0; n < N; ++n) {
        CMapM<T> Xm(xv.data.data() + n * Cin * P, Cin, P);
        MapM<T> Cm(col.data(), K, P);
        Cm.noalias() = Wm.transpose() * Xm;
        T* yp = out.data.data() + n * Cout * Ho * Wo;
        detail::col2im_add(col.data(), Cout, Ho, Wo, kh, kw, stride, pad, H, W, yp);
        if (b)
            for (int64_t co = 0; co < Cout; ++co) {
                T* row = yp + co * Ho * Wo;
                for (int64_t i = 0; i < Ho * Wo; ++i) row[i] += b->value[co];
            }
    }

    std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
    return make_result<T>(std::move(out), std::move(parents),
                          [x, w, b, N, Cin, H, W, Cout, kh, kw, stride, pad, Ho, Wo, K, P](const Tensor<T>& g) {
                              std::vector<T> dcol(size_t(K * P));
                              CMapM<T> Wm(w->value.data.data(), Cin, K);
                              Tensor<T> dw, dx;
                              if (w->requires_grad) dw = Tensor<T>(w->value.shape);
                              if (x->requires_grad) dx = Tensor<T>(x->value.shape);
                              for (int64_t n = 0; n < N; ++n) {
                                  detail::im2col(g.data.data() + n * Cout * Ho * Wo, Cout, Ho, Wo, kh, kw, stride,
                                                 pad, H, W, dcol.data());
                                  CMapM<T> Dcol(dcol.data(), K, P);
                                  if (x->requires_grad) {
                                      MapM<T> Dx(dx.data.data() + n * Cin * P, Cin, P);
                                      Dx.noalias() = Wm * Dcol;
                                  }
                                  if (w->requires_grad) {
                                      CMapM<T> Xm(x->value.data.data() + n * Cin * P, Cin, P);
                                      MapM<T> Dw(dw.data.data(), Cin, K);
                                      Dw.noalias() += Xm * Dcol.transpose();
                                  }
                              }
                              if (x->requires_grad) x->accumulate(dx);
                              if (w->requires_grad) w->accumulate(dw);
                              if (b && b->requires_grad) {
                                  Tensor<T> db(b->value.shape);
                                  for (int64_t n = 0; n < N; ++n)
                                      for (int64_t co = 0; co < Cout; ++co) {
                                          const T* gp = g.data.data() + (n * Cout + co) * Ho * Wo;
                                          T s = 0;
                                          for (int64_t i = 0; i < Ho * Wo; ++i) s += gp[i];
                                          db[co] += s;
                                      }
                                  b->accumulate(db);
                              }
                          });
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

namespace detail {

// Shared normalization backward over a contiguous-index group:
// dx = inv_std * (g - mean(g) - xhat * mean(g * xhat))
template <typename T, typename GroupIndex>
void norm_backward_group(const Tensor<T>& g, const Tensor<T>& xhat, T inv_std, int64_t count, GroupIndex index,
                         Tensor<T>& gx) {
    T gsum = 0, gxsum = 0;
    for (int64_t i = 0; i < count; ++i) {
        int64_t k = index(i);
        gsum += g[k];
        gxsum += g[k] * xhat[k];
    }
    T gmean = gsum / T(count), gxmean = gxsum / T(count);
    for (int64_t i = 0; i < count; ++i) {
        int64_t k = index(i);
        gx[k] = inv_std * (g[k] - gmean - xhat[k] * gxmean);
    }
}

}  // namespace detail

// Per-sample, per-channel normalization over spatial positions (no affine
// parameters, no running statistics: evaluation uses instance statistics too).
template <typename T>
Var<T> instance_norm2d(const Var<T>& x, T eps = T(1e-5)) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4) throw ShapeError("instance_norm2d: expected NCHW");
    int64_t N = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
    int64_t M = H * W;
    Tensor<T> out(v.shape);
    Tensor<T> inv({N, C});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T* src = v.data.data() + (n * C + c) * M;
            T* dst = out.data.data() + (n * C + c) * M;
            T mean = 0;
            for (int64_t i = 0; i < M; ++i) mean += src[i];
            mean /= T(M);
            T var = 0;
            for (int64_t i = 0; i < M; ++i) {
                T d = src[i] - mean;
                var += d * d;
            }
            var /= T(M);
            T is = T(1) / std::sqrt(var + eps);
            inv[n * C + c] = is;
            for (int64_t i = 0; i < M; ++i) dst[i] = (src[i] - mean) * is;
        }
    Tensor<T> xhat = out;
    return make_result<T>(std::move(out), {x},
                          [x, N, C, M, inv = std::move(inv), xhat = std::move(xhat)](const Tensor<T>& g) {
                              if (!x->requires_grad) return;
                              Tensor<T> gx(x->value.shape);
                              for (int64_t n = 0; n < N; ++n)
                                  for (int64_t c = 0; c < C; ++c) {
                                      int64_t base = (n * C + c) * M;
                                      detail::norm_backward_group(
                                          g, xhat, inv[n * C + c], M, [base](int64_t i) { return base + i; }, gx);
                                  }
                              x->accumulate(gx);
                          });
}

// Per-channel normalization over (N, H, W) using the batch statistics of the
// current input (no affine, no running statistics).
template <typename T>
Var<T> batch_norm2d(const Var<T>& x, T eps = T(1e-5)) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4) throw ShapeError("batch_norm2d: expected NCHW");
    int64_t N = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
    int64_t M = H * W, count = N * M;
    Tensor<T> out(v.shape);
    Tensor<T> inv({C});
    for (int64_t c = 0; c < C; ++c) {
        T mean = 0;
        for (int64_t n = 0; n < N; ++n) {
            const T* src = v.data.data() + (n * C + c) * M;
            for (int64_t i = 0; i < M; ++i) mean += src[i];
        }
        mean /= T(count);
        T var = 0;
        for (int64_t n = 0; n < N; ++n) {
            const T* src = v.data.data() + (n * C + c) * M;
            for (int64_t i = 0; i < M; ++i) {
                T d = src[i] - mean;
                var += d * d;
            }
        }
        var /= T(count);
        T is = T(1) / std::sqrt(var + eps);
        inv[c] = is;
        for (int64_t n = 0; n < N; ++n) {
            const T* src = v.data.data() + (n * C + c) * M;
            T* dst = out.data.data() + (n * C + c) * M;
            for (int64_t i = 0; i < M; ++i) dst[i] = (src[i] - mean) * is;
        }
    }
    Tensor<T> xhat = out;
    return make_result<T>(std::move(out), {x},
                          [x, N, C, M, inv = std::move(inv), xhat = std::move(xhat)](const Tensor<T>& g) {
                              if (!x->requires_grad) return;
                              Tensor<T> gx(x->value.shape);
                              for (int64_t c = 0; c < C; ++c) {
                                  detail::norm_backward_group(
                                      g, xhat, inv[c], N * M,
                                      [C, M, c](int64_t i) { return ((i / M) * C + c) * M + (i % M); }, gx);
                              }
                              x->accumulate(gx);
                          });
}

// y[n,c,:,:] = x[n,c,:,:] * scale[c] + shift[c] with constant per-channel terms.
template <typename T>
Var<T> channel_affine(const Var<T>& x, Tensor<T> scale, Tensor<T> shift) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4) throw ShapeError("channel_affine: expected NCHW");
    int64_t N = v.dim(0), C = v.dim(1), M = v.dim(2) * v.dim(3);
    if (scale.numel() != C || shift.numel() != C) throw ShapeError("channel_affine: per-channel term size mismatch");
    Tensor<T> out(v.shape);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T* src = v.data.data() + (n * C + c) * M;
            T* dst = out.data.data() + (n * C + c) * M;
            for (int64_t i = 0; i < M; ++i) dst[i] = src[i] * scale[c] + shift[c];
        }
    return make_result<T>(std::move(out), {x}, [x, N, C, M, scale = std::move(scale)](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(x->value.shape);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                const T* gp = g.data.data() + (n * C + c) * M;
                T* dst = gx.data.data() + (n * C + c) * M;
                for (int64_t i = 0; i < M; ++i) dst[i] = gp[i] * scale[c];
            }
        x->accumulate(gx);
    });
}

// Frozen batch-norm in inference form: y = (x - mean) / sqrt(var + eps) * gamma + beta,
// all statistics and affine terms constant (pretrained backbone use).
template <typename T>
Var<T> batch_norm2d_frozen(const Var<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, const Tensor<T>& mean,
                           const Tensor<T>& var, T eps = T(1e-5)) {
    int64_t C = x->value.rank() == 4 ? x->value.dim(1) : -1;
    if (gamma.numel() != C || beta.numel() != C || mean.numel() != C || var.numel() != C)
        throw ShapeError("batch_norm2d_frozen: per-channel parameter size mismatch");
    Tensor<T> scale({C}), shift({C});
    for (int64_t c = 0; c < C; ++c) {
        scale[c] = gamma[c] / std::sqrt(var[c] + eps);
        shift[c] = beta[c] - mean[c] * scale[c];
    }
    return channel_affine(x, std::move(scale), std::move(shift));
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

// Inverted dropout; identity when p == 0. Mask order is a pure function of the
// Rng state, so seeded runs reproduce exactly.
template <typename T>
Var<T> dropout(const Var<T>& x, double p, Rng& rng) {
    if (p <= 0.0) return x;
    if (p >= 1.0) throw ConfigError("dropout_p: must be in [0, 1)");
    Tensor<T> mask(x->value.shape);
    T keep_scale = T(1.0 / (1.0 - p));
    for (auto& m : mask.data) m = rng.uniform() >= p ? keep_scale : T(0);
    Tensor<T> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] * mask[i];
    return make_result<T>(std::move(out), {x}, [x, mask = std::move(mask)](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(g.shape);
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * mask[i];
        x->accumulate(gx);
    });
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4) throw ShapeError("global_avg_pool: expected NCHW");
    int64_t N = v.dim(0), C = v.dim(1), M = v.dim(2) * v.dim(3);
    Tensor<T> out({N, C});
    for (int64_t j = 0; j < N * C; ++j) {
        const T* src = v.data.data() + j * M;
        T s = 0;
        for (int64_t i = 0; i < M; ++i) s += src[i];
        out[j] = s / T(M);
    }
    return make_result<T>(std::move(out), {x}, [x, N, C, M](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(x->value.shape);
        for (int64_t j = 0; j < N * C; ++j) {
            T gv = g[j] / T(M);
            T* dst = gx.data.data() + j * M;
            for (int64_t i = 0; i < M; ++i) dst[i] = gv;
        }
        x->accumulate(gx);
    });
}

template <typename T>
Var<T> global_max_pool(const Var<T>& x) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4) throw ShapeError("global_max_pool: expected NCHW");
    int64_t N = v.dim(0), C = v.dim(1), M = v.dim(2) * v.dim(3);
    Tensor<T> out({N, C});
    std::vector<int64_t> arg(size_t(N * C));
    for (int64_t j = 0; j < N * C; ++j) {
        const T* src = v.data.data() + j * M;
        int64_t best = 0;
        for (int64_t i = 1; i < M; ++i)
            if (src[i] > src[best]) best = i;
        out[j] = src[best];
        arg[size_t(j)] = best;
    }
    return make_result<T>(std::move(out), {x}, [x, N, C, M, arg = std::move(arg)](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(x->value.shape);
        for (int64_t j = 0; j < N * C; ++j) gx[j * M + arg[size_t(j)]] += g[j];
        x->accumulate(gx);
    });
}

// 2x2 max pooling with stride 2 (backbone feature extraction).
template <typename T>
Var<T> max_pool2d_2x2(const Var<T>& x) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4) throw ShapeError("max_pool2d_2x2: expected NCHW");
    int64_t N = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
    if (H % 2 || W % 2) throw ShapeError("max_pool2d_2x2: H and W must be even, got " + shape_str(v.shape));
    int64_t Ho = H / 2, Wo = W / 2;
    Tensor<T> out({N, C, Ho, Wo});
    std::vector<int64_t> arg(size_t(out.numel()));
    int64_t o = 0;
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* plane = v.data.data() + nc * H * W;
        for (int64_t oh = 0; oh < Ho; ++oh)
            for (int64_t ow = 0; ow < Wo; ++ow, ++o) {
                int64_t i0 = (2 * oh) * W + 2 * ow;
                int64_t cand[4] = {i0, i0 + 1, i0 + W, i0 + W + 1};
                int64_t best = cand[0];
                for (int k = 1; k < 4; ++k)
                    if (plane[cand[k]] > plane[best]) best = cand[k];
                out[o] = plane[best];
                arg[size_t(o)] = nc * H * W + best;
            }
    }
    return make_result<T>(std::move(out), {x}, [x, arg = std::move(arg)](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(x->value.shape);
        for (int64_t i = 0; i < g.numel(); ++i) gx[arg[size_t(i)]] += g[i];
        x->accumulate(gx);
    });
}

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

// x: (N, Fin), w: (Fout, Fin) -> (N, Fout). No bias (attention bottlenecks).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w) {
    const Tensor<T>& xv = x->value;
    const Tensor<T>& wv = w->value;
    if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
        throw ShapeError("linear: incompatible shapes " + shape_str(xv.shape) + " x " + shape_str(wv.shape));
    int64_t N = xv.dim(0), Fin = xv.dim(1), Fout = wv.dim(0);
    Tensor<T> out({N, Fout});
    CMapM<T> Xm(xv.data.data(), N, Fin), Wm(wv.data.data(), Fout, Fin);
    MapM<T> Ym(out.data.data(), N, Fout);
    Ym.noalias() = Xm * Wm.transpose();
    return make_result<T>(std::move(out), {x, w}, [x, w, N, Fin, Fout](const Tensor<T>& g) {
        CMapM<T> Gm(g.data.data(), N, Fout);
        if (x->requires_grad) {
            Tensor<T> gx(x->value.shape);
            MapM<T> Gx(gx.data.data(), N, Fin);
            CMapM<T> Wm(w->value.data.data(), Fout, Fin);
            Gx.noalias() = Gm * Wm;
            x->accumulate(gx);
        }
        if (w->requires_grad) {
            Tensor<T> gw(w->value.shape);
            MapM<T> Gw(gw.data.data(), Fout, Fin);
            CMapM<T> Xm(x->value.data.data(), N, Fin);
            Gw.noalias() = Gm.transpose() * Xm;
            w->accumulate(gw);
        }
    });
}

// ---------------------------------------------------------------------------
// Broadcast scaling and channel statistics (attention plumbing)
// ---------------------------------------------------------------------------

// x: (N, C, H, W) scaled per channel by s holding N*C values ((N,C) or (N,C,1,1)).
template <typename T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& s) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4) throw ShapeError("scale_channels: expected NCHW");
    int64_t N = v.dim(0), C = v.dim(1), M = v.dim(2) * v.dim(3);
    if (s->value.numel() != N * C) throw ShapeError("scale_channels: weight size mismatch");
    Tensor<T> out(v.shape);
    for (int64_t j = 0; j < N * C; ++j) {
        const T* src = v.data.data() + j * M;
        T* dst = out.data.data() + j * M;
        T sv = s->value[j];
        for (int64_t i = 0; i < M; ++i) dst[i] = src[i] * sv;
    }
    return make_result<T>(std::move(out), {x, s}, [x, s, N, C, M](const Tensor<T>& g) {
        if (x->requires_grad) {
            Tensor<T> gx(x->value.shape);
            for (int64_t j = 0; j < N * C; ++j) {
                const T* gp = g.data.data() + j * M;
                T* dst = gx.data.data() + j * M;
                T sv = s->value[j];
                for (int64_t i = 0; i < M; ++i) dst[i] = gp[i] * sv;
            }
            x->accumulate(gx);
        }
        if (s->requires_grad) {
            Tensor<T> gs(s->value.shape);
            for (int64_t j = 0; j < N * C; ++j) {
                const T* gp = g.data.data() + j * M;
                const T* src = x->value.data.data() + j * M;
                T acc = 0;
                for (int64_t i = 0; i < M; ++i) acc += gp[i] * src[i];
                gs[j] = acc;
            }
            s->accumulate(gs);
        }
    });
}

// x: (N, C, H, W) scaled per spatial position by m: (N, 1, H, W).
template <typename T>
Var<T> scale_spatial(const Var<T>& x, const Var<T>& m) {
    const Tensor<T>& v = x->value;
    const Tensor<T>& mv = m->value;
    if (v.rank() != 4 || mv.rank() != 4) throw ShapeError("scale_spatial: expected NCHW");
    int64_t N = v.dim(0), C = v.dim(1), M = v.dim(2) * v.dim(3);
    if (mv.dim(0) != N || mv.dim(1) != 1 || mv.dim(2) != v.dim(2) || mv.dim(3) != v.dim(3))
        throw ShapeError("scale_spatial: map shape mismatch " + shape_str(mv.shape));
    Tensor<T> out(v.shape);
    for (int64_t n = 0; n < N; ++n) {
        const T* mp = mv.data.data() + n * M;
        for (int64_t c = 0; c < C; ++c) {
            const T* src = v.data.data() + (n * C + c) * M;
            T* dst = out.data.data() + (n * C + c) * M;
            for (int64_t i = 0; i < M; ++i) dst[i] = src[i] * mp[i];
        }
    }
    return make_result<T>(std::move(out), {x, m}, [x, m, N, C, M](const Tensor<T>& g) {
        if (x->requires_grad) {
            Tensor<T> gx(x->value.shape);
            for (int64_t n = 0; n < N; ++n) {
                const T* mp = m->value.data.data() + n * M;
                for (int64_t c = 0; c < C; ++c) {
                    const T* gp = g.data.data() + (n * C + c) * M;
                    T* dst = gx.data.data() + (n * C + c) * M;
                    for (int64_t i = 0; i < M; ++i) dst[i] = gp[i] * mp[i];
                }
            }
            x->accumulate(gx);
        }
        if (m->requires_grad) {
            Tensor<T> gm(m->value.shape);
            for (int64_t n = 0; n < N; ++n) {
                T* dst = gm.data.data() + n * M;
                for (int64_t c = 0; c < C; ++c) {
                    const T* gp = g.data.data() + (n * C + c) * M;
                    const T* src = x->value.data.data() + (n * C + c) * M;
                    for (int64_t i = 0; i < M; ++i) dst[i] += gp[i] * src[i];
                }
            }
            m->accumulate(gm);
        }
    });
}

template <typename T>
Var<T> channel_mean(const Var<T>& x) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4) throw ShapeError("channel_mean: expected NCHW");
    int64_t N = v.dim(0), C = v.dim(1), M = v.dim(2) * v.dim(3);
    Tensor<T> out({N, 1, v.dim(2), v.dim(3)});
    for (int64_t n = 0; n < N; ++n) {
        T* dst = out.data.data() + n * M;
        for (int64_t c = 0; c < C; ++c) {
            const T* src = v.data.data() + (n * C + c) * M;
            for (int64_t i = 0; i < M; ++i) dst[i] += src[i];
        }
        for (int64_t i = 0; i < M; ++i) dst[i] /= T(C);
    }
    return make_result<T>(std::move(out), {x}, [x, N, C, M](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(x->value.shape);
        for (int64_t n = 0; n < N; ++n) {
            const T* gp = g.data.data() + n * M;
            for (int64_t c = 0; c < C; ++c) {
                T* dst = gx.data.data() + (n * C + c) * M;
                for (int64_t i = 0; i < M; ++i) dst[i] = gp[i] / T(C);
            }
        }
        x->accumulate(gx);
    });
}

template <typename T>
Var<T> channel_max(const Var<T>& x) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4) throw ShapeError("channel_max: expected NCHW");
    int64_t N = v.dim(0), C = v.dim(1), M = v.dim(2) * v.dim(3);
    Tensor<T> out({N, 1, v.dim(2), v.dim(3)});
    std::vector<int64_t> arg(size_t(N * M));
    for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < M; ++i) {
            int64_t best = 0;
            T bv = v.data[size_t((n * C) * M + i)];
            for (int64_t c = 1; c < C; ++c) {
                T cv = v.data[size_t((n * C + c) * M + i)];
                if (cv > bv) {
                    bv = cv;
                    best = c;
                }
            }
            out[n * M + i] = bv;
            arg[size_t(n * M + i)] = best;
        }
    return make_result<T>(std::move(out), {x}, [x, N, C, M, arg = std::move(arg)](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(x->value.shape);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t i = 0; i < M; ++i) gx[(n * C + arg[size_t(n * M + i)]) * M + i] += g[n * M + i];
        x->accumulate(gx);
    });
}

// Concatenate two NCHW tensors along the channel axis.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
    const Tensor<T>& av = a->value;
    const Tensor<T>& bv = b->value;
    if (av.rank() != 4 || bv.rank() != 4 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) ||
        av.dim(3) != bv.dim(3))
        throw ShapeError("concat_channels: incompatible shapes " + shape_str(av.shape) + " vs " +
                         shape_str(bv.shape));
    int64_t N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), M = av.dim(2) * av.dim(3);
    Tensor<T> out({N, Ca + Cb, av.dim(2), av.dim(3)});
    for (int64_t n = 0; n < N; ++n) {
        std::copy_n(av.data.data() + n * Ca * M, Ca * M, out.data.data() + n * (Ca + Cb) * M);
        std::copy_n(bv.data.data() + n * Cb * M, Cb * M, out.data.data() + (n * (Ca + Cb) + Ca) * M);
    }
    return make_result<T>(std::move(out), {a, b}, [a, b, N, Ca, Cb, M](const Tensor<T>& g) {
        if (a->requires_grad) {
            Tensor<T> ga(a->value.shape);
            for (int64_t n = 0; n < N; ++n)
                std::copy_n(g.data.data() + n * (Ca + Cb) * M, Ca * M, ga.data.data() + n * Ca * M);
            a->accumulate(ga);
        }
        if (b->requires_grad) {
            Tensor<T> gb(b->value.shape);
            for (int64_t n = 0; n < N; ++n)
                std::copy_n(g.data.data() + (n * (Ca + Cb) + Ca) * M, Cb * M, gb.data.data() + n * Cb * M);
            b->accumulate(gb);
        }
    });
}

// ---------------------------------------------------------------------------
// Constant-kernel depthwise filtering (windowed statistics for SSIM)
// ---------------------------------------------------------------------------

// Applies the same 2-D kernel to every channel, valid mode (no padding).
// The kernel is a constant, not a trainable parameter.
template <typename T>
Var<T> depthwise_filter2d(const Var<T>& x, const Tensor<T>& kernel) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4 || kernel.rank() != 2) throw ShapeError("depthwise_filter2d: expected NCHW input, 2-D kernel");
    int64_t N = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
    int64_t kh = kernel.dim(0), kw = kernel.dim(1);
    if (kh > H || kw > W)
        throw ShapeError("depthwise_filter2d: window " + shape_str(kernel.shape) + " larger than image " +
                         shape_str(v.shape));
    int64_t Ho = H - kh + 1, Wo = W - kw + 1;
    Tensor<T> out({N, C, Ho, Wo});
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* plane = v.data.data() + nc * H * W;
        T* dst = out.data.data() + nc * Ho * Wo;
        for (int64_t oh = 0; oh < Ho; ++oh)
            for (int64_t ow = 0; ow < Wo; ++ow) {
                T acc = 0;
                for (int64_t r = 0; r < kh; ++r) {
                    const T* srow = plane + (oh + r) * W + ow;
                    const T* krow = kernel.data.data() + r * kw;
                    for (int64_t s = 0; s < kw; ++s) acc += srow[s] * krow[s];
                }
                dst[oh * Wo + ow] = acc;
            }
    }
    return make_result<T>(std::move(out), {x}, [x, kernel, N, C, H, W, kh, kw, Ho, Wo](const Tensor<T>& g) {
        if (!x->requires_grad) return;
        Tensor<T> gx(x->value.shape);
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const T* gp = g.data.data() + nc * Ho * Wo;
            T* dst = gx.data.data() + nc * H * W;
            for (int64_t oh = 0; oh < Ho; ++oh)
                for (int64_t ow = 0; ow < Wo; ++ow) {
                    T gv = gp[oh * Wo + ow];
                    for (int64_t r = 0; r < kh; ++r) {
                        T* drow = dst + (oh + r) * W + ow;
                        const T* krow = kernel.data.data() + r * kw;
                        for (int64_t s = 0; s < kw; ++s) drow[s] += gv * krow[s];
                    }
                }
        }
        x->accumulate(gx);
    });
}

}  // namespace raune
