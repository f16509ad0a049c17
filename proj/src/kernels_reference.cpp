// Serial reference kernels. Plain nested loops, no threading; kept as the
// ground truth the OpenMP variants are tested against.

#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels_common.hpp"
#include "medseg/kernels.hpp"

namespace medseg::kernels::reference {

void conv2d_forward(const Tensor& x, const Tensor& w, Tensor& y, long stride, long pad) {
    detail::check_conv_shapes(x, w, y, stride, pad);
    const long B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const long Co = w.dim(0), Kh = w.dim(2), Kw = w.dim(3);
    const long Ho = y.dim(2), Wo = y.dim(3);
    for (long b = 0; b < B; ++b)
        for (long co = 0; co < Co; ++co)
            for (long ho = 0; ho < Ho; ++ho)
                for (long wo = 0; wo < Wo; ++wo) {
                    double acc = 0.0;
                    for (long ci = 0; ci < Ci; ++ci)
                        for (long kh = 0; kh < Kh; ++kh) {
                            const long iy = ho * stride - pad + kh;
                            if (iy < 0 || iy >= H) continue;
                            for (long kw = 0; kw < Kw; ++kw) {
                                const long ix = wo * stride - pad + kw;
                                if (ix < 0 || ix >= W) continue;
                                acc += x.at4(b, ci, iy, ix) * w.at4(co, ci, kh, kw);
                            }
                        }
                    y.at4(b, co, ho, wo) = acc;
                }
}

void conv2d_backward_input(const Tensor& gy, const Tensor& w, Tensor& gx, long stride, long pad) {
    detail::check_conv_shapes(gx, w, gy, stride, pad);
    const long B = gx.dim(0), Ci = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
    const long Co = w.dim(0), Kh = w.dim(2), Kw = w.dim(3);
    const long Ho = gy.dim(2), Wo = gy.dim(3);
    for (long b = 0; b < B; ++b)
        for (long ci = 0; ci < Ci; ++ci)
            for (long iy = 0; iy < H; ++iy)
                for (long ix = 0; ix < W; ++ix) {
                    double acc = 0.0;
                    for (long co = 0; co < Co; ++co)
                        for (long kh = 0; kh < Kh; ++kh) {
                            const long ty = iy + pad - kh;
                            if (ty < 0 || ty % stride != 0) continue;
                            const long ho = ty / stride;
                            if (ho >= Ho) continue;
                            for (long kw = 0; kw < Kw; ++kw) {
                                const long tx = ix + pad - kw;
                                if (tx < 0 || tx % stride != 0) continue;
                                const long wo = tx / stride;
                                if (wo >= Wo) continue;
                                acc += gy.at4(b, co, ho, wo) * w.at4(co, ci, kh, kw);
                            }
                        }
                    gx.at4(b, ci, iy, ix) = acc;
                }
}

void conv2d_backward_weight(const Tensor& gy, const Tensor& x, Tensor& gw, long stride, long pad) {
    detail::check_conv_shapes(x, gw, gy, stride, pad);
    const long B = x.dim(0), H = x.dim(2), W = x.dim(3);
    const long Co = gw.dim(0), Ci = gw.dim(1), Kh = gw.dim(2), Kw = gw.dim(3);
    const long Ho = gy.dim(2), Wo = gy.dim(3);
    for (long co = 0; co < Co; ++co)
        for (long ci = 0; ci < Ci; ++ci)
            for (long kh = 0; kh < Kh; ++kh)
                for (long kw = 0; kw < Kw; ++kw) {
                    double acc = 0.0;
                    for (long b = 0; b < B; ++b)
                        for (long ho = 0; ho < Ho; ++ho) {
                            const long iy = ho * stride - pad + kh;
                            if (iy < 0 || iy >= H) continue;
                            for (long wo = 0; wo < Wo; ++wo) {
                                const long ix = wo * stride - pad + kw;
                                if (ix < 0 || ix >= W) continue;
                                acc += gy.at4(b, co, ho, wo) * x.at4(b, ci, iy, ix);
                            }
                        }
                    gw.at4(co, ci, kh, kw) = acc;
                }
}

void bn_stats(const Tensor& x, Tensor& mean, Tensor& var) {
    const long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const double n = static_cast<double>(B * H * W);
    for (long c = 0; c < C; ++c) {
        double s = 0.0;
        for (long b = 0; b < B; ++b)
            for (long y = 0; y < H; ++y)
                for (long xx = 0; xx < W; ++xx) s += x.at4(b, c, y, xx);
        const double m = s / n;
        double v = 0.0;
        for (long b = 0; b < B; ++b)
            for (long y = 0; y < H; ++y)
                for (long xx = 0; xx < W; ++xx) {
                    const double d = x.at4(b, c, y, xx) - m;
                    v += d * d;
                }
        mean[c] = m;
        var[c] = v / n;
    }
}

void bn_forward(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                const Tensor& beta, double eps, Tensor& y) {
    detail::check_bn_shapes(x, mean, var, gamma);
    const long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    for (long b = 0; b < B; ++b)
        for (long c = 0; c < C; ++c) {
            const double inv = 1.0 / std::sqrt(var[c] + eps);
            const double g = gamma[c], m = mean[c], bt = beta[c];
            for (long yy = 0; yy < H; ++yy)
                for (long xx = 0; xx < W; ++xx)
                    y.at4(b, c, yy, xx) = g * (x.at4(b, c, yy, xx) - m) * inv + bt;
        }
}

void bn_backward_train(const Tensor& x, const Tensor& mean, const Tensor& var,
                       const Tensor& gamma, double eps, const Tensor& gy, Tensor& gx,
                       Tensor& ggamma, Tensor& gbeta) {
    detail::check_bn_shapes(x, mean, var, gamma);
    const long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const double n = static_cast<double>(B * H * W);
    for (long c = 0; c < C; ++c) {
        const double inv = 1.0 / std::sqrt(var[c] + eps);
        const double m = mean[c];
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (long b = 0; b < B; ++b)
            for (long yy = 0; yy < H; ++yy)
                for (long xx = 0; xx < W; ++xx) {
                    const double g = gy.at4(b, c, yy, xx);
                    sum_gy += g;
                    sum_gy_xhat += g * (x.at4(b, c, yy, xx) - m) * inv;
                }
        ggamma[c] = sum_gy_xhat;
        gbeta[c] = sum_gy;
        const double k = gamma[c] * inv / n;
        for (long b = 0; b < B; ++b)
            for (long yy = 0; yy < H; ++yy)
                for (long xx = 0; xx < W; ++xx) {
                    const double xhat = (x.at4(b, c, yy, xx) - m) * inv;
                    gx.at4(b, c, yy, xx) =
                        k * (n * gy.at4(b, c, yy, xx) - sum_gy - xhat * sum_gy_xhat);
                }
    }
}

void bn_backward_eval(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                      double eps, const Tensor& gy, Tensor& gx, Tensor& ggamma, Tensor& gbeta) {
    detail::check_bn_shapes(x, mean, var, gamma);
    const long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    for (long c = 0; c < C; ++c) {
        const double inv = 1.0 / std::sqrt(var[c] + eps);
        const double m = mean[c], g = gamma[c];
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (long b = 0; b < B; ++b)
            for (long yy = 0; yy < H; ++yy)
                for (long xx = 0; xx < W; ++xx) {
                    const double gv = gy.at4(b, c, yy, xx);
                    sum_gy += gv;
                    sum_gy_xhat += gv * (x.at4(b, c, yy, xx) - m) * inv;
                    gx.at4(b, c, yy, xx) = gv * g * inv;
                }
        ggamma[c] = sum_gy_xhat;
        gbeta[c] = sum_gy;
    }
}

void relu_forward(const Tensor& x, Tensor& y) {
    const long n = x.numel();
    for (long i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
    const long n = x.numel();
    for (long i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
}

void maxpool2d_forward(const Tensor& x, long k, long stride, long pad, Tensor& y,
                       std::vector<long>& argmax) {
    const long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const long Ho = y.dim(2), Wo = y.dim(3);
    argmax.assign(static_cast<size_t>(y.numel()), 0);
    for (long b = 0; b < B; ++b)
        for (long c = 0; c < C; ++c)
            for (long ho = 0; ho < Ho; ++ho)
                for (long wo = 0; wo < Wo; ++wo) {
                    double best = -std::numeric_limits<double>::infinity();
                    long best_idx = -1;
                    for (long kh = 0; kh < k; ++kh) {
                        const long iy = ho * stride - pad + kh;
                        if (iy < 0 || iy >= H) continue;
                        for (long kw = 0; kw < k; ++kw) {
                            const long ix = wo * stride - pad + kw;
                            if (ix < 0 || ix >= W) continue;
                            const double v = x.at4(b, c, iy, ix);
                            if (v > best) {
                                best = v;
                                best_idx = ((b * C + c) * H + iy) * W + ix;
                            }
                        }
                    }
                    const long oi = ((b * C + c) * Ho + ho) * Wo + wo;
                    y[oi] = best_idx >= 0 ? best : 0.0;
                    argmax[static_cast<size_t>(oi)] = best_idx;
                }
}

void maxpool2d_backward(const Tensor& gy, const std::vector<long>& argmax, Tensor& gx) {
    gx.fill(0.0);
    const long n = gy.numel();
    for (long i = 0; i < n; ++i) {
        const long src = argmax[static_cast<size_t>(i)];
        if (src >= 0) gx[src] += gy[i];
    }
}

void global_avg_pool_forward(const Tensor& x, Tensor& y) {
    const long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const double inv = 1.0 / static_cast<double>(H * W);
    for (long b = 0; b < B; ++b)
        for (long c = 0; c < C; ++c) {
            double s = 0.0;
            for (long yy = 0; yy < H; ++yy)
                for (long xx = 0; xx < W; ++xx) s += x.at4(b, c, yy, xx);
            y.at2(b, c) = s * inv;
        }
}

void global_avg_pool_backward(const Tensor& gy, long h, long w, Tensor& gx) {
    const long B = gy.dim(0), C = gy.dim(1);
    const double inv = 1.0 / static_cast<double>(h * w);
    for (long b = 0; b < B; ++b)
        for (long c = 0; c < C; ++c) {
            const double g = gy.at2(b, c) * inv;
            for (long yy = 0; yy < h; ++yy)
                for (long xx = 0; xx < w; ++xx) gx.at4(b, c, yy, xx) = g;
        }
}

void linear_forward(const Tensor& x, const Tensor& w, const Tensor* b, Tensor& y) {
    const long B = x.dim(0), I = x.dim(1), O = w.dim(0);
    if (w.dim(1) != I) throw ArgumentError("linear: weight shape mismatch");
    for (long r = 0; r < B; ++r)
        for (long o = 0; o < O; ++o) {
            double acc = b ? (*b)[o] : 0.0;
            for (long i = 0; i < I; ++i) acc += x.at2(r, i) * w.at2(o, i);
            y.at2(r, o) = acc;
        }
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor& gx, Tensor& gw,
                     Tensor* gb) {
    const long B = x.dim(0), I = x.dim(1), O = w.dim(0);
    for (long r = 0; r < B; ++r)
        for (long i = 0; i < I; ++i) {
            double acc = 0.0;
            for (long o = 0; o < O; ++o) acc += gy.at2(r, o) * w.at2(o, i);
            gx.at2(r, i) = acc;
        }
    for (long o = 0; o < O; ++o)
        for (long i = 0; i < I; ++i) {
            double acc = 0.0;
            for (long r = 0; r < B; ++r) acc += gy.at2(r, o) * x.at2(r, i);
            gw.at2(o, i) = acc;
        }
    if (gb)
        for (long o = 0; o < O; ++o) {
            double acc = 0.0;
            for (long r = 0; r < B; ++r) acc += gy.at2(r, o);
            (*gb)[o] = acc;
        }
}

void upsample_nearest2_forward(const Tensor& x, Tensor& y) {
    const long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    for (long b = 0; b < B; ++b)
        for (long c = 0; c < C; ++c)
            for (long yy = 0; yy < 2 * H; ++yy)
                for (long xx = 0; xx < 2 * W; ++xx)
                    y.at4(b, c, yy, xx) = x.at4(b, c, yy / 2, xx / 2);
}

void upsample_nearest2_backward(const Tensor& gy, Tensor& gx) {
    const long B = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
    for (long b = 0; b < B; ++b)
        for (long c = 0; c < C; ++c)
            for (long yy = 0; yy < H; ++yy)
                for (long xx = 0; xx < W; ++xx) {
                    double acc = 0.0;
                    for (long dy = 0; dy < 2; ++dy)
                        for (long dx = 0; dx < 2; ++dx)
                            acc += gy.at4(b, c, 2 * yy + dy, 2 * xx + dx);
                    gx.at4(b, c, yy, xx) = acc;
                }
}

void softmax_channels_forward(const Tensor& x, Tensor& y) {
    const long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    for (long b = 0; b < B; ++b)
        for (long yy = 0; yy < H; ++yy)
            for (long xx = 0; xx < W; ++xx) {
                double mx = x.at4(b, 0, yy, xx);
                for (long c = 1; c < C; ++c) mx = std::max(mx, x.at4(b, c, yy, xx));
                double sum = 0.0;
                for (long c = 0; c < C; ++c) {
                    const double e = std::exp(x.at4(b, c, yy, xx) - mx);
                    y.at4(b, c, yy, xx) = e;
                    sum += e;
                }
                const double inv = 1.0 / sum;
                for (long c = 0; c < C; ++c) y.at4(b, c, yy, xx) *= inv;
            }
}

void softmax_channels_backward(const Tensor& y, const Tensor& gy, Tensor& gx) {
    const long B = y.dim(0), C = y.dim(1), H = y.dim(2), W = y.dim(3);
    for (long b = 0; b < B; ++b)
        for (long yy = 0; yy < H; ++yy)
            for (long xx = 0; xx < W; ++xx) {
                double dot = 0.0;
                for (long c = 0; c < C; ++c) dot += gy.at4(b, c, yy, xx) * y.at4(b, c, yy, xx);
                for (long c = 0; c < C; ++c)
                    gx.at4(b, c, yy, xx) = y.at4(b, c, yy, xx) * (gy.at4(b, c, yy, xx) - dot);
            }
}

void resize_bilinear(const Tensor& src, Tensor& dst) {
    const long h = src.dim(0), w = src.dim(1);
    const long oh = dst.dim(0), ow = dst.dim(1);
    const double sy = static_cast<double>(h) / static_cast<double>(oh);
    const double sx = static_cast<double>(w) / static_cast<double>(ow);
    for (long dy = 0; dy < oh; ++dy) {
        double fy = (static_cast<double>(dy) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const long y0 = static_cast<long>(fy);
        const long y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (long dx = 0; dx < ow; ++dx) {
            double fx = (static_cast<double>(dx) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const long x0 = static_cast<long>(fx);
            const long x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = src.at2(y0, x0) * (1.0 - wx) + src.at2(y0, x1) * wx;
            const double bot = src.at2(y1, x0) * (1.0 - wx) + src.at2(y1, x1) * wx;
            dst.at2(dy, dx) = top * (1.0 - wy) + bot * wy;
        }
    }
}

void resize_nearest_u8(const std::vector<uint8_t>& src, long sh, long sw,
                       std::vector<uint8_t>& dst, long dh, long dw) {
    dst.assign(static_cast<size_t>(dh * dw), 0);
    const double sy = static_cast<double>(sh) / static_cast<double>(dh);
    const double sx = static_cast<double>(sw) / static_cast<double>(dw);
    for (long dy = 0; dy < dh; ++dy) {
        long yy = static_cast<long>((static_cast<double>(dy) + 0.5) * sy);
        yy = std::min(yy, sh - 1);
        for (long dx = 0; dx < dw; ++dx) {
            long xx = static_cast<long>((static_cast<double>(dx) + 0.5) * sx);
            xx = std::min(xx, sw - 1);
            dst[static_cast<size_t>(dy * dw + dx)] = src[static_cast<size_t>(yy * sw + xx)];
        }
    }
}

}  // namespace medseg::kernels::reference
