#pragma once

#include <cstdint>
#include <vector>

#include "medseg/tensor.hpp"

// Compute kernels behind the network layers. Every kernel exists twice: a
// serial reference implementation (namespace reference) and an OpenMP
// variant (namespace openmp). Both use the same per-output accumulation
// order, so results are bit-identical; tests assert exact equality and the
// benchmark target compares throughput. The unqualified entry points
// dispatch on the active backend.
namespace medseg::kernels {

enum class Backend { serial, openmp };

Backend active_backend();
void set_backend(Backend b);

#define MEDSEG_KERNEL_DECLS                                                                        \
    /* conv2d: x (B,Ci,H,W), w (Co,Ci,Kh,Kw), y (B,Co,Ho,Wo); bias-free */                         \
    void conv2d_forward(const Tensor& x, const Tensor& w, Tensor& y, long stride, long pad);       \
    void conv2d_backward_input(const Tensor& gy, const Tensor& w, Tensor& gx, long stride,         \
                               long pad);                                                          \
    void conv2d_backward_weight(const Tensor& gy, const Tensor& x, Tensor& gw, long stride,        \
                                long pad);                                                         \
                                                                                                   \
    /* batch norm over (B,H,W) per channel; x (B,C,H,W); var is biased */                          \
    void bn_stats(const Tensor& x, Tensor& mean, Tensor& var);                                     \
    void bn_forward(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,   \
                    const Tensor& beta, double eps, Tensor& y);                                    \
    void bn_backward_train(const Tensor& x, const Tensor& mean, const Tensor& var,                 \
                           const Tensor& gamma, double eps, const Tensor& gy, Tensor& gx,          \
                           Tensor& ggamma, Tensor& gbeta);                                         \
    void bn_backward_eval(const Tensor& x, const Tensor& mean, const Tensor& var,                  \
                          const Tensor& gamma, double eps, const Tensor& gy, Tensor& gx,           \
                          Tensor& ggamma, Tensor& gbeta);                                          \
                                                                                                   \
    void relu_forward(const Tensor& x, Tensor& y);                                                 \
    void relu_backward(const Tensor& x, const Tensor& gy, Tensor& gx);                             \
                                                                                                   \
    void maxpool2d_forward(const Tensor& x, long k, long stride, long pad, Tensor& y,              \
                           std::vector<long>& argmax);                                             \
    void maxpool2d_backward(const Tensor& gy, const std::vector<long>& argmax, Tensor& gx);        \
                                                                                                   \
    /* (B,C,H,W) -> (B,C) */                                                                       \
    void global_avg_pool_forward(const Tensor& x, Tensor& y);                                      \
    void global_avg_pool_backward(const Tensor& gy, long h, long w, Tensor& gx);                   \
                                                                                                   \
    /* x (B,I), w (O,I), b (O) optional */                                                         \
    void linear_forward(const Tensor& x, const Tensor& w, const Tensor* b, Tensor& y);             \
    void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor& gx,           \
                         Tensor& gw, Tensor* gb);                                                  \
                                                                                                   \
    void upsample_nearest2_forward(const Tensor& x, Tensor& y);                                    \
    void upsample_nearest2_backward(const Tensor& gy, Tensor& gx);                                 \
                                                                                                   \
    /* softmax over the channel axis of (B,C,H,W) */                                               \
    void softmax_channels_forward(const Tensor& x, Tensor& y);                                     \
    void softmax_channels_backward(const Tensor& y, const Tensor& gy, Tensor& gx);                 \
                                                                                                   \
    /* single-channel (h,w) resampling; half-pixel center convention */                            \
    void resize_bilinear(const Tensor& src, Tensor& dst);                                          \
    void resize_nearest_u8(const std::vector<uint8_t>& src, long sh, long sw,                      \
                           std::vector<uint8_t>& dst, long dh, long dw);

MEDSEG_KERNEL_DECLS

namespace reference {
MEDSEG_KERNEL_DECLS
}

namespace openmp {
MEDSEG_KERNEL_DECLS
}

#undef MEDSEG_KERNEL_DECLS

inline long conv_out_dim(long in, long k, long stride, long pad) {
    return (in + 2 * pad - k) / stride + 1;
}

}  // namespace medseg::kernels
