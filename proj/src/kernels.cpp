// Backend dispatch. OpenMP is the default; the serial reference can be
// selected for debugging or comparison (MEDSEG_BACKEND=serial or
// set_backend).

#include <cstdlib>
#include <cstring>

#include "medseg/kernels.hpp"

namespace medseg::kernels {

namespace {

Backend initial_backend() {
    const char* env = std::getenv("MEDSEG_BACKEND");
    if (env && std::strcmp(env, "serial") == 0) return Backend::serial;
    return Backend::openmp;
}

Backend g_backend = initial_backend();

}  // namespace

Backend active_backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

#define MEDSEG_DISPATCH(fn, ...)                           \
    do {                                                   \
        if (g_backend == Backend::openmp)                  \
            openmp::fn(__VA_ARGS__);                       \
        else                                               \
            reference::fn(__VA_ARGS__);                    \
    } while (0)

void conv2d_forward(const Tensor& x, const Tensor& w, Tensor& y, long stride, long pad) {
    MEDSEG_DISPATCH(conv2d_forward, x, w, y, stride, pad);
}
void conv2d_backward_input(const Tensor& gy, const Tensor& w, Tensor& gx, long stride, long pad) {
    MEDSEG_DISPATCH(conv2d_backward_input, gy, w, gx, stride, pad);
}
void conv2d_backward_weight(const Tensor& gy, const Tensor& x, Tensor& gw, long stride, long pad) {
    MEDSEG_DISPATCH(conv2d_backward_weight, gy, x, gw, stride, pad);
}
void bn_stats(const Tensor& x, Tensor& mean, Tensor& var) {
    MEDSEG_DISPATCH(bn_stats, x, mean, var);
}
void bn_forward(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                const Tensor& beta, double eps, Tensor& y) {
    MEDSEG_DISPATCH(bn_forward, x, mean, var, gamma, beta, eps, y);
}
void bn_backward_train(const Tensor& x, const Tensor& mean, const Tensor& var,
                       const Tensor& gamma, double eps, const Tensor& gy, Tensor& gx,
                       Tensor& ggamma, Tensor& gbeta) {
    MEDSEG_DISPATCH(bn_backward_train, x, mean, var, gamma, eps, gy, gx, ggamma, gbeta);
}
void bn_backward_eval(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                      double eps, const Tensor& gy, Tensor& gx, Tensor& ggamma, Tensor& gbeta) {
    MEDSEG_DISPATCH(bn_backward_eval, x, mean, var, gamma, eps, gy, gx, ggamma, gbeta);
}
void relu_forward(const Tensor& x, Tensor& y) { MEDSEG_DISPATCH(relu_forward, x, y); }
void relu_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
    MEDSEG_DISPATCH(relu_backward, x, gy, gx);
}
void maxpool2d_forward(const Tensor& x, long k, long stride, long pad, Tensor& y,
                       std::vector<long>& argmax) {
    MEDSEG_DISPATCH(maxpool2d_forward, x, k, stride, pad, y, argmax);
}
void maxpool2d_backward(const Tensor& gy, const std::vector<long>& argmax, Tensor& gx) {
    MEDSEG_DISPATCH(maxpool2d_backward, gy, argmax, gx);
}
void global_avg_pool_forward(const Tensor& x, Tensor& y) {
    MEDSEG_DISPATCH(global_avg_pool_forward, x, y);
}
void global_avg_pool_backward(const Tensor& gy, long h, long w, Tensor& gx) {
    MEDSEG_DISPATCH(global_avg_pool_backward, gy, h, w, gx);
}
void linear_forward(const Tensor& x, const Tensor& w, const Tensor* b, Tensor& y) {
    MEDSEG_DISPATCH(linear_forward, x, w, b, y);
}
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor& gx, Tensor& gw,
                     Tensor* gb) {
    MEDSEG_DISPATCH(linear_backward, x, w, gy, gx, gw, gb);
}
void upsample_nearest2_forward(const Tensor& x, Tensor& y) {
    MEDSEG_DISPATCH(upsample_nearest2_forward, x, y);
}
void upsample_nearest2_backward(const Tensor& gy, Tensor& gx) {
    MEDSEG_DISPATCH(upsample_nearest2_backward, gy, gx);
}
void softmax_channels_forward(const Tensor& x, Tensor& y) {
    MEDSEG_DISPATCH(softmax_channels_forward, x, y);
}
void softmax_channels_backward(const Tensor& y, const Tensor& gy, Tensor& gx) {
    MEDSEG_DISPATCH(softmax_channels_backward, y, gy, gx);
}
void resize_bilinear(const Tensor& src, Tensor& dst) { MEDSEG_DISPATCH(resize_bilinear, src, dst); }
void resize_nearest_u8(const std::vector<uint8_t>& src, long sh, long sw,
                       std::vector<uint8_t>& dst, long dh, long dw) {
    MEDSEG_DISPATCH(resize_nearest_u8, src, sh, sw, dst, dh, dw);
}

#undef MEDSEG_DISPATCH

}  // namespace medseg::kernels
