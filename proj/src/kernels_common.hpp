#pragma once

#include "medseg/errors.hpp"
#include "medseg/kernels.hpp"
#include "medseg/tensor.hpp"

// Shared shape validation for both kernel backends.
namespace medseg::kernels::detail {

inline void check_conv_shapes(const Tensor& x, const Tensor& w, const Tensor& y, long stride,
                              long pad) {
    if (x.ndim() != 4 || w.ndim() != 4 || y.ndim() != 4)
        throw ArgumentError("conv2d: expects 4-d tensors");
    if (x.dim(1) != w.dim(1))
        throw ArgumentError("conv2d: input channels " + std::to_string(x.dim(1)) +
                            " != kernel channels " + std::to_string(w.dim(1)));
    if (y.dim(0) != x.dim(0) || y.dim(1) != w.dim(0))
        throw ArgumentError("conv2d: bad output shape " + shape_str(y));
    if (y.dim(2) != conv_out_dim(x.dim(2), w.dim(2), stride, pad) ||
        y.dim(3) != conv_out_dim(x.dim(3), w.dim(3), stride, pad))
        throw ArgumentError("conv2d: output spatial dims inconsistent with stride/pad");
}

inline void check_bn_shapes(const Tensor& x, const Tensor& mean, const Tensor& var,
                            const Tensor& gamma) {
    if (x.ndim() != 4) throw ArgumentError("batchnorm: expects (B,C,H,W)");
    long c = x.dim(1);
    if (mean.numel() != c || var.numel() != c || gamma.numel() != c)
        throw ArgumentError("batchnorm: per-channel vectors must have length C");
}

}  // namespace medseg::kernels::detail
