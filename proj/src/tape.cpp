#include "medseg/tape.hpp"

#include <algorithm>
#include <memory>
#include <utility>

#include "medseg/errors.hpp"
#include "medseg/kernels.hpp"

namespace medseg {

namespace k = kernels;

Var Tape::add_node(Tensor value, std::vector<Var> parents,
                   std::function<void(Tape&, Var, const std::vector<Var>&)> back) {
    Node n;
    n.owned = std::move(value);
    n.parents = std::move(parents);
    n.requires_grad = any_needs_grad(n.parents);
    if (n.requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

bool Tape::any_needs_grad(const std::vector<Var>& parents) const {
    for (Var p : parents)
        if (p.valid() && nodes_[static_cast<size_t>(p.id)].requires_grad) return true;
    return false;
}

Var Tape::input(Tensor v) {
    Node n;
    n.owned = std::move(v);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const Tensor* shared) {
    Node n;
    n.external = shared;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(Var v) const {
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    return n.external ? *n.external : n.owned;
}

bool Tape::needs_grad(Var v) const {
    return v.valid() && nodes_[static_cast<size_t>(v.id)].requires_grad;
}

Tensor& Tape::grad(Var v) {
    Node& n = nodes_[static_cast<size_t>(v.id)];
    if (!n.requires_grad) throw ContractError("Tape::grad on a node that needs no gradient");
    if (!n.grad_alloc) {
        n.grad = Tensor::zeros(value(v).shape());
        n.grad_alloc = true;
    }
    return n.grad;
}

bool Tape::grad_touched(Var v) const {
    return nodes_[static_cast<size_t>(v.id)].grad_alloc;
}

void Tape::backward(Var loss) {
    if (value(loss).numel() != 1) throw ArgumentError("Tape::backward: loss must be scalar");
    if (!needs_grad(loss)) return;
    grad(loss)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.requires_grad && n.grad_alloc && n.back) n.back(*this, Var{i}, n.parents);
    }
}

// ---------------------------------------------------------------------------

Var Tape::conv2d(Var x, Var w, long stride, long pad) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    Tensor y({xv.dim(0), wv.dim(0), k::conv_out_dim(xv.dim(2), wv.dim(2), stride, pad),
              k::conv_out_dim(xv.dim(3), wv.dim(3), stride, pad)});
    k::conv2d_forward(xv, wv, y, stride, pad);
    return add_node(std::move(y), {x, w},
                    [stride, pad](Tape& t, Var out, const std::vector<Var>& p) {
                        const Tensor& gy = t.grad(out);
                        if (t.needs_grad(p[0])) {
                            Tensor gx(t.value(p[0]).shape());
                            k::conv2d_backward_input(gy, t.value(p[1]), gx, stride, pad);
                            t.grad(p[0]).add_scaled(gx, 1.0);
                        }
                        if (t.needs_grad(p[1])) {
                            Tensor gw(t.value(p[1]).shape());
                            k::conv2d_backward_weight(gy, t.value(p[0]), gw, stride, pad);
                            t.grad(p[1]).add_scaled(gw, 1.0);
                        }
                    });
}

Var Tape::bias_add_channel(Var x, Var b) {
    const Tensor& xv = value(x);
    const Tensor& bv = value(b);
    Tensor y = xv;
    const long B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    for (long bb = 0; bb < B; ++bb)
        for (long c = 0; c < C; ++c) {
            double* row = y.data() + (bb * C + c) * HW;
            for (long i = 0; i < HW; ++i) row[i] += bv[c];
        }
    return add_node(std::move(y), {x, b}, [](Tape& t, Var out, const std::vector<Var>& p) {
        const Tensor& gy = t.grad(out);
        if (t.needs_grad(p[0])) t.grad(p[0]).add_scaled(gy, 1.0);
        if (t.needs_grad(p[1])) {
            Tensor& gb = t.grad(p[1]);
            const long B = gy.dim(0), C = gy.dim(1), HW = gy.dim(2) * gy.dim(3);
            for (long bb = 0; bb < B; ++bb)
                for (long c = 0; c < C; ++c) {
                    const double* row = gy.data() + (bb * C + c) * HW;
                    double acc = 0.0;
                    for (long i = 0; i < HW; ++i) acc += row[i];
                    gb[c] += acc;
                }
        }
    });
}

Var Tape::batchnorm(Var x, Var gamma, Var beta, const Tensor* running_mean,
                    const Tensor* running_var, bool training, double eps, Tensor* out_batch_mean,
                    Tensor* out_batch_var) {
    const Tensor& xv = value(x);
    const long C = xv.dim(1);
    Tensor mean({C}), var({C});
    if (training) {
        k::bn_stats(xv, mean, var);
        if (out_batch_mean) *out_batch_mean = mean;
        if (out_batch_var) *out_batch_var = var;
    } else {
        if (!running_mean || !running_var)
            throw ContractError("batchnorm: eval mode requires running statistics");
        mean = *running_mean;
        var = *running_var;
    }
    Tensor y(xv.shape());
    k::bn_forward(xv, mean, var, value(gamma), value(beta), eps, y);
    return add_node(
        std::move(y), {x, gamma, beta},
        [mean, var, training, eps](Tape& t, Var out, const std::vector<Var>& p) {
            const Tensor& gy = t.grad(out);
            const Tensor& xv = t.value(p[0]);
            Tensor gx(xv.shape());
            Tensor ggamma({xv.dim(1)}), gbeta({xv.dim(1)});
            if (training)
                k::bn_backward_train(xv, mean, var, t.value(p[1]), eps, gy, gx, ggamma, gbeta);
            else
                k::bn_backward_eval(xv, mean, var, t.value(p[1]), eps, gy, gx, ggamma, gbeta);
            if (t.needs_grad(p[0])) t.grad(p[0]).add_scaled(gx, 1.0);
            if (t.needs_grad(p[1])) t.grad(p[1]).add_scaled(ggamma, 1.0);
            if (t.needs_grad(p[2])) t.grad(p[2]).add_scaled(gbeta, 1.0);
        });
}

Var Tape::relu(Var x) {
    Tensor y(value(x).shape());
    k::relu_forward(value(x), y);
    return add_node(std::move(y), {x}, [](Tape& t, Var out, const std::vector<Var>& p) {
        if (!t.needs_grad(p[0])) return;
        Tensor gx(t.value(p[0]).shape());
        k::relu_backward(t.value(p[0]), t.grad(out), gx);
        t.grad(p[0]).add_scaled(gx, 1.0);
    });
}

Var Tape::maxpool2d(Var x, long kk, long stride, long pad) {
    const Tensor& xv = value(x);
    Tensor y({xv.dim(0), xv.dim(1), k::conv_out_dim(xv.dim(2), kk, stride, pad),
              k::conv_out_dim(xv.dim(3), kk, stride, pad)});
    auto argmax = std::make_shared<std::vector<long>>();
    k::maxpool2d_forward(xv, kk, stride, pad, y, *argmax);
    return add_node(std::move(y), {x}, [argmax](Tape& t, Var out, const std::vector<Var>& p) {
        if (!t.needs_grad(p[0])) return;
        Tensor gx(t.value(p[0]).shape());
        k::maxpool2d_backward(t.grad(out), *argmax, gx);
        t.grad(p[0]).add_scaled(gx, 1.0);
    });
}

Var Tape::global_avg_pool(Var x) {
    const Tensor& xv = value(x);
    const long h = xv.dim(2), w = xv.dim(3);
    Tensor y({xv.dim(0), xv.dim(1)});
    k::global_avg_pool_forward(xv, y);
    return add_node(std::move(y), {x}, [h, w](Tape& t, Var out, const std::vector<Var>& p) {
        if (!t.needs_grad(p[0])) return;
        Tensor gx(t.value(p[0]).shape());
        k::global_avg_pool_backward(t.grad(out), h, w, gx);
        t.grad(p[0]).add_scaled(gx, 1.0);
    });
}

Var Tape::linear(Var x, Var w, Var b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    Tensor y({xv.dim(0), wv.dim(0)});
    k::linear_forward(xv, wv, b.valid() ? &value(b) : nullptr, y);
    return add_node(std::move(y), {x, w, b}, [](Tape& t, Var out, const std::vector<Var>& p) {
        const Tensor& gy = t.grad(out);
        Tensor gx(t.value(p[0]).shape()), gw(t.value(p[1]).shape());
        Tensor gb;
        const bool want_gb = p[2].valid() && t.needs_grad(p[2]);
        if (want_gb) gb = Tensor::zeros(t.value(p[2]).shape());
        k::linear_backward(t.value(p[0]), t.value(p[1]), gy, gx, gw, want_gb ? &gb : nullptr);
        if (t.needs_grad(p[0])) t.grad(p[0]).add_scaled(gx, 1.0);
        if (t.needs_grad(p[1])) t.grad(p[1]).add_scaled(gw, 1.0);
        if (want_gb) t.grad(p[2]).add_scaled(gb, 1.0);
    });
}

Var Tape::upsample_nearest2(Var x) {
    const Tensor& xv = value(x);
    Tensor y({xv.dim(0), xv.dim(1), xv.dim(2) * 2, xv.dim(3) * 2});
    k::upsample_nearest2_forward(xv, y);
    return add_node(std::move(y), {x}, [](Tape& t, Var out, const std::vector<Var>& p) {
        if (!t.needs_grad(p[0])) return;
        Tensor gx(t.value(p[0]).shape());
        k::upsample_nearest2_backward(t.grad(out), gx);
        t.grad(p[0]).add_scaled(gx, 1.0);
    });
}

Var Tape::concat_channels(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
        throw ArgumentError("concat_channels: non-channel dims must match");
    const long B = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), H = av.dim(2), W = av.dim(3);
    Tensor y({B, Ca + Cb, H, W});
    const long plane = H * W;
    for (long bb = 0; bb < B; ++bb) {
        double* dst = y.data() + bb * (Ca + Cb) * plane;
        const double* sa = av.data() + bb * Ca * plane;
        const double* sb = bv.data() + bb * Cb * plane;
        std::copy(sa, sa + Ca * plane, dst);
        std::copy(sb, sb + Cb * plane, dst + Ca * plane);
    }
    return add_node(std::move(y), {a, b}, [Ca](Tape& t, Var out, const std::vector<Var>& p) {
        const Tensor& gy = t.grad(out);
        const long B = gy.dim(0), C = gy.dim(1), plane = gy.dim(2) * gy.dim(3);
        const long Cb = C - Ca;
        if (t.needs_grad(p[0])) {
            Tensor& ga = t.grad(p[0]);
            for (long bb = 0; bb < B; ++bb) {
                const double* src = gy.data() + bb * C * plane;
                double* dst = ga.data() + bb * Ca * plane;
                for (long i = 0; i < Ca * plane; ++i) dst[i] += src[i];
            }
        }
        if (t.needs_grad(p[1])) {
            Tensor& gb = t.grad(p[1]);
            for (long bb = 0; bb < B; ++bb) {
                const double* src = gy.data() + bb * C * plane + Ca * plane;
                double* dst = gb.data() + bb * Cb * plane;
                for (long i = 0; i < Cb * plane; ++i) dst[i] += src[i];
            }
        }
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw ArgumentError("add: shape mismatch");
    Tensor y = av;
    y.add_scaled(bv, 1.0);
    return add_node(std::move(y), {a, b}, [](Tape& t, Var out, const std::vector<Var>& p) {
        const Tensor& gy = t.grad(out);
        if (t.needs_grad(p[0])) t.grad(p[0]).add_scaled(gy, 1.0);
        if (t.needs_grad(p[1])) t.grad(p[1]).add_scaled(gy, 1.0);
    });
}

Var Tape::reshape(Var x, std::vector<long> shape) {
    Tensor y(shape);
    const Tensor& xv = value(x);
    if (y.numel() != xv.numel()) throw ArgumentError("reshape: element count mismatch");
    std::copy(xv.data(), xv.data() + xv.numel(), y.data());
    return add_node(std::move(y), {x}, [](Tape& t, Var out, const std::vector<Var>& p) {
        if (!t.needs_grad(p[0])) return;
        const Tensor& gy = t.grad(out);
        Tensor& gx = t.grad(p[0]);
        for (long i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
    });
}

Var Tape::softmax_channels(Var x) {
    Tensor y(value(x).shape());
    k::softmax_channels_forward(value(x), y);
    return add_node(std::move(y), {x}, [](Tape& t, Var out, const std::vector<Var>& p) {
        if (!t.needs_grad(p[0])) return;
        Tensor gx(t.value(p[0]).shape());
        k::softmax_channels_backward(t.value(out), t.grad(out), gx);
        t.grad(p[0]).add_scaled(gx, 1.0);
    });
}

Var Tape::custom(Tensor value, std::vector<Var> parents,
                 std::function<void(Tape&, Var, const std::vector<Var>&)> back) {
    return add_node(std::move(value), std::move(parents), std::move(back));
}

}  // namespace medseg
