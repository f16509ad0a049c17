#pragma once

#include <functional>
#include <vector>

#include "medseg/tensor.hpp"

namespace medseg {

// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. One tape lives for one forward/backward pass; ops append
// nodes in topological order and backward() walks them in reverse. Parameter
// leaves reference their tensors (no copy); everything fed through input()
// is a constant, which is how the BYOL target branch gets its stop-gradient.
class Tape {
public:
    // Constant leaf (no gradient ever flows into it).
    Var input(Tensor v);

    // Trainable leaf referencing externally owned storage.
    Var param(const Tensor* shared);

    const Tensor& value(Var v) const;
    bool needs_grad(Var v) const;

    // Gradient buffer of a node; allocated as zeros on first access.
    Tensor& grad(Var v);
    bool grad_touched(Var v) const;

    // --- ops -------------------------------------------------------------
    Var conv2d(Var x, Var w, long stride, long pad);
    Var bias_add_channel(Var x, Var b);  // x (B,C,H,W), b (C)
    // training=true: normalize with batch statistics of x, returned through
    // out_* so the caller can fold them into running estimates after the
    // optimizer step. training=false: normalize with the provided running
    // statistics. Accepts (B,C,H,W); callers reshape (B,D) activations to
    // (B,D,1,1) for the 1-d case.
    Var batchnorm(Var x, Var gamma, Var beta, const Tensor* running_mean,
                  const Tensor* running_var, bool training, double eps, Tensor* out_batch_mean,
                  Tensor* out_batch_var);
    Var relu(Var x);
    Var maxpool2d(Var x, long k, long stride, long pad);
    Var global_avg_pool(Var x);                 // (B,C,H,W) -> (B,C)
    Var linear(Var x, Var w, Var b);            // b may be invalid for bias-free
    Var upsample_nearest2(Var x);
    Var concat_channels(Var a, Var b);
    Var add(Var a, Var b);
    Var reshape(Var x, std::vector<long> shape);
    Var softmax_channels(Var x);

    // Composite ops (losses) register through this: `back` reads grad(out)
    // and accumulates into the grads of parents that need it.
    Var custom(Tensor value, std::vector<Var> parents,
               std::function<void(Tape&, Var out, const std::vector<Var>& parents)> back);

    // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be scalar.
    void backward(Var loss);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor owned;
        const Tensor* external = nullptr;
        Tensor grad;
        bool requires_grad = false;
        bool grad_alloc = false;
        std::vector<Var> parents;
        std::function<void(Tape&, Var, const std::vector<Var>&)> back;
    };

    Var add_node(Tensor value, std::vector<Var> parents,
                 std::function<void(Tape&, Var, const std::vector<Var>&)> back);
    bool any_needs_grad(const std::vector<Var>& parents) const;

    std::vector<Node> nodes_;
};

}  // namespace medseg
