#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "medseg/rng.hpp"
#include "medseg/tape.hpp"
#include "medseg/tensor.hpp"

namespace medseg::test {

inline Tensor random_tensor(std::vector<long> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Scalarizes an arbitrary tensor with fixed random weights so gradient checks
// are well conditioned in every output element.
inline Var weighted_sum(Tape& tape, Var x, const Tensor& w) {
    double v = 0.0;
    const Tensor& xv = tape.value(x);
    for (long i = 0; i < xv.numel(); ++i) v += xv[i] * w[i];
    return tape.custom(Tensor::scalar(v), {x}, [w](Tape& t, Var out, const std::vector<Var>& p) {
        if (!t.needs_grad(p[0])) return;
        Tensor& g = t.grad(p[0]);
        const double up = t.grad(out)[0];
        for (long i = 0; i < g.numel(); ++i) g[i] += up * w[i];
    });
}

inline double rel_err(double a, double b) {
    const double denom = std::max({1e-8, std::abs(a), std::abs(b)});
    return std::abs(a - b) / denom;
}

// Central-difference check of d(loss)/d(params) against the tape backward.
// `build` must be a pure function of the current parameter values. Returns
// the worst relative error over all parameter elements.
inline double check_gradients(std::vector<Tensor>& params,
                              const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                              double h = 1e-6) {
    auto eval = [&]() {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(params.size());
        for (Tensor& p : params) vars.push_back(tape.param(&p));
        Var loss = build(tape, vars);
        return tape.value(loss)[0];
    };

    // analytic pass
    Tape tape;
    std::vector<Var> vars;
    for (Tensor& p : params) vars.push_back(tape.param(&p));
    Var loss = build(tape, vars);
    tape.backward(loss);
    std::vector<Tensor> analytic;
    for (size_t i = 0; i < params.size(); ++i) {
        analytic.push_back(tape.grad_touched(vars[i]) ? tape.grad(vars[i])
                                                      : Tensor::zeros(params[i].shape()));
    }

    double worst = 0.0;
    for (size_t i = 0; i < params.size(); ++i) {
        for (long j = 0; j < params[i].numel(); ++j) {
            const double saved = params[i][j];
            params[i][j] = saved + h;
            const double fp = eval();
            params[i][j] = saved - h;
            const double fm = eval();
            params[i][j] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            worst = std::max(worst, rel_err(analytic[i][j], fd));
        }
    }
    return worst;
}

}  // namespace medseg::test
