#include "medseg/optim.hpp"

#include <cmath>

#include "medseg/errors.hpp"

namespace medseg {

void SgdMomentum::step(NetworkWeights& w, const GradMap& grads, double lr) {
    // Iterate in canonical order so update arithmetic is reproducible.
    for (const auto& name : w.order) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        if (!is_trainable_param(name))
            throw ContractError("SgdMomentum: gradient for non-trainable " + name);
        Tensor& p = w.at(name);
        auto [vit, fresh] = velocity_.try_emplace(name, Tensor::zeros(p.shape()));
        Tensor& vel = vit->second;
        const Tensor& g = git->second;
        for (long i = 0; i < p.numel(); ++i) {
            vel[i] = momentum_ * vel[i] + g[i];
            p[i] -= lr * vel[i];
        }
    }
}

void Adam::step(NetworkWeights& w, const GradMap& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& name : w.order) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        if (!is_trainable_param(name))
            throw ContractError("Adam: gradient for non-trainable " + name);
        Tensor& p = w.at(name);
        auto [mit, f1] = m_.try_emplace(name, Tensor::zeros(p.shape()));
        auto [vit, f2] = v_.try_emplace(name, Tensor::zeros(p.shape()));
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        const Tensor& g = git->second;
        for (long i = 0; i < p.numel(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    }
}

}  // namespace medseg
