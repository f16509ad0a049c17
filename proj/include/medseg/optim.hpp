#pragma once

#include <string>
#include <unordered_map>

#include "medseg/nets.hpp"

namespace medseg {

using GradMap = std::unordered_map<std::string, Tensor>;

// SGD with classical momentum: v <- m*v + g; p <- p - lr*v.
class SgdMomentum {
public:
    explicit SgdMomentum(double momentum = 0.9) : momentum_(momentum) {}
    void step(NetworkWeights& w, const GradMap& grads, double lr);

private:
    double momentum_;
    std::unordered_map<std::string, Tensor> velocity_;
};

class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(NetworkWeights& w, const GradMap& grads, double lr);

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::unordered_map<std::string, Tensor> m_, v_;
};

}  // namespace medseg
