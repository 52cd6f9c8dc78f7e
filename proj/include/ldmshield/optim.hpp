#pragma once

#include <map>
#include <string>

#include "ldmshield/autodiff.hpp"

namespace ldms {

enum class OptimizerKind { sgd, momentum, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    double lr = 1e-5;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Applies one update to every trainable parameter that has a gradient,
// then zeroes the gradients.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}
    void step(ad::ParamStore& store);
    const OptimizerConfig& config() const { return cfg_; }

private:
    OptimizerConfig cfg_;
    std::map<std::string, Tensor> m_;
    std::map<std::string, Tensor> v_;
    long step_count_ = 0;
};

}  // namespace ldms
