#include "ldmshield/optim.hpp"

#include <cmath>

namespace ldms {

void Optimizer::step(ad::ParamStore& store) {
    ++step_count_;
    for (const std::string& name : store.trainable_names()) {
        if (!store.has_grad(name)) continue;
        Tensor& w = store.value(name);
        Tensor& g = store.grad(name);
        switch (cfg_.kind) {
            case OptimizerKind::sgd:
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg_.lr * g[i];
                break;
            case OptimizerKind::momentum: {
                auto it = m_.find(name);
                if (it == m_.end()) it = m_.emplace(name, Tensor(w.shape())).first;
                Tensor& buf = it->second;
                for (std::size_t i = 0; i < w.size(); ++i) {
                    buf[i] = cfg_.momentum * buf[i] + g[i];
                    w[i] -= cfg_.lr * buf[i];
                }
                break;
            }
            case OptimizerKind::adam: {
                auto mi = m_.find(name);
                if (mi == m_.end()) mi = m_.emplace(name, Tensor(w.shape())).first;
                auto vi = v_.find(name);
                if (vi == v_.end()) vi = v_.emplace(name, Tensor(w.shape())).first;
                Tensor& m = mi->second;
                Tensor& v = vi->second;
                double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
                double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                    w[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
                }
                break;
            }
        }
    }
    store.zero_grads();
}

}  // namespace ldms
