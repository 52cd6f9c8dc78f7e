#pragma once

#include <array>
#include <memory>

#include "ldmshield/autodiff.hpp"

namespace ldms {

// Noise-prediction network interface: (z_t, t, condition id) -> predicted eps,
// same shape as z_t. Deterministic given weights and inputs.
class EpsilonModel {
public:
    virtual ~EpsilonModel() = default;

    virtual std::array<int, 3> latent_shape() const = 0;  // h, w, c
    virtual int condition_vocab() const = 0;

    virtual ad::Var predict(ad::Tape& tape, ad::Var z, int t, int cond) = 0;

    virtual ad::ParamStore& params() = 0;
    const ad::ParamStore& params() const { return const_cast<EpsilonModel*>(this)->params(); }

    virtual std::unique_ptr<EpsilonModel> clone() const = 0;

    // Gradient-checkpointing opt-in; models without segments ignore it.
    virtual bool recompute() const { return false; }
    virtual void set_recompute(bool) {}

    Tensor predict_value(const Tensor& z, int t, int cond);
};

}  // namespace ldms
