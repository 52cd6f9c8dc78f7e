#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldmshield/epsmodel.hpp"

namespace ldms {

struct UNetConfig {
    int latent_h = 16;
    int latent_w = 16;
    int latent_c = 4;
    int base = 16;       // channel width; stages run at base and 2*base
    int cond_vocab = 6;  // id 0 is the null condition
    int time_dim = 64;
    int sin_dim = 32;
    int groups = 4;
};

// Small attention-free UNet: stem, two downsampling stages, mid block, two
// upsampling stages with skip concatenation, group-norm head. Timestep and
// condition enter through a shared embedding added per-channel in each block.
class UNetModel : public EpsilonModel {
public:
    using EpsilonModel::params;

    explicit UNetModel(UNetConfig cfg = {}, std::uint64_t init_seed = 7);

    std::array<int, 3> latent_shape() const override {
        return {cfg_.latent_h, cfg_.latent_w, cfg_.latent_c};
    }
    int condition_vocab() const override { return cfg_.cond_vocab; }

    ad::Var predict(ad::Tape& tape, ad::Var z, int t, int cond) override;

    ad::ParamStore& params() override { return store_; }
    std::unique_ptr<EpsilonModel> clone() const override;

    const UNetConfig& config() const { return cfg_; }

    // Gradient checkpointing across the down/mid/up blocks; callers opt in per
    // model instance, gradients are unchanged within float tolerance.
    bool recompute() const override { return recompute_; }
    void set_recompute(bool on) override { recompute_ = on; }

    // Names of layers eligible for low-rank adapters (convs and dense).
    std::vector<std::string> adapter_layers() const;

private:
    ad::Var dense(ad::Tape& t, ad::Var x, const std::string& name);
    ad::Var conv(ad::Tape& t, ad::Var x, const std::string& name, int pad, int stride);
    ad::Var layer_weight(ad::Tape& t, const std::string& name);
    ad::Var res_block(ad::Tape& t, ad::Var x, ad::Var emb, const std::string& name, int cin,
                      int cout);

    UNetConfig cfg_;
    ad::ParamStore store_;
    bool recompute_ = false;
};

// Sinusoidal timestep features of dimension `dim` (half sin, half cos).
Tensor sinusoidal_embedding(int t, int dim);

}  // namespace ldms
