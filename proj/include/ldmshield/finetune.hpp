#pragma once

#include <memory>
#include <vector>

#include "ldmshield/diffusion.hpp"
#include "ldmshield/optim.hpp"
#include "ldmshield/unet.hpp"

namespace ldms {

struct LoraConfig {
    int rank = 4;
    double scale = 1.0;
};

// Returns a copy of the model with zero-initialized low-rank adapters on all
// conv/dense layers; base weights are frozen and outputs are bit-identical to
// the base model until a training step runs.
std::unique_ptr<UNetModel> attach_adapters(const UNetModel& model, const LoraConfig& cfg,
                                           std::uint64_t seed);
void attach_adapters_inplace(UNetModel& model, const LoraConfig& cfg, std::uint64_t seed);

// Folds adapter deltas into the base weights and drops the adapter params.
void merge_adapters(UNetModel& model);

enum class FinetuneMode { adapter, full };

struct FinetuneConfig {
    int steps = 10;
    double lr = 1e-5;
    int rank = 4;
    FinetuneMode mode = FinetuneMode::adapter;
    int cond = 0;
    int batch = 4;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double momentum = 0.9;

    void validate() const;
};

struct FinetuneTrace {
    std::vector<double> losses;  // per-step mean batch loss
};

// cfg.steps gradient steps on the denoising loss. Deterministic given seed;
// adapter mode trains only the adapters. Throws on non-finite loss.
std::unique_ptr<UNetModel> finetune(const UNetModel& base,
                                    const std::vector<ConditionedImage>& dataset,
                                    const FinetuneConfig& cfg, Autoencoder& backend,
                                    const NoiseSchedule& sched, std::uint64_t seed,
                                    FinetuneTrace* trace = nullptr);

// In-place training loop shared by finetune() and the attack engine's
// interleaved poisoning phase. Latents must match dataset order.
void finetune_steps_inplace(UNetModel& model, const std::vector<Latent>& latents,
                            const std::vector<int>& conds, int steps, Optimizer& opt,
                            const NoiseSchedule& sched, int batch, Rng& rng,
                            FinetuneTrace* trace = nullptr);

}  // namespace ldms
