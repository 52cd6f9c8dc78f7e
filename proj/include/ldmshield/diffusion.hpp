#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ldmshield/autoencoder.hpp"
#include "ldmshield/epsmodel.hpp"
#include "ldmshield/image.hpp"
#include "ldmshield/rng.hpp"
#include "ldmshield/schedule.hpp"

namespace ldms {

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
Latent forward_noise(const Latent& z0, int t, const Latent& eps, const NoiseSchedule& sched);

// Regression target for the model prediction in the noise-prediction
// convention: the injected noise itself.
Latent ground_truth_target(const Latent& eps);

ad::Var noisy_latent_graph(ad::Tape& tape, ad::Var z0, int t, const Tensor& eps,
                           const NoiseSchedule& sched);

using ConditionedImage = std::pair<Image, int>;

// Mean over the batch of ||model(z_t, t, cond) - eps||^2 with per-example
// (t, eps) draws from rng. Evaluation only; training lives in finetune.
double ldm_loss(EpsilonModel& model, const std::vector<ConditionedImage>& batch,
                Autoencoder& backend, const NoiseSchedule& sched, Rng& rng);

struct SampleTrace {
    int start_timestep = -1;
    std::vector<int> timesteps;
};

// Ancestral reverse chain from pure noise over an evenly spaced timestep
// subsequence of length `steps`. Deterministic given seed.
Latent sample(EpsilonModel& model, const NoiseSchedule& sched, int steps, int cond,
              std::uint64_t seed, SampleTrace* trace = nullptr);

// Encode, noise to t* = round(strength * T), reverse chain back to 0, decode.
// steps == 0 runs every timestep from t* down; otherwise the chain is respaced.
Image sdedit(EpsilonModel& model, Autoencoder& backend, const NoiseSchedule& sched,
             const Image& x, double strength, int cond, std::uint64_t seed, int steps = 0,
             SampleTrace* trace = nullptr);

}  // namespace ldms
