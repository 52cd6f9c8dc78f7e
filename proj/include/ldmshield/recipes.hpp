#pragma once

#include <cstdint>
#include <vector>

#include "ldmshield/autoencoder.hpp"
#include "ldmshield/diffusion.hpp"
#include "ldmshield/unet.hpp"

namespace ldms {

struct AeTrainConfig {
    int steps = 700;
    double lr = 2e-3;
    int batch = 8;
    double latent_reg = 1e-3;  // pulls mean squared latent magnitude toward 1
    double mse_threshold = 6e-3;  // held-out reconstruction gate for the recipe
};

// Adam on per-pixel reconstruction MSE plus the latent magnitude regularizer;
// calibrates the latent scale to unit std on the training set afterwards.
void train_conv_autoencoder(ConvAutoencoder& ae, const std::vector<Image>& train,
                            const AeTrainConfig& cfg, std::uint64_t seed,
                            std::vector<double>* losses = nullptr);

// Mean per-pixel reconstruction MSE over a set.
double autoencoder_mse(Autoencoder& ae, const std::vector<Image>& images);

struct PretrainConfig {
    int steps = 2200;
    double lr = 1.2e-3;
    int batch = 4;
    double cond_dropout = 0.1;  // fraction of examples trained with cond id 0
};

void pretrain_unet(UNetModel& model, const std::vector<ConditionedImage>& dataset,
                   Autoencoder& backend, const NoiseSchedule& sched, const PretrainConfig& cfg,
                   std::uint64_t seed, std::vector<double>* losses = nullptr);

}  // namespace ldms
