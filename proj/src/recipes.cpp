#include "ldmshield/recipes.hpp"

#include <cmath>
#include <stdexcept>

#include "ldmshield/kernels.hpp"
#include "ldmshield/optim.hpp"

namespace ldms {

void train_conv_autoencoder(ConvAutoencoder& ae, const std::vector<Image>& train,
                            const AeTrainConfig& cfg, std::uint64_t seed,
                            std::vector<double>* losses) {
    if (train.empty()) throw std::invalid_argument("ae train: empty dataset");
    ad::ParamStore& store = *ae.params();
    OptimizerConfig ocfg;
    ocfg.kind = OptimizerKind::adam;
    ocfg.lr = cfg.lr;
    Optimizer opt(ocfg);
    Rng rng(seed);

    int n = static_cast<int>(train.size());
    int bs = std::min(cfg.batch, n);
    double npix = static_cast<double>(train[0].data.size());

    for (int step = 0; step < cfg.steps; ++step) {
        store.zero_grads();
        double loss_sum = 0.0;
        for (int b = 0; b < bs; ++b) {
            const Image& img = train[rng.uniform_int(n)];
            ad::Tape tape;
            ad::Var x = tape.constant(img.data);
            ad::Var z = ae.encode(tape, x);
            ad::Var recon = ae.decode(tape, z);
            ad::Var mse = tape.scale(tape.sum_squares_diff(recon, x), 1.0 / npix);
            double nz = static_cast<double>(tape.value(z).size());
            ad::Var zsq = tape.scale(tape.sum_squares(z), 1.0 / nz);
            ad::Var dev = tape.add_scaled(zsq, tape.constant(Tensor::scalar(1.0)), -1.0);
            ad::Var loss = tape.add_scaled(mse, tape.sum_squares(dev), cfg.latent_reg);
            double lv = tape.value(loss)[0];
            if (!std::isfinite(lv)) throw std::runtime_error("ae train: non-finite loss");
            loss_sum += lv;
            Tensor seed_grad = Tensor::scalar(1.0 / bs);
            tape.backward(loss, &seed_grad);
        }
        if (losses) losses->push_back(loss_sum / bs);
        opt.step(store);
    }

    // calibrate the latent scale so dataset latents have unit std
    ae.set_latent_scale(1.0);
    double sq_sum = 0.0;
    std::size_t count = 0;
    for (const Image& img : train) {
        Latent z = ae.encode(img);
        sq_sum += kern::dot(z.data.size(), z.data.data(), z.data.data());
        count += z.data.size();
    }
    double std_dev = std::sqrt(sq_sum / static_cast<double>(count));
    if (std_dev > 0.0) ae.set_latent_scale(1.0 / std_dev);
}

double autoencoder_mse(Autoencoder& ae, const std::vector<Image>& images) {
    if (images.empty()) throw std::invalid_argument("autoencoder_mse: empty set");
    double total = 0.0;
    for (const Image& img : images) {
        Tensor recon = ae.decode_raw(ae.encode(img));
        Tensor diff(recon.shape());
        kern::axpby(diff.size(), 1.0, recon.data(), -1.0, img.data.data(), diff.data());
        total += kern::dot(diff.size(), diff.data(), diff.data()) / diff.size();
    }
    return total / static_cast<double>(images.size());
}

void pretrain_unet(UNetModel& model, const std::vector<ConditionedImage>& dataset,
                   Autoencoder& backend, const NoiseSchedule& sched, const PretrainConfig& cfg,
                   std::uint64_t seed, std::vector<double>* losses) {
    if (dataset.empty()) throw std::invalid_argument("pretrain: empty dataset");
    auto [h, w, c] = model.latent_shape();

    std::vector<Latent> latents;
    std::vector<int> conds;
    latents.reserve(dataset.size());
    for (const auto& [img, cond] : dataset) {
        latents.push_back(backend.encode(img));
        conds.push_back(cond);
    }

    ad::ParamStore& store = model.params();
    OptimizerConfig ocfg;
    ocfg.kind = OptimizerKind::adam;
    ocfg.lr = cfg.lr;
    Optimizer opt(ocfg);
    Rng rng(seed);

    int n = static_cast<int>(latents.size());
    int bs = std::min(cfg.batch, n);
    for (int step = 0; step < cfg.steps; ++step) {
        store.zero_grads();
        double loss_sum = 0.0;
        for (int b = 0; b < bs; ++b) {
            int idx = rng.uniform_int(n);
            int t = rng.uniform_int(sched.T);
            Tensor eps = rng.normal_tensor({h, w, c});
            int cond = rng.uniform() < cfg.cond_dropout ? 0 : conds[idx];
            ad::Tape tape;
            ad::Var z0 = tape.constant(latents[idx].data);
            ad::Var zt = noisy_latent_graph(tape, z0, t, eps, sched);
            ad::Var pred = model.predict(tape, zt, t, cond);
            ad::Var loss = tape.sum_squares_diff(pred, tape.constant(eps));
            double lv = tape.value(loss)[0];
            if (!std::isfinite(lv)) throw std::runtime_error("pretrain: non-finite loss");
            loss_sum += lv;
            Tensor seed_grad = Tensor::scalar(1.0 / bs);
            tape.backward(loss, &seed_grad);
        }
        if (losses) losses->push_back(loss_sum / bs);
        opt.step(store);
    }
}

}  // namespace ldms
