#include "ldmshield/finetune.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ldmshield/kernels.hpp"

namespace ldms {

void FinetuneConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("finetune: steps must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("finetune: learning rate must be positive");
    if (mode == FinetuneMode::adapter && rank <= 0)
        throw std::invalid_argument("finetune: adapter rank must be positive");
    if (batch < 1) throw std::invalid_argument("finetune: batch must be >= 1");
}

void attach_adapters_inplace(UNetModel& model, const LoraConfig& cfg, std::uint64_t seed) {
    if (cfg.rank <= 0) throw std::invalid_argument("attach_adapters: rank must be positive");
    ad::ParamStore& store = model.params();
    Rng rng(seed);
    store.freeze_all();
    for (const std::string& layer : model.adapter_layers()) {
        const Tensor& w = store.value(layer + ".w");
        int in_flat = 1;
        for (int i = 0; i + 1 < w.rank(); ++i) in_flat *= w.dim(i);
        int out = w.dim(w.rank() - 1);
        Tensor a = rng.fork(layer).normal_tensor({in_flat, cfg.rank});
        double s = 1.0 / std::sqrt(static_cast<double>(in_flat));
        for (std::size_t i = 0; i < a.size(); ++i) a[i] *= s;
        store.create(layer + ".lora_a", std::move(a));
        store.create(layer + ".lora_b", Tensor({cfg.rank, out}));  // zero: delta starts at 0
        store.create(layer + ".lora_scale", Tensor::scalar(cfg.scale));
        store.freeze(layer + ".lora_scale");
    }
}

std::unique_ptr<UNetModel> attach_adapters(const UNetModel& model, const LoraConfig& cfg,
                                           std::uint64_t seed) {
    auto out = std::make_unique<UNetModel>(model);
    out->params().zero_grads();
    attach_adapters_inplace(*out, cfg, seed);
    return out;
}

void merge_adapters(UNetModel& model) {
    ad::ParamStore& store = model.params();
    for (const std::string& layer : model.adapter_layers()) {
        if (!store.has(layer + ".lora_a")) continue;
        const Tensor& a = store.value(layer + ".lora_a");
        const Tensor& b = store.value(layer + ".lora_b");
        double s = store.value(layer + ".lora_scale")[0];
        Tensor& w = store.value(layer + ".w");
        int in_flat = a.dim(0), r = a.dim(1), out = b.dim(1);
        Tensor delta({in_flat, out});
        kern::matmul(in_flat, r, out, a.data(), b.data(), delta.data());
        kern::acc_scaled(w.size(), s, delta.data(), w.data());
        store.remove(layer + ".lora_a");
        store.remove(layer + ".lora_b");
        store.remove(layer + ".lora_scale");
    }
    store.unfreeze_all();
}

void finetune_steps_inplace(UNetModel& model, const std::vector<Latent>& latents,
                            const std::vector<int>& conds, int steps, Optimizer& opt,
                            const NoiseSchedule& sched, int batch, Rng& rng,
                            FinetuneTrace* trace) {
    if (latents.empty()) throw std::invalid_argument("finetune: empty dataset");
    ad::ParamStore& store = model.params();
    auto [h, w, c] = model.latent_shape();
    int n = static_cast<int>(latents.size());
    int bs = std::min(batch, n);
    for (int step = 0; step < steps; ++step) {
        store.zero_grads();
        double loss_sum = 0.0;
        for (int b = 0; b < bs; ++b) {
            int idx = rng.uniform_int(n);
            int t = rng.uniform_int(sched.T);
            Tensor eps = rng.normal_tensor({h, w, c});
            ad::Tape tape(true, model.recompute());
            ad::Var z0 = tape.constant(latents[idx].data);
            ad::Var zt = noisy_latent_graph(tape, z0, t, eps, sched);
            ad::Var pred = model.predict(tape, zt, t, conds[idx]);
            ad::Var loss = tape.sum_squares_diff(pred, tape.constant(eps));
            double lv = tape.value(loss)[0];
            if (!std::isfinite(lv)) {
                std::ostringstream os;
                os << "finetune: non-finite loss " << lv << " at step " << step << " (t=" << t
                   << ", example=" << idx << ")";
                throw std::runtime_error(os.str());
            }
            loss_sum += lv;
            Tensor seed_grad = Tensor::scalar(1.0 / bs);
            tape.backward(loss, &seed_grad);
        }
        if (trace) trace->losses.push_back(loss_sum / bs);
        opt.step(store);
    }
}

std::unique_ptr<UNetModel> finetune(const UNetModel& base,
                                    const std::vector<ConditionedImage>& dataset,
                                    const FinetuneConfig& cfg, Autoencoder& backend,
                                    const NoiseSchedule& sched, std::uint64_t seed,
                                    FinetuneTrace* trace) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("finetune: empty dataset");

    std::unique_ptr<UNetModel> model;
    if (cfg.mode == FinetuneMode::adapter) {
        model = attach_adapters(base, LoraConfig{cfg.rank, 1.0}, splitmix64(seed ^ 0x6c6f7261ULL));
    } else {
        model = std::make_unique<UNetModel>(base);
        model->params().zero_grads();
        model->params().unfreeze_all();
    }

    std::vector<Latent> latents;
    std::vector<int> conds;
    latents.reserve(dataset.size());
    for (const auto& [img, cond] : dataset) {
        latents.push_back(backend.encode(img));
        conds.push_back(cond);
    }

    OptimizerConfig ocfg;
    ocfg.kind = cfg.optimizer;
    ocfg.lr = cfg.lr;
    ocfg.momentum = cfg.momentum;
    Optimizer opt(ocfg);
    Rng rng(seed);
    finetune_steps_inplace(*model, latents, conds, cfg.steps, opt, sched, cfg.batch, rng, trace);
    return model;
}

}  // namespace ldms
