#include "ldmshield/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ldmshield/kernels.hpp"

namespace ldms {

const char* objective_kind_name(ObjectiveKind k) {
    switch (k) {
        case ObjectiveKind::advdm: return "advdm";
        case ObjectiveKind::encoder_target: return "encoder";
        case ObjectiveKind::ace: return "ace";
        case ObjectiveKind::ace_plus: return "ace-plus";
        case ObjectiveKind::diffusion_target: return "diffusion-target";
    }
    return "?";
}

ObjectiveKind parse_objective_kind(const std::string& s) {
    if (s == "advdm") return ObjectiveKind::advdm;
    if (s == "encoder" || s == "encoder-target") return ObjectiveKind::encoder_target;
    if (s == "ace") return ObjectiveKind::ace;
    if (s == "ace-plus" || s == "ace+") return ObjectiveKind::ace_plus;
    if (s == "diffusion-target") return ObjectiveKind::diffusion_target;
    throw std::invalid_argument("unknown objective kind: " + s);
}

Direction default_direction(ObjectiveKind k) {
    // advdm raises the denoising loss; the targeted objectives minimize the
    // distance to the target, matching the descent update in the attack loop.
    return k == ObjectiveKind::advdm ? Direction::ascend : Direction::descend;
}

void AttackObjective::validate(const std::array<int, 3>& latent_shape) const {
    if (kind != ObjectiveKind::advdm) {
        if (!target.has_value())
            throw std::invalid_argument(std::string("objective '") + objective_kind_name(kind) +
                                        "' requires a target latent");
        const Tensor& tv = target->data;
        if (tv.dim(0) != latent_shape[0] || tv.dim(1) != latent_shape[1] ||
            tv.dim(2) != latent_shape[2])
            throw std::invalid_argument("objective target shape mismatch");
    }
    if (kind == ObjectiveKind::ace_plus && fusion_weight < 0.0)
        throw std::invalid_argument("ace-plus requires a nonnegative fusion weight");
    if (kind == ObjectiveKind::diffusion_target && diffusion_steps < 1)
        throw std::invalid_argument("diffusion-target requires at least one step");
}

void AttackBudget::validate() const {
    if (!(zeta > 0.0 && zeta <= 1.0)) throw std::invalid_argument("budget: need 0 < zeta <= 1");
    if (!(step > 0.0 && step <= zeta))
        throw std::invalid_argument("budget: need 0 < step <= zeta");
    if (pgd_iters_per_epoch < 0 || epochs < 1 || finetune_steps < 0)
        throw std::invalid_argument("budget: bad iteration counts");
}

std::pair<double, Tensor> objective_value_and_gradient(const AttackObjective& obj,
                                                       EpsilonModel& model, Autoencoder& backend,
                                                       const NoiseSchedule& sched, const Image& x,
                                                       Rng& rng, int mc, MemoryMode memory) {
    obj.validate(model.latent_shape());
    backend.check_encodable(x);
    auto [h, w, c] = model.latent_shape();

    bool recompute = memory == MemoryMode::recompute;
    bool saved_recompute = model.recompute();
    model.set_recompute(recompute);

    ad::Tape tape(true, recompute);
    ad::Var xin = tape.leaf(x.data, true);
    ad::Var z0 = backend.encode(tape, xin);

    ad::Var total;  // scalar accumulator
    auto add_term = [&](ad::Var term, double weight) {
        ad::Var scaled = weight == 1.0 ? term : tape.scale(term, weight);
        total = total.valid() ? tape.add(total, scaled) : scaled;
    };

    switch (obj.kind) {
        case ObjectiveKind::encoder_target: {
            add_term(tape.sum_squares_diff(z0, tape.constant(obj.target->data)), 1.0);
            break;
        }
        case ObjectiveKind::advdm:
        case ObjectiveKind::ace:
        case ObjectiveKind::ace_plus: {
            double inv_mc = 1.0 / mc;
            for (int i = 0; i < mc; ++i) {
                int t = rng.uniform_int(sched.T);
                Tensor eps = rng.normal_tensor({h, w, c});
                ad::Var zt = noisy_latent_graph(tape, z0, t, eps, sched);
                ad::Var pred = model.predict(tape, zt, t, obj.cond);
                ad::Var ref = obj.kind == ObjectiveKind::advdm ? tape.constant(eps)
                                                               : tape.constant(obj.target->data);
                add_term(tape.sum_squares_diff(pred, ref), inv_mc);
            }
            if (obj.kind == ObjectiveKind::ace_plus)
                add_term(tape.sum_squares_diff(z0, tape.constant(obj.target->data)),
                         obj.fusion_weight);
            break;
        }
        case ObjectiveKind::diffusion_target: {
            // Experimental toy-scale analog of a full diffusion attack: run a
            // short differentiable reverse chain from a mid noising level and
            // pull the result toward the target latent.
            int t_star = sched.T / 2;
            Tensor eps = rng.normal_tensor({h, w, c});
            ad::Var z = noisy_latent_graph(tape, z0, t_star, eps, sched);
            int steps = obj.diffusion_steps;
            for (int k = 0; k < steps; ++k) {
                int t = static_cast<int>((static_cast<long long>(steps - 1 - k) * t_star) /
                                         std::max(steps - 1, 1));
                int t_prev = k + 1 < steps
                                 ? static_cast<int>((static_cast<long long>(steps - 2 - k) *
                                                     t_star) / std::max(steps - 1, 1))
                                 : -1;
                double ab_t = sched.alpha_bar[t];
                double ab_prev = t_prev >= 0 ? sched.alpha_bar[t_prev] : 1.0;
                double a_hat = ab_t / ab_prev;
                double b_hat = 1.0 - a_hat;
                ad::Var pred = model.predict(tape, z, t, obj.cond);
                double inv_sa = 1.0 / std::sqrt(a_hat);
                z = tape.add_scaled(tape.scale(z, inv_sa), pred,
                                    -inv_sa * b_hat / std::sqrt(1.0 - ab_t));
            }
            add_term(tape.sum_squares_diff(z, tape.constant(obj.target->data)), 1.0);
            break;
        }
    }

    tape.backward(total);
    double value = tape.value(total)[0];
    Tensor grad = tape.grad(xin);
    model.set_recompute(saved_recompute);
    return {value, std::move(grad)};
}

Image pgd_step(const Image& x, const Tensor& grad, const AttackBudget& budget,
               const Image& x_clean, Direction dir) {
    if (!x.data.same_shape(grad) || !x.data.same_shape(x_clean.data))
        throw std::invalid_argument("pgd_step: shape mismatch");
    double sgn = dir == Direction::ascend ? 1.0 : -1.0;
    Image out(x.height(), x.width(), x.channels());
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        double g = grad[i];
        double d = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
        double v = x.data[i] + sgn * budget.step * d;
        double lo = x_clean.data[i] - budget.zeta;
        double hi = x_clean.data[i] + budget.zeta;
        v = std::clamp(v, lo, hi);
        out.data[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

std::vector<AdversarialExample> run_attack(const std::vector<Image>& cleans, UNetModel& model,
                                           const AttackObjective& obj, const AttackBudget& budget,
                                           const AttackEngineConfig& engine, Autoencoder& backend,
                                           const NoiseSchedule& sched, std::uint64_t seed,
                                           AttackStats* stats, const AttackHooks* hooks) {
    budget.validate();
    obj.validate(model.latent_shape());
    if (cleans.empty()) throw std::invalid_argument("run_attack: empty image set");
    for (const Image& x : cleans) validate_image_range(x);

    reset_peak_tracked_bytes();

    // Working copy; the interleaved finetuning must not touch the caller's model.
    UNetModel working(model);
    working.params().zero_grads();
    working.set_recompute(engine.memory == MemoryMode::recompute);
    if (budget.finetune_steps > 0 && engine.inner_finetune.mode == FinetuneMode::adapter)
        attach_adapters_inplace(working, LoraConfig{engine.inner_finetune.rank, 1.0},
                                splitmix64(seed ^ 0x6c6f7261ULL));

    Rng root(seed);
    std::vector<AdversarialExample> out(cleans.size());
    for (std::size_t i = 0; i < cleans.size(); ++i) {
        out[i].clean = cleans[i];
        out[i].adv = cleans[i];  // x' initialized to x
        out[i].budget = budget.zeta;
        out[i].seed = seed;
    }

    OptimizerConfig ocfg;
    ocfg.kind = engine.inner_finetune.optimizer;
    ocfg.lr = engine.inner_finetune.lr;
    ocfg.momentum = engine.inner_finetune.momentum;
    Optimizer opt(ocfg);
    Rng ft_rng = root.fork("attack.finetune");

    std::vector<int> conds(cleans.size(), engine.inner_finetune.cond);
    for (int epoch = 0; epoch < budget.epochs; ++epoch) {
        if (budget.finetune_steps > 0) {
            std::vector<Latent> latents;
            latents.reserve(out.size());
            for (const auto& ex : out) latents.push_back(backend.encode(ex.adv));
            finetune_steps_inplace(working, latents, conds, budget.finetune_steps, opt, sched,
                                   engine.inner_finetune.batch, ft_rng);
            if (stats) stats->finetune_steps += budget.finetune_steps;
        }
        for (std::size_t i = 0; i < out.size(); ++i) {
            Rng img_rng = root.fork("attack.pgd", static_cast<std::uint64_t>(i) * 100003 + epoch);
            for (int k = 0; k < budget.pgd_iters_per_epoch; ++k) {
                auto [value, grad] = objective_value_and_gradient(
                    obj, working, backend, sched, out[i].adv, img_rng, engine.mc, engine.memory);
                out[i].objective_trace.push_back(value);
                out[i].adv = pgd_step(out[i].adv, grad, budget, out[i].clean, obj.direction);
                if (stats) ++stats->pgd_steps;
                if (hooks && hooks->after_pgd_step)
                    hooks->after_pgd_step(static_cast<int>(i), k, out[i].adv);
            }
        }
        if (hooks && hooks->after_epoch) hooks->after_epoch(epoch, working);
    }

    if (stats) stats->peak_memory_bytes = peak_tracked_bytes();
    return out;
}

}  // namespace ldms
