#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ldmshield/diffusion.hpp"
#include "ldmshield/finetune.hpp"

namespace ldms {

enum class ObjectiveKind { advdm, encoder_target, ace, ace_plus, diffusion_target };
enum class Direction { ascend, descend };
enum class MemoryMode { standard, recompute };

const char* objective_kind_name(ObjectiveKind k);
ObjectiveKind parse_objective_kind(const std::string& s);
Direction default_direction(ObjectiveKind k);

struct AttackObjective {
    ObjectiveKind kind = ObjectiveKind::ace;
    std::optional<Latent> target;   // required for all kinds except advdm
    double fusion_weight = 100.0;   // ace_plus only
    Direction direction = Direction::descend;
    int cond = 0;                   // condition id for the score evaluations
    int diffusion_steps = 4;        // diffusion_target only

    void validate(const std::array<int, 3>& latent_shape) const;
};

struct AttackBudget {
    double zeta = 4.0 / 255.0;   // l-inf radius
    double step = 5e-3;          // PGD step length
    int pgd_iters_per_epoch = 10;  // K
    int epochs = 5;                // N
    int finetune_steps = 10;       // M

    void validate() const;
};

struct AttackEngineConfig {
    MemoryMode memory = MemoryMode::standard;
    int mc = 4;  // (t, eps) draws per objective evaluation
    FinetuneConfig inner_finetune;  // used for the interleaved poisoning steps
};

struct AdversarialExample {
    Image clean;
    Image adv;
    double budget = 0.0;
    std::vector<double> objective_trace;  // per PGD step
    std::uint64_t seed = 0;
};

struct AttackStats {
    long pgd_steps = 0;
    long finetune_steps = 0;
    std::size_t peak_memory_bytes = 0;
};

struct AttackHooks {
    // called after each PGD step with the image index and the updated image
    std::function<void(int, int, const Image&)> after_pgd_step;
    // called after each epoch with the working model
    std::function<void(int, UNetModel&)> after_epoch;
};

// Monte-Carlo objective estimate and its gradient w.r.t. the image.
std::pair<double, Tensor> objective_value_and_gradient(const AttackObjective& obj,
                                                       EpsilonModel& model, Autoencoder& backend,
                                                       const NoiseSchedule& sched, const Image& x,
                                                       Rng& rng, int mc = 4,
                                                       MemoryMode memory = MemoryMode::standard);

// Signed-gradient step, then project into the l-inf ball around x_clean,
// then clamp to [0, 1].
Image pgd_step(const Image& x, const Tensor& grad, const AttackBudget& budget,
               const Image& x_clean, Direction dir);

// Algorithm: for each of N epochs, M finetune steps of a working model copy
// on the current adversarial set, then K PGD steps per image. The caller's
// model is untouched.
std::vector<AdversarialExample> run_attack(const std::vector<Image>& cleans, UNetModel& model,
                                           const AttackObjective& obj, const AttackBudget& budget,
                                           const AttackEngineConfig& engine, Autoencoder& backend,
                                           const NoiseSchedule& sched, std::uint64_t seed,
                                           AttackStats* stats = nullptr,
                                           const AttackHooks* hooks = nullptr);

}  // namespace ldms
