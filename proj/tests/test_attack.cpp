#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ldmshield/attack.hpp"
#include "ldmshield/checkpoint.hpp"
#include "ldmshield/hashio.hpp"
#include "ldmshield/patterns.hpp"

using namespace ldms;
using namespace ldms::testing;

namespace {
UNetConfig tiny_config() {
    UNetConfig cfg;
    cfg.latent_h = 8;
    cfg.latent_w = 8;
    cfg.latent_c = 4;
    cfg.base = 8;
    cfg.cond_vocab = 3;
    cfg.time_dim = 16;
    cfg.sin_dim = 8;
    return cfg;
}

UNetModel warmed_unet(std::uint64_t seed) {
    UNetModel model(tiny_config(), seed);
    Rng rng(seed ^ 0xbeef);
    Tensor& head = model.params().value("head.conv.w");
    for (std::size_t i = 0; i < head.size(); ++i) head[i] = 0.05 * rng.normal();
    return model;
}
}  // namespace

TEST_CASE("budget validation") {
    AttackBudget b;
    CHECK_NOTHROW(b.validate());
    b.step = 0.1;  // step > zeta
    CHECK_THROWS_AS(b.validate(), std::invalid_argument);
    b = AttackBudget{};
    b.zeta = 1.5;
    CHECK_THROWS_AS(b.validate(), std::invalid_argument);
    b = AttackBudget{};
    b.epochs = 0;
    CHECK_THROWS_AS(b.validate(), std::invalid_argument);
}

TEST_CASE("pgd_step projection and clamping") {
    Image clean(2, 2, 1);
    clean.data = Tensor::from({2, 2, 1}, {0.5, 0.01, 0.99, 0.5});
    AttackBudget budget;
    budget.zeta = 4.0 / 255.0;
    budget.step = 5e-3;

    Image x = clean;
    Tensor zero_grad({2, 2, 1});
    Image same = pgd_step(x, zero_grad, budget, clean, Direction::descend);
    CHECK(linf_dist(same.data, x.data) == 0.0);

    // a huge step lands exactly on the ball boundary (or the [0,1] clamp)
    Tensor grad = Tensor::from({2, 2, 1}, {-1.0, -1.0, 1.0, 1.0});
    AttackBudget big = budget;
    big.step = big.zeta;  // max legal step
    Image stepped = pgd_step(x, grad, big, clean, Direction::ascend);
    CHECK(stepped.data[0] == doctest::Approx(0.5 - big.zeta).epsilon(1e-15));
    CHECK(stepped.data[3] == doctest::Approx(0.5 + big.zeta).epsilon(1e-15));
    // 0.01 - zeta clamps at 0; 0.99 + zeta clamps at 1
    CHECK(stepped.data[1] == doctest::Approx(0.0));
    CHECK(stepped.data[2] == doctest::Approx(1.0));

    // many steps never leave the ball
    Rng rng(81);
    Image cur = clean;
    for (int i = 0; i < 50; ++i) {
        Tensor g = rng.normal_tensor({2, 2, 1});
        cur = pgd_step(cur, g, budget, clean, Direction::descend);
        CHECK(linf_dist(cur.data, clean.data) <= budget.zeta + 1e-15);
        CHECK(cur.data.min() >= 0.0);
        CHECK(cur.data.max() <= 1.0);
    }
}

TEST_CASE("encoder objective at its optimum has zero value and gradient") {
    AnalyticAutoencoder ae;
    Rng rng(82);
    Image x = random_image(rng, 8, 8);

    AttackObjective obj;
    obj.kind = ObjectiveKind::encoder_target;
    obj.target = ae.encode(x);

    LinearModel model({4, 4, 12}, 5);
    Rng objrng(7);
    auto [value, grad] = objective_value_and_gradient(obj, model, ae, default_schedule(), x,
                                                      objrng, 1);
    CHECK(value == doctest::Approx(0.0).epsilon(1e-18));
    for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad[i] == 0.0);
}

TEST_CASE("ace-plus with zero fusion weight reduces exactly to ace") {
    AnalyticAutoencoder ae;
    Rng rng(83);
    Image x = random_image(rng, 8, 8);
    LinearModel model({4, 4, 12}, 6);

    PatternSpec pspec;
    pspec.height = 8;
    pspec.width = 8;
    pspec.repetition = 2;
    Latent target = ae.encode(generate_pattern(pspec));

    AttackObjective ace;
    ace.kind = ObjectiveKind::ace;
    ace.target = target;

    AttackObjective fused = ace;
    fused.kind = ObjectiveKind::ace_plus;
    fused.fusion_weight = 0.0;

    NoiseSchedule sched = default_schedule();
    Rng r1(55), r2(55);
    auto [v1, g1] = objective_value_and_gradient(ace, model, ae, sched, x, r1, 3);
    auto [v2, g2] = objective_value_and_gradient(fused, model, ae, sched, x, r2, 3);
    CHECK(v1 == v2);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("objective gradients match finite differences on a frozen linear model") {
    AnalyticAutoencoder ae;
    Rng rng(84);
    Image x = random_image(rng, 4, 4);
    LinearModel model({2, 2, 12}, 9);
    NoiseSchedule sched = default_schedule();

    PatternSpec pspec;
    pspec.height = 4;
    pspec.width = 4;
    pspec.repetition = 2;
    Latent target = ae.encode(generate_pattern(pspec));

    for (ObjectiveKind kind : {ObjectiveKind::advdm, ObjectiveKind::ace, ObjectiveKind::ace_plus,
                               ObjectiveKind::encoder_target}) {
        AttackObjective obj;
        obj.kind = kind;
        obj.direction = default_direction(kind);
        if (kind != ObjectiveKind::advdm) obj.target = target;
        obj.fusion_weight = 10.0;

        // fixed (t, eps): every evaluation uses the same rng seed
        auto value_at = [&](const Image& img) {
            Rng r(4242);
            LinearModel m = model;
            return objective_value_and_gradient(obj, m, ae, sched, img, r, 2).first;
        };
        Rng r(4242);
        auto [value, grad] = objective_value_and_gradient(obj, model, ae, sched, x, r, 2);
        CHECK(std::isfinite(value));

        double gmax = 0.0;
        for (std::size_t i = 0; i < grad.size(); ++i) gmax = std::max(gmax, std::abs(grad[i]));
        REQUIRE(gmax > 0.0);
        Rng pick(85);
        double h = 1e-6;
        for (int trial = 0; trial < 16; ++trial) {
            std::size_t i = pick.u64() % x.data.size();
            Image xp = x, xm = x;
            xp.data[i] += h;
            xm.data[i] -= h;
            double fd = (value_at(xp) - value_at(xm)) / (2 * h);
            double denom = std::max({std::abs(fd), std::abs(grad[i]), 0.01 * gmax});
            CHECK(std::abs(fd - grad[i]) / denom < 1e-4);
        }
    }
}

TEST_CASE("missing target raises a config error") {
    AttackObjective obj;
    obj.kind = ObjectiveKind::ace;
    CHECK_THROWS_AS(obj.validate({4, 4, 12}), std::invalid_argument);
    obj.kind = ObjectiveKind::advdm;
    CHECK_NOTHROW(obj.validate({4, 4, 12}));
}

TEST_CASE("run_attack executes exactly N*K pgd and N*M finetune steps") {
    AnalyticAutoencoder ae(3, 4);
    UNetModel model = warmed_unet(31);
    Rng rng(86);
    std::vector<Image> images = {random_image(rng, 16, 16)};

    AttackObjective obj;
    obj.kind = ObjectiveKind::advdm;
    obj.direction = Direction::ascend;
    obj.cond = 1;

    AttackBudget budget;
    budget.zeta = 4.0 / 255.0;
    budget.step = 2e-3;
    budget.epochs = 5;
    budget.pgd_iters_per_epoch = 10;
    budget.finetune_steps = 10;

    AttackEngineConfig engine;
    engine.mc = 1;
    engine.inner_finetune.lr = 1e-4;
    engine.inner_finetune.rank = 2;
    engine.inner_finetune.cond = 1;
    engine.inner_finetune.batch = 1;

    AttackStats stats;
    AttackHooks hooks;
    int hook_calls = 0;
    double worst_violation = 0.0;
    hooks.after_pgd_step = [&](int idx, int, const Image& img) {
        ++hook_calls;
        worst_violation =
            std::max(worst_violation, linf_dist(img.data, images[idx].data) - budget.zeta);
        CHECK(img.data.min() >= 0.0);
        CHECK(img.data.max() <= 1.0);
    };

    auto out = run_attack(images, model, obj, budget, engine, ae, default_schedule(), 777, &stats,
                          &hooks);
    CHECK(stats.pgd_steps == 50);
    CHECK(stats.finetune_steps == 50);
    CHECK(hook_calls == 50);
    CHECK(worst_violation <= 1e-15);
    CHECK(out.size() == 1);
    CHECK(out[0].objective_trace.size() == 50);
    CHECK(linf_dist(out[0].adv.data, out[0].clean.data) <= budget.zeta + 1e-15);
}

TEST_CASE("run_attack with M=0 matches a plain PGD reference loop bit-for-bit") {
    AnalyticAutoencoder ae(3, 4);
    UNetModel model = warmed_unet(37);
    Rng rng(87);
    std::vector<Image> images = {random_image(rng, 16, 16)};

    AttackObjective obj;
    obj.kind = ObjectiveKind::advdm;
    obj.direction = Direction::ascend;
    obj.cond = 0;

    AttackBudget budget;
    budget.zeta = 8.0 / 255.0;
    budget.step = 3e-3;
    budget.epochs = 2;
    budget.pgd_iters_per_epoch = 4;
    budget.finetune_steps = 0;

    AttackEngineConfig engine;
    engine.mc = 2;

    std::uint64_t seed = 909;
    auto out = run_attack(images, model, obj, budget, engine, ae, default_schedule(), seed);

    // reference loop with the engine's fork discipline
    Rng root(seed);
    Image x = images[0];
    UNetModel working(model);
    for (int epoch = 0; epoch < budget.epochs; ++epoch) {
        Rng img_rng = root.fork("attack.pgd", 0 * 100003 + epoch);
        for (int k = 0; k < budget.pgd_iters_per_epoch; ++k) {
            auto [v, g] = objective_value_and_gradient(obj, working, ae, default_schedule(), x,
                                                       img_rng, engine.mc);
            x = pgd_step(x, g, budget, images[0], obj.direction);
        }
    }
    CHECK(linf_dist(out[0].adv.data, x.data) == 0.0);
}

TEST_CASE("run_attack is deterministic and leaves the caller's model untouched") {
    AnalyticAutoencoder ae(3, 4);
    UNetModel model = warmed_unet(41);
    std::string model_hash = store_hash(model.params());

    Rng rng(88);
    std::vector<Image> images = {random_image(rng, 16, 16), random_image(rng, 16, 16)};

    PatternSpec pspec;
    pspec.height = 16;
    pspec.width = 16;
    AttackObjective obj;
    obj.kind = ObjectiveKind::ace;
    AnalyticAutoencoder ae_full(3, 4);
    obj.target = ae_full.encode(generate_pattern(pspec));
    obj.cond = 1;

    AttackBudget budget;
    budget.zeta = 4.0 / 255.0;
    budget.step = 2e-3;
    budget.epochs = 2;
    budget.pgd_iters_per_epoch = 3;
    budget.finetune_steps = 2;

    AttackEngineConfig engine;
    engine.mc = 1;
    engine.inner_finetune.lr = 1e-4;
    engine.inner_finetune.rank = 2;
    engine.inner_finetune.batch = 2;
    engine.inner_finetune.cond = 1;

    auto out1 = run_attack(images, model, obj, budget, engine, ae, default_schedule(), 4242);
    auto out2 = run_attack(images, model, obj, budget, engine, ae, default_schedule(), 4242);
    for (std::size_t i = 0; i < out1.size(); ++i)
        CHECK(sha256_tensor(out1[i].adv.data) == sha256_tensor(out2[i].adv.data));
    CHECK(store_hash(model.params()) == model_hash);
}

TEST_CASE("memory modes produce matching gradients and a lower peak") {
    AnalyticAutoencoder ae(3, 4);
    UNetModel model = warmed_unet(47);
    Rng rng(89);
    Image x = random_image(rng, 16, 16);

    AttackObjective obj;
    obj.kind = ObjectiveKind::advdm;

    Rng r1(321), r2(321);
    reset_peak_tracked_bytes();
    std::size_t base1 = tracked_bytes();
    auto [v1, g1] =
        objective_value_and_gradient(obj, model, ae, default_schedule(), x, r1, 2,
                                     MemoryMode::standard);
    std::size_t peak_standard = peak_tracked_bytes() - base1;

    reset_peak_tracked_bytes();
    std::size_t base2 = tracked_bytes();
    auto [v2, g2] =
        objective_value_and_gradient(obj, model, ae, default_schedule(), x, r2, 2,
                                     MemoryMode::recompute);
    std::size_t peak_recompute = peak_tracked_bytes() - base2;

    CHECK(v1 == doctest::Approx(v2).epsilon(1e-12));
    double gnorm = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i) gnorm = std::max(gnorm, std::abs(g1[i]));
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(std::abs(g1[i] - g2[i]) <= 1e-6 * std::max(gnorm, 1e-12));
    CHECK(peak_recompute < peak_standard);
}
