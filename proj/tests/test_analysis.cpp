#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ldmshield/analysis.hpp"
#include "ldmshield/unet.hpp"

using namespace ldms;
using namespace ldms::testing;

TEST_CASE("eps_adv vanishes exactly at x' = x for any mc") {
    AnalyticAutoencoder ae;
    LinearModel model({4, 4, 12}, 3);
    Rng rng(91);
    Image x = random_image(rng, 8, 8);
    NoiseSchedule sched = default_schedule();

    for (int mc : {1, 4, 16}) {
        BiasField f = estimate_eps_adv(model, x, x, 300, mc, ae, sched, 5);
        CHECK(f.data.min() == 0.0);
        CHECK(f.data.max() == 0.0);
        CHECK(f.mc_samples == mc);
        CHECK(f.kind == BiasKind::eps_adv);
    }
    CHECK_THROWS_AS(estimate_eps_adv(model, x, x, -1, 4, ae, sched, 5), std::out_of_range);
    CHECK_THROWS_AS(estimate_eps_adv(model, x, x, 300, 0, ae, sched, 5), std::invalid_argument);
}

TEST_CASE("eps_adv of a linear model equals the Jacobian response in closed form") {
    AnalyticAutoencoder ae;
    LinearModel model({4, 4, 12}, 7);
    Rng rng(92);
    Image x = random_image(rng, 8, 8);
    Image x_adv = x;
    for (std::size_t i = 0; i < x_adv.data.size(); ++i)
        x_adv.data[i] = std::clamp(x_adv.data[i] + 0.01 * rng.normal(), 0.0, 1.0);

    int t = 500;
    NoiseSchedule sched = default_schedule();
    BiasField f = estimate_eps_adv(model, x, x_adv, t, 3, ae, sched, 17);

    // closed form: J * sqrt(abar_t) * (z'_0 - z_0), flattened
    Latent z0 = ae.encode(x), z0a = ae.encode(x_adv);
    int n = static_cast<int>(z0.data.size());
    Tensor diff({1, n});
    for (int i = 0; i < n; ++i)
        diff[i] = std::sqrt(sched.alpha_bar[t]) * (z0a.data[i] - z0.data[i]);
    Tensor expect({1, n});
    const Tensor& J = model.jacobian();
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += diff[i] * J.at(i, j);
        expect[j] = s;
    }
    for (int i = 0; i < n; ++i) CHECK(f.data[i] == doctest::Approx(expect[i]).epsilon(1e-9));
}

TEST_CASE("eps_adv estimator standard error shrinks like 1/sqrt(mc)") {
    AnalyticAutoencoder ae;
    // a mildly nonlinear model so the estimate has Monte-Carlo variance
    UNetConfig cfg;
    cfg.latent_h = 4;
    cfg.latent_w = 4;
    cfg.latent_c = 12;
    cfg.base = 8;
    cfg.cond_vocab = 2;
    cfg.time_dim = 16;
    cfg.sin_dim = 8;
    UNetModel model(cfg, 9);
    Rng wrng(93);
    Tensor& head = model.params().value("head.conv.w");
    for (std::size_t i = 0; i < head.size(); ++i) head[i] = 0.4 * wrng.normal();

    Rng rng(94);
    Image x = random_image(rng, 8, 8);
    Image x_adv = x;
    for (std::size_t i = 0; i < x_adv.data.size(); ++i)
        x_adv.data[i] = std::clamp(x_adv.data[i] + 0.02 * rng.normal(), 0.0, 1.0);

    NoiseSchedule sched = default_schedule();
    const int reps = 24;
    auto estimator_variance = [&](int mc) {
        // variance across seeds of the first field element
        std::vector<double> vals;
        for (int r = 0; r < reps; ++r) {
            BiasField f =
                estimate_eps_adv(model, x, x_adv, 600, mc, ae, sched, 1000 + 7919 * r);
            vals.push_back(f.data[0]);
        }
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= vals.size();
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        return var / (vals.size() - 1);
    };

    double v4 = estimator_variance(4);
    double v16 = estimator_variance(16);
    double v64 = estimator_variance(64);
    // 1/mc law within generous statistical slack
    CHECK(v16 < v4);
    CHECK(v64 < v16);
    CHECK(v4 / v16 > 1.8);
    CHECK(v4 / v16 < 9.0);
    CHECK(v16 / v64 > 1.8);
    CHECK(v16 / v64 < 9.0);
}

TEST_CASE("reverse bias vanishes when phi and theta_star equal theta") {
    AnalyticAutoencoder ae;
    LinearModel model({4, 4, 12}, 11);
    Rng rng(95);
    Image x = random_image(rng, 8, 8);
    Image x_adv = random_image(rng, 8, 8);
    BiasField f = estimate_reverse_bias(model, model, model, x, x_adv, 200, 2, ae,
                                        default_schedule(), 3);
    CHECK(f.data.min() == 0.0);
    CHECK(f.data.max() == 0.0);
    CHECK(f.kind == BiasKind::reverse_bias);
}

TEST_CASE("reverse bias is asymmetric in the clean/adversarial roles") {
    AnalyticAutoencoder ae;
    LinearModel theta({4, 4, 12}, 13);
    LinearModel theta_star({4, 4, 12}, 14);
    LinearModel phi({4, 4, 12}, 15);
    Rng rng(96);
    Image x = random_image(rng, 8, 8);
    Image x_adv = random_image(rng, 8, 8);

    BiasField ab = estimate_reverse_bias(theta, theta_star, phi, x, x_adv, 300, 2, ae,
                                         default_schedule(), 9);
    BiasField ba = estimate_reverse_bias(theta, theta_star, phi, x_adv, x, 300, 2, ae,
                                         default_schedule(), 9);
    double diff = 0.0;
    for (std::size_t i = 0; i < ab.data.size(); ++i)
        diff = std::max(diff, std::abs(ab.data[i] - ba.data[i]));
    CHECK(diff > 1e-6);
}

TEST_CASE("sampling bias vanishes for a perfect oracle model") {
    AnalyticAutoencoder ae;
    Rng rng(97);
    Image holdout = random_image(rng, 8, 8);
    NoiseSchedule sched = default_schedule();
    OracleModel oracle({4, 4, 12}, ae.encode(holdout).data, sched);

    BiasField f = estimate_sampling_bias(oracle, holdout, 400, 4, ae, sched, 21);
    for (std::size_t i = 0; i < f.data.size(); ++i)
        CHECK(f.data[i] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(f.kind == BiasKind::sampling_bias);
}

TEST_CASE("sampling-bias estimator variance roughly halves when mc doubles") {
    AnalyticAutoencoder ae;
    LinearModel model({4, 4, 12}, 23);
    Rng rng(98);
    Image holdout = random_image(rng, 8, 8);
    NoiseSchedule sched = default_schedule();

    const int reps = 32;
    auto variance_at = [&](int mc) {
        std::vector<double> vals;
        for (int r = 0; r < reps; ++r) {
            BiasField f = estimate_sampling_bias(model, holdout, 500, mc, ae, sched,
                                                 5000 + 104729 * r);
            vals.push_back(f.data[3]);
        }
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= vals.size();
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        return var / (vals.size() - 1);
    };
    double v8 = variance_at(8);
    double v16 = variance_at(16);
    CHECK(v16 < v8);
    CHECK(v8 / v16 > 1.2);
    CHECK(v8 / v16 < 4.0);
}

TEST_CASE("accumulate_sampling_error is the beta-weighted sum") {
    NoiseSchedule sched = default_schedule();
    std::vector<int> ts = {100, 300, 500};

    std::map<int, BiasField> zeros;
    for (int t : ts) {
        BiasField f;
        f.data = Tensor({2, 2, 1});
        f.timestep = t;
        f.mc_samples = 4;
        f.kind = BiasKind::sampling_bias;
        zeros.emplace(t, std::move(f));
    }
    BiasField eta0 = accumulate_sampling_error(zeros, sched);
    CHECK(eta0.data.min() == 0.0);
    CHECK(eta0.data.max() == 0.0);
    CHECK(eta0.kind == BiasKind::sampling_error);

    // single timestep: beta(t0) * field
    std::map<int, BiasField> single;
    BiasField f;
    f.data = Tensor::full({2, 2, 1}, 2.0);
    f.timestep = 300;
    f.mc_samples = 1;
    single.emplace(300, f);
    BiasField eta1 = accumulate_sampling_error(single, sched);
    CHECK(eta1.data[0] == doctest::Approx(2.0 * sched.beta[300]).epsilon(1e-15));

    // constant field at every t: F * sum(beta) with an independent sum oracle
    std::map<int, BiasField> consts;
    for (int t : ts) {
        BiasField g;
        g.data = Tensor::full({2, 2, 1}, 1.5);
        g.timestep = t;
        g.mc_samples = 1;
        consts.emplace(t, std::move(g));
    }
    long double beta_sum = 0.0L;
    for (int t : ts) beta_sum += sched.beta[t];
    BiasField eta2 = accumulate_sampling_error(consts, sched);
    CHECK(eta2.data[2] ==
          doctest::Approx(1.5 * static_cast<double>(beta_sum)).epsilon(1e-14));

    // linearity: accumulate(aF + bG) = a accumulate(F) + b accumulate(G)
    Rng rng(99);
    std::map<int, BiasField> fa, fb, fmix;
    for (int t : ts) {
        BiasField A, B, M;
        A.data = rng.normal_tensor({2, 2, 1});
        B.data = rng.normal_tensor({2, 2, 1});
        M.data = Tensor({2, 2, 1});
        for (std::size_t i = 0; i < M.data.size(); ++i)
            M.data[i] = 2.0 * A.data[i] - 0.5 * B.data[i];
        A.timestep = B.timestep = M.timestep = t;
        A.mc_samples = B.mc_samples = M.mc_samples = 1;
        fa.emplace(t, std::move(A));
        fb.emplace(t, std::move(B));
        fmix.emplace(t, std::move(M));
    }
    BiasField ea = accumulate_sampling_error(fa, sched);
    BiasField eb = accumulate_sampling_error(fb, sched);
    BiasField em = accumulate_sampling_error(fmix, sched);
    for (std::size_t i = 0; i < em.data.size(); ++i)
        CHECK(em.data[i] == doctest::Approx(2.0 * ea.data[i] - 0.5 * eb.data[i]).epsilon(1e-12));
}

TEST_CASE("cosine protocol trivial geometry") {
    BiasField a, b, c, zero;
    a.data = Tensor::from({2, 2, 1}, {1, 0, 0, 0});
    b.data = Tensor::from({2, 2, 1}, {-1, 0, 0, 0});
    c.data = Tensor::from({2, 2, 1}, {0, 1, 0, 0});
    zero.data = Tensor({2, 2, 1});

    CosineReport self = cosine_protocol({a}, {a});
    CHECK(self.mean == doctest::Approx(1.0));
    CHECK(cosine_protocol({a}, {b}).mean == doctest::Approx(-1.0));
    CHECK(cosine_protocol({a}, {c}).mean == doctest::Approx(0.0));

    CosineReport mixed = cosine_protocol({a, zero}, {a});
    CHECK(mixed.excluded_pairs == 1);
    CHECK(mixed.mean == doctest::Approx(1.0));

    CosineReport full = cosine_protocol({a, b, c}, {a, b, c});
    for (int i = 0; i < 3; ++i) CHECK(full.matrix.at(i, i) == doctest::Approx(1.0));
    for (std::size_t i = 0; i < full.matrix.size(); ++i) {
        if (!std::isnan(full.matrix[i])) {
            CHECK(full.matrix[i] >= -1.0 - 1e-12);
            CHECK(full.matrix[i] <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("normalize_field affine map and degenerate constant case") {
    BiasField f;
    f.data = Tensor::from({1, 2, 2}, {-2.0, 2.0, 0.0, 1.0});
    NormalizedField n = normalize_field(f);
    CHECK(!n.degenerate);
    CHECK(n.data[0] == doctest::Approx(0.0));
    CHECK(n.data[1] == doctest::Approx(1.0));
    CHECK(n.data[2] == doctest::Approx(0.5));  // value 0 sits at the affine midpoint
    CHECK(n.data[3] == doctest::Approx(0.75));

    // already-[0,1] field with min 0 and max 1 is unchanged
    BiasField g;
    g.data = Tensor::from({1, 2, 2}, {0.0, 1.0, 0.25, 0.75});
    NormalizedField ng = normalize_field(g);
    for (std::size_t i = 0; i < ng.data.size(); ++i)
        CHECK(ng.data[i] == doctest::Approx(g.data[i]));

    // argmax/argmin positions unchanged (order preserving)
    Rng rng(101);
    BiasField h;
    h.data = rng.normal_tensor({3, 3, 2});
    NormalizedField nh = normalize_field(h);
    std::size_t argmax_in = 0, argmax_out = 0;
    for (std::size_t i = 0; i < h.data.size(); ++i) {
        if (h.data[i] > h.data[argmax_in]) argmax_in = i;
        if (nh.data[i] > nh.data[argmax_out]) argmax_out = i;
    }
    CHECK(argmax_in == argmax_out);

    BiasField constf;
    constf.data = Tensor::full({2, 2, 1}, 3.7);
    NormalizedField nc = normalize_field(constf);
    CHECK(nc.degenerate);
    for (std::size_t i = 0; i < nc.data.size(); ++i) CHECK(nc.data[i] == 0.5);
}

TEST_CASE("heatmap renders channels side by side") {
    BiasField f;
    Rng rng(102);
    f.data = rng.normal_tensor({4, 6, 3});
    Image img = render_heatmap(f);
    CHECK(img.height() == 4);
    CHECK(img.width() == 3 * 6 + 2 * 2);
    CHECK(img.channels() == 3);
    CHECK(img.data.min() >= 0.0);
    CHECK(img.data.max() <= 1.0);
}
