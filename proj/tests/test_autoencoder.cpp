#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ldmshield/autoencoder.hpp"
#include "ldmshield/recipes.hpp"

using namespace ldms;
using namespace ldms::testing;

TEST_CASE("analytic autoencoder shape contract and exact roundtrip") {
    AnalyticAutoencoder ae;  // full-rank: c = 12 for 3-channel images, f = 2
    Rng rng(51);
    // dyadic pixel grid: every Haar butterfly step is exact in doubles
    Image img = random_image(rng, 32, 32);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = std::floor(img.data[i] * 256.0) / 256.0;
    Latent z = ae.encode(img);
    CHECK(z.height() == 16);
    CHECK(z.width() == 16);
    CHECK(z.channels() == 12);

    Image back = ae.decode(z);
    CHECK(linf_dist(back.data, img.data) == 0.0);

    // 8-bit pixels (k/255) round-trip exactly after requantization
    Image img8 = quantize8(random_image(rng, 32, 32));
    Image back8 = quantize8(ae.decode(ae.encode(img8)));
    CHECK(linf_dist(back8.data, img8.data) == 0.0);

    // reduced-rank analytic backend keeps the (H/f, W/f, c) shape contract
    AnalyticAutoencoder ae4(3, 4);
    Latent z4 = ae4.encode(img);
    CHECK(z4.height() == 16);
    CHECK(z4.width() == 16);
    CHECK(z4.channels() == 4);

    Image odd(31, 32, 3);
    CHECK_THROWS_AS(ae.encode(odd), std::invalid_argument);
}

TEST_CASE("analytic basis is orthonormal") {
    AnalyticAutoencoder ae;
    const Tensor& b = ae.basis();  // (2, 2, 3, 12)
    for (int l1 = 0; l1 < 12; ++l1)
        for (int l2 = 0; l2 < 12; ++l2) {
            double dot = 0.0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    for (int c = 0; c < 3; ++c)
                        dot += b[((dy * 2 + dx) * 3 + c) * 12 + l1] *
                               b[((dy * 2 + dx) * 3 + c) * 12 + l2];
            CHECK(dot == doctest::Approx(l1 == l2 ? 1.0 : 0.0).epsilon(1e-12));
        }
}

TEST_CASE("constant image has energy only in the DC latent channels") {
    AnalyticAutoencoder ae;
    Image img(8, 8, 3);
    img.data.fill(0.4);
    Latent z = ae.encode(img);
    for (int y = 0; y < z.height(); ++y)
        for (int x = 0; x < z.width(); ++x)
            for (int c = 0; c < 12; ++c) {
                if (c < 3)  // DC rows carry 2 * pixel value
                    CHECK(z.data.at(y, x, c) == doctest::Approx(0.8).epsilon(1e-12));
                else
                    CHECK(z.data.at(y, x, c) == doctest::Approx(0.0).epsilon(1e-12));
            }
}

TEST_CASE("zero latent decodes to the basis preimage (all zeros) and decode clamps") {
    AnalyticAutoencoder ae;
    Latent zero(4, 4, 12);
    // linear map: transpose of the stored orthogonal basis applied to 0 is 0
    Image img = ae.decode(zero);
    CHECK(img.data.max() == 0.0);
    CHECK(img.data.min() == 0.0);

    Rng rng(52);
    Latent wild(4, 4, 12);
    wild.data = rng.normal_tensor({4, 4, 12});
    for (std::size_t i = 0; i < wild.data.size(); ++i) wild.data[i] *= 10.0;
    Image clamped = ae.decode(wild);
    CHECK(clamped.data.min() >= 0.0);
    CHECK(clamped.data.max() <= 1.0);
}

TEST_CASE("conv autoencoder trains toward lower reconstruction error") {
    Rng rng(53);
    std::vector<Image> train;
    for (int i = 0; i < 6; ++i) train.push_back(random_image(rng, 16, 16));

    ConvAutoencoderConfig cfg;
    cfg.base = 8;
    ConvAutoencoder ae(cfg, 7);
    double before = autoencoder_mse(ae, train);

    AeTrainConfig tc;
    tc.steps = 80;
    tc.lr = 3e-3;
    tc.batch = 6;
    train_conv_autoencoder(ae, train, tc, 11);
    double after = autoencoder_mse(ae, train);
    CHECK(after < 0.6 * before);

    // latent scale calibrated to unit std on the training set
    double sq = 0.0;
    std::size_t n = 0;
    for (const Image& img : train) {
        Latent z = ae.encode(img);
        for (std::size_t i = 0; i < z.data.size(); ++i) sq += z.data[i] * z.data[i];
        n += z.data.size();
    }
    CHECK(std::sqrt(sq / n) == doctest::Approx(1.0).epsilon(1e-9));

    Latent z = ae.encode(train[0]);
    CHECK(z.height() == 8);
    CHECK(z.channels() == 4);
    Image out = ae.decode(z);
    CHECK(out.data.min() >= 0.0);
    CHECK(out.data.max() <= 1.0);
}

TEST_CASE("encode gradients flow through both backends") {
    Rng rng(54);
    Image img = random_image(rng, 8, 8);

    AnalyticAutoencoder analytic;
    ad::Tape t1;
    ad::Var x1 = t1.leaf(img.data, true);
    ad::Var loss1 = t1.sum_squares(analytic.encode(t1, x1));
    t1.backward(loss1);
    // orthogonal rows: d||Ex||^2/dx = 2 E^T E x with full rank = 2x
    const Tensor& g1 = t1.grad(x1);
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(g1[i] == doctest::Approx(2.0 * img.data[i]).epsilon(1e-9));

    ConvAutoencoder conv(ConvAutoencoderConfig{3, 8, 4}, 9);
    ad::Tape t2;
    ad::Var x2 = t2.leaf(img.data, true);
    ad::Var loss2 = t2.sum_squares(conv.encode(t2, x2));
    t2.backward(loss2);
    double gnorm = 0.0;
    const Tensor& g2 = t2.grad(x2);
    for (std::size_t i = 0; i < g2.size(); ++i) gnorm += g2[i] * g2[i];
    CHECK(gnorm > 0.0);
}
