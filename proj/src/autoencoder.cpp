#include "ldmshield/autoencoder.hpp"

#include <stdexcept>

#include "ldmshield/rng.hpp"

namespace ldms {

void Autoencoder::check_encodable(const Image& x) const {
    if (x.channels() != image_channels())
        throw std::invalid_argument("encode: channel count mismatch");
    if (x.height() % factor() || x.width() % factor())
        throw std::invalid_argument("encode: image size not divisible by factor");
}

Latent Autoencoder::encode(const Image& x) {
    check_encodable(x);
    ad::Tape tape(false);
    ad::Var img = tape.constant(x.data);
    return Latent(tape.value(encode(tape, img)));
}

Tensor Autoencoder::decode_raw(const Latent& z) {
    if (z.channels() != latent_channels())
        throw std::invalid_argument("decode: latent channel mismatch");
    ad::Tape tape(false);
    ad::Var lat = tape.constant(z.data);
    return tape.value(decode(tape, lat));
}

Image Autoencoder::decode(const Latent& z) { return clamp01(Image(decode_raw(z))); }

// ------------------------------------------------------------------ analytic

AnalyticAutoencoder::AnalyticAutoencoder(int image_c, int latent_c)
    : image_c_(image_c), latent_c_(latent_c) {
    int full = 4 * image_c;
    if (latent_c < 1 || latent_c > full)
        throw std::invalid_argument("analytic autoencoder: latent_c out of range");
    // Orthonormal 2x2 Haar patterns per image channel, DC rows first:
    // row (k*image_c + ch) applies pattern k to channel ch.
    static const double kPat[4][4] = {
        {0.5, 0.5, 0.5, 0.5},    // DC
        {0.5, -0.5, 0.5, -0.5},  // horizontal alternation
        {0.5, 0.5, -0.5, -0.5},  // vertical alternation
        {0.5, -0.5, -0.5, 0.5},  // diagonal
    };
    basis_ = Tensor({2, 2, image_c, latent_c});
    for (int l = 0; l < latent_c; ++l) {
        int k = l / image_c;
        int ch = l % image_c;
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                std::size_t idx = ((static_cast<std::size_t>(dy) * 2 + dx) * image_c + ch) *
                                      latent_c + l;
                basis_[idx] = kPat[k][dy * 2 + dx];
            }
    }
}

ad::Var AnalyticAutoencoder::encode(ad::Tape& tape, ad::Var image) {
    ad::Var w = tape.constant(basis_);
    return tape.conv2d(image, w, ad::Var{}, /*pad=*/0, /*stride=*/2);
}

ad::Var AnalyticAutoencoder::decode(ad::Tape& tape, ad::Var latent) {
    ad::Var w = tape.constant(basis_);
    return tape.patch_unproject(latent, w, 2);
}

// -------------------------------------------------------------- trained conv

namespace {
Tensor conv_init(Rng& rng, int kh, int kw, int ci, int co) {
    Tensor w = rng.normal_tensor({kh, kw, ci, co});
    double s = 1.0 / std::sqrt(static_cast<double>(kh) * kw * ci);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= s;
    return w;
}
}  // namespace

ConvAutoencoder::ConvAutoencoder(ConvAutoencoderConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
    Rng rng(init_seed);
    int C = cfg_.image_c, B = cfg_.base, L = cfg_.latent_c;
    store_.create("enc1.w", conv_init(rng, 3, 3, C, B));
    store_.create("enc1.b", Tensor({B}));
    store_.create("enc2.w", conv_init(rng, 3, 3, B, B));
    store_.create("enc2.b", Tensor({B}));
    store_.create("enc3.w", conv_init(rng, 3, 3, B, L));
    store_.create("enc3.b", Tensor({L}));
    store_.create("dec1.w", conv_init(rng, 3, 3, L, B));
    store_.create("dec1.b", Tensor({B}));
    store_.create("dec2.w", conv_init(rng, 3, 3, B, B));
    store_.create("dec2.b", Tensor({B}));
    store_.create("dec3.w", conv_init(rng, 3, 3, B, C));
    store_.create("dec3.b", Tensor({C}));
}

ad::Var ConvAutoencoder::encode(ad::Tape& t, ad::Var image) {
    ad::Var h = t.conv2d(image, t.param(store_, "enc1.w"), t.param(store_, "enc1.b"), 1, 1);
    h = t.silu(h);
    h = t.conv2d(h, t.param(store_, "enc2.w"), t.param(store_, "enc2.b"), 1, 2);
    h = t.silu(h);
    h = t.conv2d(h, t.param(store_, "enc3.w"), t.param(store_, "enc3.b"), 1, 1);
    if (latent_scale_ != 1.0) h = t.scale(h, latent_scale_);
    return h;
}

ad::Var ConvAutoencoder::decode(ad::Tape& t, ad::Var latent) {
    ad::Var h = latent;
    if (latent_scale_ != 1.0) h = t.scale(h, 1.0 / latent_scale_);
    h = t.conv2d(h, t.param(store_, "dec1.w"), t.param(store_, "dec1.b"), 1, 1);
    h = t.silu(h);
    h = t.upsample2(h);
    h = t.conv2d(h, t.param(store_, "dec2.w"), t.param(store_, "dec2.b"), 1, 1);
    h = t.silu(h);
    h = t.conv2d(h, t.param(store_, "dec3.w"), t.param(store_, "dec3.b"), 1, 1);
    return h;
}

}  // namespace ldms
