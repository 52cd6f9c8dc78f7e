#pragma once

#include <memory>
#include <string>

#include "ldmshield/autodiff.hpp"
#include "ldmshield/image.hpp"

namespace ldms {

// Pixel <-> latent mapping with a downsampling factor f. Two backends: an
// analytic orthogonal patchify (exact inverse when the latent keeps the full
// patch rank) and a small trained conv autoencoder.
class Autoencoder {
public:
    enum class Kind { analytic_orthogonal, trained_conv };

    virtual ~Autoencoder() = default;

    virtual Kind kind() const = 0;
    virtual int factor() const = 0;
    virtual int latent_channels() const = 0;
    virtual int image_channels() const = 0;

    virtual ad::Var encode(ad::Tape& tape, ad::Var image) = 0;
    virtual ad::Var decode(ad::Tape& tape, ad::Var latent) = 0;

    // Value-level helpers; decode clamps to [0, 1].
    Latent encode(const Image& x);
    Image decode(const Latent& z);
    Tensor decode_raw(const Latent& z);

    virtual ad::ParamStore* params() { return nullptr; }

    void check_encodable(const Image& x) const;
};

class AnalyticAutoencoder : public Autoencoder {
public:
    using Autoencoder::encode;
    using Autoencoder::decode;

    // latent_c <= f*f*image_c rows of a fixed orthonormal patch basis;
    // the full-rank default makes decode(encode(x)) == x exactly.
    explicit AnalyticAutoencoder(int image_c = 3, int latent_c = 12);

    Kind kind() const override { return Kind::analytic_orthogonal; }
    int factor() const override { return 2; }
    int latent_channels() const override { return latent_c_; }
    int image_channels() const override { return image_c_; }

    ad::Var encode(ad::Tape& tape, ad::Var image) override;
    ad::Var decode(ad::Tape& tape, ad::Var latent) override;

    const Tensor& basis() const { return basis_; }  // (2, 2, image_c, latent_c)

private:
    int image_c_;
    int latent_c_;
    Tensor basis_;
};

struct ConvAutoencoderConfig {
    int image_c = 3;
    int base = 16;
    int latent_c = 4;
};

class ConvAutoencoder : public Autoencoder {
public:
    using Autoencoder::encode;
    using Autoencoder::decode;

    explicit ConvAutoencoder(ConvAutoencoderConfig cfg = {}, std::uint64_t init_seed = 1);

    Kind kind() const override { return Kind::trained_conv; }
    int factor() const override { return 2; }
    int latent_channels() const override { return cfg_.latent_c; }
    int image_channels() const override { return cfg_.image_c; }

    ad::Var encode(ad::Tape& tape, ad::Var image) override;
    ad::Var decode(ad::Tape& tape, ad::Var latent) override;

    ad::ParamStore* params() override { return &store_; }
    const ConvAutoencoderConfig& config() const { return cfg_; }

    double latent_scale() const { return latent_scale_; }
    void set_latent_scale(double s) { latent_scale_ = s; }

private:
    ConvAutoencoderConfig cfg_;
    ad::ParamStore store_;
    double latent_scale_ = 1.0;
};

}  // namespace ldms
