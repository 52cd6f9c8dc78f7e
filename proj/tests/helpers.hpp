#pragma once

// Shared test fixtures: micro epsilon-models with closed-form behavior, used
// as independent oracles against the production code paths.

#include <array>
#include <cmath>
#include <memory>

#include "ldmshield/epsmodel.hpp"
#include "ldmshield/image.hpp"
#include "ldmshield/rng.hpp"
#include "ldmshield/schedule.hpp"

namespace ldms::testing {

// pred = value, regardless of input
class ConstantModel : public EpsilonModel {
public:
    ConstantModel(std::array<int, 3> shape, Tensor value)
        : shape_(shape), value_(std::move(value)) {}
    std::array<int, 3> latent_shape() const override { return shape_; }
    int condition_vocab() const override { return 1; }
    ad::Var predict(ad::Tape& t, ad::Var, int, int) override { return t.constant(value_); }
    ad::ParamStore& params() override { return store_; }
    std::unique_ptr<EpsilonModel> clone() const override {
        return std::make_unique<ConstantModel>(*this);
    }

private:
    std::array<int, 3> shape_;
    Tensor value_;
    ad::ParamStore store_;
};

// Recovers the exact injected noise from z_t and a known z0:
// eps = (z_t - sqrt(abar) z0) / sqrt(1 - abar). A perfect predictor.
class OracleModel : public EpsilonModel {
public:
    OracleModel(std::array<int, 3> shape, Tensor z0, const NoiseSchedule& sched)
        : shape_(shape), z0_(std::move(z0)), sched_(&sched) {}
    std::array<int, 3> latent_shape() const override { return shape_; }
    int condition_vocab() const override { return 1; }
    ad::Var predict(ad::Tape& t, ad::Var z, int tstep, int) override {
        double ab = sched_->alpha_bar[tstep];
        double inv = 1.0 / std::sqrt(1.0 - ab);
        ad::Var scaled = t.scale(z, inv);
        return t.add_scaled(scaled, t.constant(z0_), -std::sqrt(ab) * inv);
    }
    ad::ParamStore& params() override { return store_; }
    std::unique_ptr<EpsilonModel> clone() const override {
        return std::make_unique<OracleModel>(*this);
    }

private:
    std::array<int, 3> shape_;
    Tensor z0_;
    const NoiseSchedule* sched_;
    ad::ParamStore store_;
};

// pred = reshape(J * flatten(z) + b): a frozen linear map with closed-form
// response J * (z' - z) to input differences.
class LinearModel : public EpsilonModel {
public:
    LinearModel(std::array<int, 3> shape, std::uint64_t seed) : shape_(shape) {
        int n = shape[0] * shape[1] * shape[2];
        Rng rng(seed);
        Tensor j = rng.normal_tensor({n, n});
        for (std::size_t i = 0; i < j.size(); ++i) j[i] *= 1.0 / std::sqrt(n);
        store_.create("J", std::move(j));
        store_.create("b", rng.normal_tensor({1, n}));
    }
    std::array<int, 3> latent_shape() const override { return shape_; }
    int condition_vocab() const override { return 1; }
    ad::Var predict(ad::Tape& t, ad::Var z, int, int) override {
        int n = shape_[0] * shape_[1] * shape_[2];
        ad::Var flat = t.reshape(z, {1, n});
        ad::Var y = t.matmul(flat, t.param(store_, "J"));
        y = t.add(y, t.param(store_, "b"));
        return t.reshape(y, {shape_[0], shape_[1], shape_[2]});
    }
    ad::ParamStore& params() override { return store_; }
    const Tensor& jacobian() const { return store_.value("J"); }
    std::unique_ptr<EpsilonModel> clone() const override {
        return std::make_unique<LinearModel>(*this);
    }

private:
    std::array<int, 3> shape_;
    ad::ParamStore store_;
};

// pred = a * z + b, two trainable scalars.
class TwoParamModel : public EpsilonModel {
public:
    TwoParamModel(std::array<int, 3> shape, double a0, double b0) : shape_(shape) {
        store_.create("a", Tensor::scalar(a0));
        store_.create("b", Tensor::scalar(b0));
    }
    std::array<int, 3> latent_shape() const override { return shape_; }
    int condition_vocab() const override { return 1; }
    ad::Var predict(ad::Tape& t, ad::Var z, int, int) override {
        int n = shape_[0] * shape_[1] * shape_[2];
        ad::Var flat = t.reshape(z, {n, 1});
        ad::Var scaled = t.matmul(flat, t.reshape(t.param(store_, "a"), {1, 1}));
        ad::Var shifted = t.add_channel(t.reshape(scaled, {n, 1, 1}), t.param(store_, "b"));
        return t.reshape(shifted, {shape_[0], shape_[1], shape_[2]});
    }
    ad::ParamStore& params() override { return store_; }
    std::unique_ptr<EpsilonModel> clone() const override {
        return std::make_unique<TwoParamModel>(*this);
    }

private:
    std::array<int, 3> shape_;
    ad::ParamStore store_;
};

inline Image random_image(Rng& rng, int h, int w, int c = 3) {
    Image img(h, w, c);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = rng.uniform();
    return img;
}

}  // namespace ldms::testing
