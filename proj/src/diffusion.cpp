#include "ldmshield/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "ldmshield/kernels.hpp"

namespace ldms {

Latent forward_noise(const Latent& z0, int t, const Latent& eps, const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.T) throw std::out_of_range("forward_noise: timestep out of range");
    if (!z0.data.same_shape(eps.data)) throw std::invalid_argument("forward_noise: shape mismatch");
    double ab = sched.alpha_bar[t];
    Latent out(z0.height(), z0.width(), z0.channels());
    kern::axpby(out.data.size(), std::sqrt(ab), z0.data.data(), std::sqrt(1.0 - ab),
                eps.data.data(), out.data.data());
    return out;
}

Latent ground_truth_target(const Latent& eps) { return eps; }

ad::Var noisy_latent_graph(ad::Tape& tape, ad::Var z0, int t, const Tensor& eps,
                           const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.T) throw std::out_of_range("noisy_latent: timestep out of range");
    double ab = sched.alpha_bar[t];
    ad::Var scaled = tape.scale(z0, std::sqrt(ab));
    return tape.add_scaled(scaled, tape.constant(eps), std::sqrt(1.0 - ab));
}

double ldm_loss(EpsilonModel& model, const std::vector<ConditionedImage>& batch,
                Autoencoder& backend, const NoiseSchedule& sched, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("ldm_loss: empty batch");
    auto [h, w, c] = model.latent_shape();
    double total = 0.0;
    for (const auto& [img, cond] : batch) {
        Latent z0 = backend.encode(img);
        int t = rng.uniform_int(sched.T);
        Tensor eps = rng.normal_tensor({h, w, c});
        Latent zt = forward_noise(z0, t, Latent(eps), sched);
        Tensor pred = model.predict_value(zt.data, t, cond);
        Tensor diff(pred.shape());
        kern::axpby(diff.size(), 1.0, pred.data(), -1.0, eps.data(), diff.data());
        total += kern::dot(diff.size(), diff.data(), diff.data());
    }
    return total / static_cast<double>(batch.size());
}

namespace {
// Evenly spaced descending subsequence of [0, tmax] with `steps` entries.
std::vector<int> respaced_timesteps(int tmax, int steps) {
    std::vector<int> ts(steps);
    if (steps == 1) {
        ts[0] = tmax;
        return ts;
    }
    for (int i = 0; i < steps; ++i)
        ts[i] = static_cast<int>((static_cast<long long>(steps - 1 - i) * tmax) / (steps - 1));
    return ts;
}

Tensor reverse_chain(EpsilonModel& model, const NoiseSchedule& sched, Tensor z,
                     const std::vector<int>& ts, int cond, Rng& rng, SampleTrace* trace) {
    std::size_t n = z.size();
    for (std::size_t k = 0; k < ts.size(); ++k) {
        int t = ts[k];
        int t_prev = k + 1 < ts.size() ? ts[k + 1] : -1;
        if (trace) trace->timesteps.push_back(t);
        double ab_t = sched.alpha_bar[t];
        double ab_prev = t_prev >= 0 ? sched.alpha_bar[t_prev] : 1.0;
        double a_hat = ab_t / ab_prev;
        double b_hat = 1.0 - a_hat;
        Tensor pred = model.predict_value(z, t, cond);
        Tensor mean(z.shape());
        double inv_sa = 1.0 / std::sqrt(a_hat);
        kern::axpby(n, inv_sa, z.data(), -inv_sa * b_hat / std::sqrt(1.0 - ab_t), pred.data(),
                    mean.data());
        if (t_prev >= 0) {
            double var = (1.0 - ab_prev) / (1.0 - ab_t) * b_hat;
            Tensor xi = rng.normal_tensor(z.shape());
            kern::axpby(n, 1.0, mean.data(), std::sqrt(var), xi.data(), z.data());
        } else {
            z = std::move(mean);
        }
    }
    return z;
}
}  // namespace

Latent sample(EpsilonModel& model, const NoiseSchedule& sched, int steps, int cond,
              std::uint64_t seed, SampleTrace* trace) {
    if (steps <= 0) throw std::invalid_argument("sample: steps must be positive");
    if (steps > sched.T) throw std::invalid_argument("sample: steps exceeds schedule length");
    auto [h, w, c] = model.latent_shape();
    Rng rng(seed);
    Tensor z = rng.fork("sample.init").normal_tensor({h, w, c});
    std::vector<int> ts = respaced_timesteps(sched.T - 1, steps);
    if (trace) trace->start_timestep = ts.front();
    Rng chain = rng.fork("sample.chain");
    return Latent(reverse_chain(model, sched, std::move(z), ts, cond, chain, trace));
}

Image sdedit(EpsilonModel& model, Autoencoder& backend, const NoiseSchedule& sched,
             const Image& x, double strength, int cond, std::uint64_t seed, int steps,
             SampleTrace* trace) {
    if (!(strength > 0.0 && strength < 1.0))
        throw std::invalid_argument("sdedit: strength must be in (0, 1)");
    int t_star = static_cast<int>(std::lround(strength * sched.T));
    if (t_star < 1) t_star = 1;
    if (t_star > sched.T - 1) t_star = sched.T - 1;

    Rng rng(seed);
    Latent z0 = backend.encode(x);
    Tensor eps = rng.fork("sdedit.noise").normal_tensor(z0.data.shape());
    Latent zt = forward_noise(z0, t_star, Latent(eps), sched);

    int n_steps = steps > 0 ? std::min(steps, t_star + 1) : t_star + 1;
    std::vector<int> ts = respaced_timesteps(t_star, n_steps);
    if (trace) trace->start_timestep = t_star;
    Rng chain = rng.fork("sdedit.chain");
    Tensor zfinal = reverse_chain(model, sched, std::move(zt.data), ts, cond, chain, trace);
    return backend.decode(Latent(zfinal));
}

}  // namespace ldms
