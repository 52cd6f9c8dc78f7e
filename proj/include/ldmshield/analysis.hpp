#pragma once

#include <map>
#include <string>
#include <vector>

#include "ldmshield/autoencoder.hpp"
#include "ldmshield/epsmodel.hpp"
#include "ldmshield/image.hpp"
#include "ldmshield/rng.hpp"
#include "ldmshield/schedule.hpp"

namespace ldms {

enum class BiasKind { eps_adv, reverse_bias, sampling_bias, sampling_error };

const char* bias_kind_name(BiasKind k);

// Latent-shaped diagnostic statistic with provenance.
struct BiasField {
    Tensor data;
    int timestep = -1;
    int mc_samples = 0;
    BiasKind kind = BiasKind::eps_adv;
    std::map<std::string, std::string> sources;
};

// eps_adv(t) = E[eps_theta(z'(t))] - E[eps_theta(z(t))], common noise draws
// shared between the two branches so the estimate vanishes exactly at x' = x.
BiasField estimate_eps_adv(EpsilonModel& theta, const Image& x, const Image& x_adv, int t, int mc,
                           Autoencoder& backend, const NoiseSchedule& sched, std::uint64_t seed,
                           int cond = 0);

// B_x(t) = E[eps_phi(z') - eps_theta(z')] - E[eps_theta_star(z) - eps_theta(z)]
BiasField estimate_reverse_bias(EpsilonModel& theta, EpsilonModel& theta_star, EpsilonModel& phi,
                                const Image& x, const Image& x_adv, int t, int mc,
                                Autoencoder& backend, const NoiseSchedule& sched,
                                std::uint64_t seed, int cond = 0);

// B_spl(t) = E[eps_phi(z(t)) - eps], evaluated on a held-out image.
BiasField estimate_sampling_bias(EpsilonModel& phi, const Image& x_holdout, int t, int mc,
                                 Autoencoder& backend, const NoiseSchedule& sched,
                                 std::uint64_t seed, int cond = 0);

// eta_spl = sum_t beta(t) * B_spl(t)
BiasField accumulate_sampling_error(const std::map<int, BiasField>& fields,
                                    const NoiseSchedule& sched);

struct CosineReport {
    Tensor matrix;  // |A| x |B| pairwise similarities (undefined pairs NaN)
    double mean = 0.0;
    int excluded_pairs = 0;  // zero-norm pairs, excluded from the mean
};

CosineReport cosine_protocol(const std::vector<BiasField>& A, const std::vector<BiasField>& B);

double cosine(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);

// (E - min) / (max - min); a constant field maps to all 0.5 and sets the flag.
struct NormalizedField {
    Tensor data;
    bool degenerate = false;
};
NormalizedField normalize_field(const BiasField& field);

// Channels rendered side by side through a diverging colormap.
Image render_heatmap(const BiasField& field);

}  // namespace ldms
