#include "ldmshield/analysis.hpp"

#include <cmath>
#include <stdexcept>

#include "ldmshield/hashio.hpp"
#include "ldmshield/kernels.hpp"

namespace ldms {

const char* bias_kind_name(BiasKind k) {
    switch (k) {
        case BiasKind::eps_adv: return "eps_adv";
        case BiasKind::reverse_bias: return "reverse_bias";
        case BiasKind::sampling_bias: return "sampling_bias";
        case BiasKind::sampling_error: return "sampling_error";
    }
    return "?";
}

namespace {
void check_t(int t, const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.T) throw std::out_of_range("estimator: timestep out of range");
}

Tensor noisy(const Tensor& z0, double ab, const Tensor& eps) {
    Tensor zt(z0.shape());
    kern::axpby(zt.size(), std::sqrt(ab), z0.data(), std::sqrt(1.0 - ab), eps.data(), zt.data());
    return zt;
}
}  // namespace

BiasField estimate_eps_adv(EpsilonModel& theta, const Image& x, const Image& x_adv, int t, int mc,
                           Autoencoder& backend, const NoiseSchedule& sched, std::uint64_t seed,
                           int cond) {
    check_t(t, sched);
    if (mc < 1) throw std::invalid_argument("estimator: mc must be >= 1");
    if (!x.data.same_shape(x_adv.data))
        throw std::invalid_argument("estimate_eps_adv: image shape mismatch");
    Latent z0 = backend.encode(x);
    Latent z0_adv = backend.encode(x_adv);
    double ab = sched.alpha_bar[t];

    Rng rng(seed);
    Tensor acc(z0.data.shape());
    for (int i = 0; i < mc; ++i) {
        Tensor eps = rng.normal_tensor(z0.data.shape());
        Tensor pred_adv = theta.predict_value(noisy(z0_adv.data, ab, eps), t, cond);
        Tensor pred = theta.predict_value(noisy(z0.data, ab, eps), t, cond);
        // score-function errors share the injected eps, so it cancels here
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += pred_adv[j] - pred[j];
    }
    kern::scale(acc.size(), 1.0 / mc, acc.data(), acc.data());

    BiasField f;
    f.data = std::move(acc);
    f.timestep = t;
    f.mc_samples = mc;
    f.kind = BiasKind::eps_adv;
    f.sources["image"] = sha256_tensor(x.data);
    f.sources["adv_image"] = sha256_tensor(x_adv.data);
    return f;
}

BiasField estimate_reverse_bias(EpsilonModel& theta, EpsilonModel& theta_star, EpsilonModel& phi,
                                const Image& x, const Image& x_adv, int t, int mc,
                                Autoencoder& backend, const NoiseSchedule& sched,
                                std::uint64_t seed, int cond) {
    check_t(t, sched);
    if (mc < 1) throw std::invalid_argument("estimator: mc must be >= 1");
    Latent z0 = backend.encode(x);
    Latent z0_adv = backend.encode(x_adv);
    double ab = sched.alpha_bar[t];

    Rng rng(seed);
    Tensor acc(z0.data.shape());
    for (int i = 0; i < mc; ++i) {
        Tensor eps = rng.normal_tensor(z0.data.shape());
        Tensor zt_adv = noisy(z0_adv.data, ab, eps);
        Tensor zt = noisy(z0.data, ab, eps);
        Tensor phi_adv = phi.predict_value(zt_adv, t, cond);
        Tensor theta_adv = theta.predict_value(zt_adv, t, cond);
        Tensor star_clean = theta_star.predict_value(zt, t, cond);
        Tensor theta_clean = theta.predict_value(zt, t, cond);
        for (std::size_t j = 0; j < acc.size(); ++j)
            acc[j] += (phi_adv[j] - theta_adv[j]) - (star_clean[j] - theta_clean[j]);
    }
    kern::scale(acc.size(), 1.0 / mc, acc.data(), acc.data());

    BiasField f;
    f.data = std::move(acc);
    f.timestep = t;
    f.mc_samples = mc;
    f.kind = BiasKind::reverse_bias;
    f.sources["image"] = sha256_tensor(x.data);
    f.sources["adv_image"] = sha256_tensor(x_adv.data);
    return f;
}

BiasField estimate_sampling_bias(EpsilonModel& phi, const Image& x_holdout, int t, int mc,
                                 Autoencoder& backend, const NoiseSchedule& sched,
                                 std::uint64_t seed, int cond) {
    check_t(t, sched);
    if (mc < 1) throw std::invalid_argument("estimator: mc must be >= 1");
    Latent z0 = backend.encode(x_holdout);
    double ab = sched.alpha_bar[t];

    Rng rng(seed);
    Tensor acc(z0.data.shape());
    for (int i = 0; i < mc; ++i) {
        Tensor eps = rng.normal_tensor(z0.data.shape());
        Tensor pred = phi.predict_value(noisy(z0.data, ab, eps), t, cond);
        // ground-truth score in the eps convention is the injected noise
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += pred[j] - eps[j];
    }
    kern::scale(acc.size(), 1.0 / mc, acc.data(), acc.data());

    BiasField f;
    f.data = std::move(acc);
    f.timestep = t;
    f.mc_samples = mc;
    f.kind = BiasKind::sampling_bias;
    f.sources["image"] = sha256_tensor(x_holdout.data);
    return f;
}

BiasField accumulate_sampling_error(const std::map<int, BiasField>& fields,
                                    const NoiseSchedule& sched) {
    if (fields.empty()) throw std::invalid_argument("accumulate: no fields");
    BiasField out;
    int mc_min = 0;
    bool first = true;
    for (const auto& [t, f] : fields) {
        check_t(t, sched);
        if (first) {
            out.data = Tensor(f.data.shape());
            mc_min = f.mc_samples;
            first = false;
        }
        if (!f.data.same_shape(out.data))
            throw std::invalid_argument("accumulate: field shape mismatch across timesteps");
        mc_min = std::min(mc_min, f.mc_samples);
        kern::acc_scaled(out.data.size(), sched.beta[t], f.data.data(), out.data.data());
    }
    out.timestep = -1;
    out.mc_samples = mc_min;
    out.kind = BiasKind::sampling_error;
    return out;
}

double l2_norm(const Tensor& a) { return std::sqrt(kern::dot(a.size(), a.data(), a.data())); }

double cosine(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("cosine: shape mismatch");
    double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return std::nan("");
    return kern::dot(a.size(), a.data(), b.data()) / (na * nb);
}

CosineReport cosine_protocol(const std::vector<BiasField>& A, const std::vector<BiasField>& B) {
    if (A.empty() || B.empty()) throw std::invalid_argument("cosine_protocol: empty set");
    CosineReport rep;
    rep.matrix = Tensor({static_cast<int>(A.size()), static_cast<int>(B.size())});
    double sum = 0.0;
    int counted = 0;
    for (std::size_t i = 0; i < A.size(); ++i)
        for (std::size_t j = 0; j < B.size(); ++j) {
            double c = cosine(A[i].data, B[j].data);
            rep.matrix.at(static_cast<int>(i), static_cast<int>(j)) = c;
            if (std::isnan(c)) {
                ++rep.excluded_pairs;
            } else {
                sum += c;
                ++counted;
            }
        }
    rep.mean = counted > 0 ? sum / counted : std::nan("");
    return rep;
}

NormalizedField normalize_field(const BiasField& field) {
    NormalizedField out;
    double lo = field.data.min(), hi = field.data.max();
    out.data = Tensor(field.data.shape());
    if (hi > lo) {
        double inv = 1.0 / (hi - lo);
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = (field.data[i] - lo) * inv;
    } else {
        out.data.fill(0.5);
        out.degenerate = true;
    }
    return out;
}

namespace {
// Diverging blue-white-red map so reversed fields render in complementary colors.
void colormap(double v, double* rgb) {
    v = std::clamp(v, 0.0, 1.0);
    if (v < 0.5) {
        double u = v / 0.5;
        rgb[0] = 0.15 + 0.85 * u;
        rgb[1] = 0.25 + 0.75 * u;
        rgb[2] = 0.75 + 0.25 * u;
    } else {
        double u = (v - 0.5) / 0.5;
        rgb[0] = 1.0;
        rgb[1] = 1.0 - 0.75 * u;
        rgb[2] = 1.0 - 0.85 * u;
    }
}
}  // namespace

Image render_heatmap(const BiasField& field) {
    NormalizedField norm = normalize_field(field);
    int h = norm.data.dim(0), w = norm.data.dim(1), c = norm.data.dim(2);
    const int pad = 2;
    Image img(h, c * w + (c - 1) * pad, 3);
    img.data.fill(1.0);
    for (int ch = 0; ch < c; ++ch) {
        int x0 = ch * (w + pad);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double rgb[3];
                colormap(norm.data.at(y, x, ch), rgb);
                for (int k = 0; k < 3; ++k) img.data.at(y, x0 + x, k) = rgb[k];
            }
    }
    return img;
}

}  // namespace ldms
