#include "ldmshield/defenses.hpp"

#include <cmath>
#include <sstream>

#include "ldmshield/diffusion.hpp"
#include "ldmshield/resize.hpp"
#include "ldmshield/rng.hpp"

namespace ldms {

Image jpeg_roundtrip(const Image& img, int quality);  // jpeg_io.cpp

namespace {
SrProvider g_sr_provider;
}

void register_sr_provider(SrProvider provider) { g_sr_provider = std::move(provider); }
void clear_sr_provider() { g_sr_provider = nullptr; }
bool sr_provider_registered() { return static_cast<bool>(g_sr_provider); }

void DefenseSpec::validate() const {
    switch (kind) {
        case DefenseKind::gaussian:
            if (sigma < 0.0) throw std::invalid_argument("defense: sigma must be >= 0");
            break;
        case DefenseKind::jpeg:
            if (quality < 1 || quality > 100)
                throw std::invalid_argument("defense: jpeg quality must be 1..100");
            break;
        case DefenseKind::resize:
            if (!(factor > 0.0)) throw std::invalid_argument("defense: factor must be positive");
            break;
        case DefenseKind::sr:
            break;
    }
}

std::string DefenseSpec::name() const {
    std::ostringstream os;
    switch (kind) {
        case DefenseKind::gaussian: os << "gaussian_s" << sigma; break;
        case DefenseKind::jpeg: os << "jpeg_q" << quality; break;
        case DefenseKind::resize: os << "resize_" << factor << "x"; break;
        case DefenseKind::sr: os << "sr"; break;
    }
    return os.str();
}

Image purify(const Image& x, const DefenseSpec& spec, std::uint64_t seed) {
    spec.validate();
    switch (spec.kind) {
        case DefenseKind::gaussian: {
            if (spec.sigma == 0.0) return x;
            Rng rng(seed);
            Image out = x;
            double s = spec.sigma / 255.0;
            for (std::size_t i = 0; i < out.data.size(); ++i)
                out.data[i] = std::clamp(out.data[i] + s * rng.normal(), 0.0, 1.0);
            return out;
        }
        case DefenseKind::jpeg:
            return jpeg_roundtrip(x, spec.quality);
        case DefenseKind::resize: {
            int h2 = std::max(1, static_cast<int>(std::lround(x.height() * spec.factor)));
            int w2 = std::max(1, static_cast<int>(std::lround(x.width() * spec.factor)));
            Image scaled = resize_bicubic(x, h2, w2);
            return resize_bicubic(scaled, x.height(), x.width());
        }
        case DefenseKind::sr: {
            if (!g_sr_provider)
                throw DefenseUnavailable("sr defense: no super-resolution provider registered");
            Image out = g_sr_provider(x);
            if (!out.data.same_shape(x.data))
                throw std::runtime_error("sr defense: provider changed the image shape");
            return clamp01(std::move(out));
        }
    }
    throw std::logic_error("unreachable defense kind");
}

std::vector<DefenseSpec> defense_grid() {
    std::vector<DefenseSpec> grid;
    grid.push_back({DefenseKind::gaussian, 4.0, 75, 2.0});
    grid.push_back({DefenseKind::gaussian, 8.0, 75, 2.0});
    grid.push_back({DefenseKind::jpeg, 0.0, 20, 2.0});
    grid.push_back({DefenseKind::jpeg, 0.0, 70, 2.0});
    grid.push_back({DefenseKind::resize, 0.0, 75, 2.0});
    grid.push_back({DefenseKind::resize, 0.0, 75, 0.5});
    grid.push_back({DefenseKind::sr, 0.0, 75, 2.0});
    return grid;
}

namespace {
DefenseRow run_victim(const std::string& name, const std::vector<Image>& inputs,
                      const VictimConfig& victim, const UNetModel& backbone, Autoencoder& backend,
                      const NoiseSchedule& sched, EmbeddingProvider& provider,
                      std::uint64_t seed) {
    DefenseRow row;
    row.defense = name;

    std::vector<ConditionedImage> dataset;
    dataset.reserve(inputs.size());
    for (const Image& img : inputs) dataset.emplace_back(img, victim.cond);
    std::unique_ptr<UNetModel> tuned =
        finetune(backbone, dataset, victim.finetune, backend, sched, splitmix64(seed ^ 0xf17e));

    MsSsimConfig mcfg = MsSsimConfig::for_size(inputs[0].height(), inputs[0].width());
    std::vector<Image> outputs;
    double ms_sum = 0.0, cs_sum = 0.0;
    if (victim.pipeline == VictimPipeline::sdedit) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            Image out = sdedit(*tuned, backend, sched, inputs[i], victim.sdedit_strength,
                               victim.cond, splitmix64(seed + 31 * i), victim.sdedit_steps);
            ms_sum += ms_ssim(out, inputs[i], mcfg);
            cs_sum += clip_sim(out, inputs[i], provider);
            outputs.push_back(std::move(out));
        }
    } else {
        for (int i = 0; i < victim.sample_count; ++i) {
            Latent z = sample(*tuned, sched, victim.sample_steps, victim.cond,
                              splitmix64(seed + 77 * i));
            Image out = backend.decode(z);
            const Image& ref = inputs[i % inputs.size()];
            ms_sum += ms_ssim(out, ref, mcfg);
            cs_sum += clip_sim(out, ref, provider);
            outputs.push_back(std::move(out));
        }
    }
    row.ms_ssim = ms_sum / outputs.size();
    row.clip_sim = cs_sum / outputs.size();
    row.clip_iqa = clip_iqa(outputs, kDefaultPositivePrompt, kDefaultNegativePrompt, provider);
    row.ok = true;
    return row;
}
}  // namespace

DefenseReport robustness_run(const std::vector<Image>& adv_set,
                             const std::vector<DefenseSpec>& specs, const VictimConfig& victim,
                             const UNetModel& backbone, Autoencoder& backend,
                             const NoiseSchedule& sched, EmbeddingProvider& provider,
                             std::uint64_t seed) {
    if (adv_set.empty()) throw std::invalid_argument("robustness_run: empty adversarial set");
    DefenseReport report;

    // Same victim seed for every row: an identity defense must reproduce
    // the no-defense report exactly.
    std::uint64_t victim_seed = splitmix64(seed ^ 0x76696374ULL);
    report.rows.push_back(run_victim("no_defense", adv_set, victim, backbone, backend, sched,
                                     provider, victim_seed));

    for (std::size_t s = 0; s < specs.size(); ++s) {
        DefenseRow row;
        row.defense = specs[s].name();
        try {
            std::vector<Image> purified;
            purified.reserve(adv_set.size());
            for (std::size_t i = 0; i < adv_set.size(); ++i)
                purified.push_back(
                    purify(adv_set[i], specs[s], splitmix64(seed + 1000003 * (s + 1) + i)));
            row = run_victim(specs[s].name(), purified, victim, backbone, backend, sched,
                             provider, victim_seed);
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace ldms
