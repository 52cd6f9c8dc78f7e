#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ldmshield/autoencoder.hpp"
#include "ldmshield/finetune.hpp"
#include "ldmshield/image.hpp"
#include "ldmshield/metrics.hpp"
#include "ldmshield/unet.hpp"

namespace ldms {

enum class DefenseKind { gaussian, jpeg, resize, sr };

struct DefenseSpec {
    DefenseKind kind = DefenseKind::gaussian;
    double sigma = 0.0;    // gaussian, in 8-bit pixel units
    int quality = 75;      // jpeg
    double factor = 2.0;   // resize: scale then recover, bicubic both ways

    void validate() const;
    std::string name() const;  // "gaussian_s8", "jpeg_q20", "resize_2x", "sr"
};

// Pluggable super-resolution hook; purify(sr) errors until one is registered.
using SrProvider = std::function<Image(const Image&)>;
void register_sr_provider(SrProvider provider);
void clear_sr_provider();
bool sr_provider_registered();

struct DefenseUnavailable : std::runtime_error {
    explicit DefenseUnavailable(const std::string& what) : std::runtime_error(what) {}
};

Image purify(const Image& x, const DefenseSpec& spec, std::uint64_t seed);

// The seven defense configurations from the denoising counter-attack study.
std::vector<DefenseSpec> defense_grid();

enum class VictimPipeline { finetune_sample, sdedit };

struct VictimConfig {
    VictimPipeline pipeline = VictimPipeline::sdedit;
    FinetuneConfig finetune;       // used by both pipelines (victim finetunes first)
    double sdedit_strength = 0.3;
    int sdedit_steps = 50;
    int sample_steps = 50;
    int sample_count = 8;
    int cond = 0;
};

struct DefenseRow {
    std::string defense;
    bool ok = false;
    std::string error;
    double ms_ssim = 0.0;    // outputs vs purified inputs (sdedit pipeline)
    double clip_sim = 0.0;
    double clip_iqa = 0.0;
};

struct DefenseReport {
    std::vector<DefenseRow> rows;  // keyed by spec order, baseline row first
};

// Purify the adversarial set under each spec, run the victim pipeline, and
// report the metric table. Per-spec purify errors are recorded and the grid
// continues.
DefenseReport robustness_run(const std::vector<Image>& adv_set,
                             const std::vector<DefenseSpec>& specs, const VictimConfig& victim,
                             const UNetModel& backbone, Autoencoder& backend,
                             const NoiseSchedule& sched, EmbeddingProvider& provider,
                             std::uint64_t seed);

}  // namespace ldms
