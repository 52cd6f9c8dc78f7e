#pragma once

#include <string>

#include "ldmshield/autoencoder.hpp"
#include "ldmshield/image.hpp"

namespace ldms {

enum class PatternKind { stripes, checker, glyph_tile };

// Procedural high-contrast target images: pixel values alternate between
// 0.5 - contrast/2 and 0.5 + contrast/2 with `repetition` periods per axis.
struct PatternSpec {
    PatternKind kind = PatternKind::glyph_tile;
    int repetition = 8;
    double contrast = 1.0;
    double phase = 0.0;  // fraction of one period
    int height = 32;
    int width = 32;
    int channels = 3;

    void validate() const;
    std::string to_string() const;                    // "glyph:8:1.0:0.0"
    static PatternSpec parse(const std::string& s);   // kind[:rep[:contrast[:phase]]]
};

Image generate_pattern(const PatternSpec& spec);

struct TargetLatent {
    Latent latent;
    std::string content_hash;  // hash of the source image bytes
};

TargetLatent encode_target(const Image& target_image, Autoencoder& backend);

const char* pattern_kind_name(PatternKind k);

}  // namespace ldms
