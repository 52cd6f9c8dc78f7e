#include "ldmshield/patterns.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ldmshield/hashio.hpp"

namespace ldms {

namespace {
// 8x8 glyph with dense strokes and sharp edges; 1 bits map to the high level.
const unsigned char kGlyph[8] = {
    0b10111101,
    0b01100110,
    0b11011011,
    0b00111100,
    0b00111100,
    0b11011011,
    0b01100110,
    0b10111101,
};

bool square_wave_high(double coord, int size, int repetition, double phase) {
    // `repetition` periods across `size` pixels; phase in fractions of a period
    double u = (coord + 0.5) * repetition / size + phase;
    double frac = u - std::floor(u);
    return frac < 0.5;
}
}  // namespace

const char* pattern_kind_name(PatternKind k) {
    switch (k) {
        case PatternKind::stripes: return "stripes";
        case PatternKind::checker: return "checker";
        case PatternKind::glyph_tile: return "glyph";
    }
    return "?";
}

void PatternSpec::validate() const {
    if (repetition < 1) throw std::invalid_argument("pattern: repetition must be >= 1");
    if (contrast < 0.0 || contrast > 1.0)
        throw std::invalid_argument("pattern: contrast must be in [0, 1]");
    if (height < 1 || width < 1 || channels < 1)
        throw std::invalid_argument("pattern: bad size");
    int limit = kind == PatternKind::stripes ? width : std::min(width, height);
    if (2 * repetition > limit)
        throw std::invalid_argument("pattern: repetition exceeds the Nyquist limit for this size");
}

std::string PatternSpec::to_string() const {
    std::ostringstream os;
    os << pattern_kind_name(kind) << ":" << repetition << ":" << contrast << ":" << phase;
    return os.str();
}

PatternSpec PatternSpec::parse(const std::string& s) {
    PatternSpec spec;
    std::istringstream is(s);
    std::string tok;
    if (!std::getline(is, tok, ':')) throw std::invalid_argument("pattern spec: empty");
    if (tok == "stripes")
        spec.kind = PatternKind::stripes;
    else if (tok == "checker")
        spec.kind = PatternKind::checker;
    else if (tok == "glyph" || tok == "glyph-tile")
        spec.kind = PatternKind::glyph_tile;
    else
        throw std::invalid_argument("pattern spec: unknown kind '" + tok + "'");
    if (std::getline(is, tok, ':')) spec.repetition = std::stoi(tok);
    if (std::getline(is, tok, ':')) spec.contrast = std::stod(tok);
    if (std::getline(is, tok, ':')) spec.phase = std::stod(tok);
    return spec;
}

Image generate_pattern(const PatternSpec& spec) {
    spec.validate();
    double lo = 0.5 - spec.contrast / 2.0;
    double hi = 0.5 + spec.contrast / 2.0;
    Image img(spec.height, spec.width, spec.channels);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            bool high = false;
            switch (spec.kind) {
                case PatternKind::stripes:
                    high = square_wave_high(x, spec.width, spec.repetition, spec.phase);
                    break;
                case PatternKind::checker:
                    high = square_wave_high(x, spec.width, spec.repetition, spec.phase) !=
                           square_wave_high(y, spec.height, spec.repetition, spec.phase);
                    break;
                case PatternKind::glyph_tile: {
                    // nearest sampling of the glyph within each tile
                    double ux = (x + 0.5) * spec.repetition / spec.width + spec.phase;
                    double uy = (y + 0.5) * spec.repetition / spec.height + spec.phase;
                    int gx = static_cast<int>(std::floor((ux - std::floor(ux)) * 8.0));
                    int gy = static_cast<int>(std::floor((uy - std::floor(uy)) * 8.0));
                    high = (kGlyph[gy & 7] >> (7 - (gx & 7))) & 1;
                    break;
                }
            }
            double v = high ? hi : lo;
            for (int c = 0; c < spec.channels; ++c) img.data.at(y, x, c) = v;
        }
    }
    return img;
}

TargetLatent encode_target(const Image& target_image, Autoencoder& backend) {
    backend.check_encodable(target_image);
    TargetLatent out;
    out.latent = backend.encode(target_image);
    out.content_hash = sha256_tensor(target_image.data);
    return out;
}

}  // namespace ldms
