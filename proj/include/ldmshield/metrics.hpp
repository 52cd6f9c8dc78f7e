#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ldmshield/image.hpp"

namespace ldms {

struct MsSsimConfig {
    int scales = 5;
    std::vector<double> weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    int window = 11;
    double sigma = 1.5;
    double c1 = 1e-4;  // (0.01 L)^2 on the [0,1] range
    double c2 = 9e-4;  // (0.03 L)^2

    void validate() const;
    // Largest feasible scale count for small images, weights renormalized.
    static MsSsimConfig for_size(int h, int w);
};

// Multi-scale SSIM: contrast-structure means per scale, luminance folded in at
// the coarsest scale, combined by a weighted geometric mean.
double ms_ssim(const Image& x, const Image& y, const MsSsimConfig& cfg);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual int dim() const = 0;
    virtual Tensor embed_image(const Image& img) = 0;
    virtual Tensor embed_text(const std::string& text) = 0;
};

// Deterministic test provider: a fixed seeded random projection of the 8x8
// box-downsampled image; text embeddings are seeded by a hash of the string.
// Stands in for a real vision-language encoder behind the same interface.
class HashProjectionProvider : public EmbeddingProvider {
public:
    explicit HashProjectionProvider(int dim = 64, std::uint64_t seed = 2024);
    int dim() const override { return dim_; }
    Tensor embed_image(const Image& img) override;
    Tensor embed_text(const std::string& text) override;

private:
    int dim_;
    std::uint64_t seed_;
    Tensor proj_;  // (192, dim)
};

double clip_sim(const Image& x, const Image& y, EmbeddingProvider& provider);

// Mean over images of cos(embed_image, embed_text(negative)) * 100; high
// values mean the outputs look like the negative prompt (low quality).
double clip_iqa(const std::vector<Image>& images, const std::string& positive_prompt,
                const std::string& negative_prompt, EmbeddingProvider& provider);

extern const char* kDefaultPositivePrompt;
extern const char* kDefaultNegativePrompt;

}  // namespace ldms
