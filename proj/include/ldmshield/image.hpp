#pragma once

#include <string>

#include "ldmshield/tensor.hpp"

namespace ldms {

// (H, W, C) pixels in [0, 1].
struct Image {
    Tensor data;

    Image() = default;
    explicit Image(Tensor t);
    Image(int h, int w, int c) : data(Tensor({h, w, c})) {}

    int height() const { return data.dim(0); }
    int width() const { return data.dim(1); }
    int channels() const { return data.dim(2); }
};

// (h, w, c) latent representation.
struct Latent {
    Tensor data;

    Latent() = default;
    explicit Latent(Tensor t);
    Latent(int h, int w, int c) : data(Tensor({h, w, c})) {}

    int height() const { return data.dim(0); }
    int width() const { return data.dim(1); }
    int channels() const { return data.dim(2); }
};

void validate_image_range(const Image& img);  // finite, within [0,1]

Image clamp01(Image img);
Image quantize8(Image img);  // snap to the 1/255 grid (round half up)
double linf_dist(const Tensor& a, const Tensor& b);

Image read_png(const std::string& path);
void write_png(const Image& img, const std::string& path);

}  // namespace ldms
