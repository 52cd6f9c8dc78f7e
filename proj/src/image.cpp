#include "ldmshield/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ldms {

Image::Image(Tensor t) : data(std::move(t)) {
    if (data.rank() != 3) throw std::invalid_argument("image tensor must be (H, W, C)");
}

Latent::Latent(Tensor t) : data(std::move(t)) {
    if (data.rank() != 3) throw std::invalid_argument("latent tensor must be (h, w, c)");
}

void validate_image_range(const Image& img) {
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        double v = img.data[i];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw std::invalid_argument("image values must be finite and within [0, 1]");
    }
}

Image clamp01(Image img) {
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = std::clamp(img.data[i], 0.0, 1.0);
    return img;
}

Image quantize8(Image img) {
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        double v = std::clamp(img.data[i], 0.0, 1.0);
        img.data[i] = std::floor(v * 255.0 + 0.5) / 255.0;
    }
    return img;
}

double linf_dist(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("linf_dist: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace ldms
