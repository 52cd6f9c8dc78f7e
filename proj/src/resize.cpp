#include "ldmshield/resize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ldms {

namespace {
double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

struct TapSet {
    // per output coordinate: 4 source indices and weights
    std::vector<int> idx;
    std::vector<double> w;
};

TapSet make_taps(int in_n, int out_n) {
    TapSet taps;
    taps.idx.resize(static_cast<std::size_t>(out_n) * 4);
    taps.w.resize(static_cast<std::size_t>(out_n) * 4);
    double scale = static_cast<double>(in_n) / out_n;
    for (int o = 0; o < out_n; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        int base = static_cast<int>(std::floor(src)) - 1;
        for (int k = 0; k < 4; ++k) {
            int i = std::clamp(base + k, 0, in_n - 1);
            taps.idx[static_cast<std::size_t>(o) * 4 + k] = i;
            taps.w[static_cast<std::size_t>(o) * 4 + k] = cubic_kernel(src - (base + k));
        }
    }
    return taps;
}
}  // namespace

Image resize_bicubic(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: bad output size");
    int H = img.height(), W = img.width(), C = img.channels();
    TapSet tx = make_taps(W, out_w);
    TapSet ty = make_taps(H, out_h);

    Tensor tmp({H, out_w, C});
    for (int y = 0; y < H; ++y)
        for (int xo = 0; xo < out_w; ++xo)
            for (int c = 0; c < C; ++c) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k)
                    s += tx.w[static_cast<std::size_t>(xo) * 4 + k] *
                         img.data.at(y, tx.idx[static_cast<std::size_t>(xo) * 4 + k], c);
                tmp.at(y, xo, c) = s;
            }
    Image out(out_h, out_w, C);
    for (int yo = 0; yo < out_h; ++yo)
        for (int xo = 0; xo < out_w; ++xo)
            for (int c = 0; c < C; ++c) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k)
                    s += ty.w[static_cast<std::size_t>(yo) * 4 + k] *
                         tmp.at(ty.idx[static_cast<std::size_t>(yo) * 4 + k], xo, c);
                out.data.at(yo, xo, c) = std::clamp(s, 0.0, 1.0);
            }
    return out;
}

}  // namespace ldms
