#include "ldmshield/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "ldmshield/kernels.hpp"
#include "ldmshield/rng.hpp"

namespace ldms {

const char* kDefaultPositivePrompt = "A good photo of a person";
const char* kDefaultNegativePrompt = "A bad photo of a person";

void MsSsimConfig::validate() const {
    if (scales < 1) throw std::invalid_argument("ms_ssim: scales must be >= 1");
    if (static_cast<int>(weights.size()) < scales)
        throw std::invalid_argument("ms_ssim: not enough weights for scales");
    double s = 0.0;
    for (int i = 0; i < scales; ++i) s += weights[i];
    if (std::abs(s - 1.0) > 1e-9)
        throw std::invalid_argument("ms_ssim: weights must sum to 1");
    if (window < 3 || window % 2 == 0)
        throw std::invalid_argument("ms_ssim: window must be odd and >= 3");
}

MsSsimConfig MsSsimConfig::for_size(int h, int w) {
    MsSsimConfig base;
    int m = std::min(h, w);
    int best_scales = 0, best_window = 0;
    for (int window : {11, 7, 5, 3}) {
        int s = 0;
        int cur = m;
        while (cur >= window && s < 5) {
            ++s;
            cur /= 2;
        }
        if (s > best_scales) {
            best_scales = s;
            best_window = window;
        }
        if (s >= 3) break;  // prefer the widest window that still gives depth
    }
    if (best_scales == 0) throw std::invalid_argument("ms_ssim: image too small");
    MsSsimConfig cfg = base;
    cfg.scales = best_scales;
    cfg.window = best_window;
    cfg.weights.assign(base.weights.begin(), base.weights.begin() + best_scales);
    double sum = 0.0;
    for (double v : cfg.weights) sum += v;
    for (double& v : cfg.weights) v /= sum;
    return cfg;
}

namespace {
std::vector<double> gaussian_window(int n, double sigma) {
    std::vector<double> g(n);
    double c = (n - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        g[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
        sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
}

// Separable valid-mode filter over (H, W, C).
Tensor filter_valid(const Tensor& x, const std::vector<double>& g) {
    int H = x.dim(0), W = x.dim(1), C = x.dim(2);
    int n = static_cast<int>(g.size());
    int Wo = W - n + 1, Ho = H - n + 1;
    Tensor tmp({H, Wo, C});
    for (int y = 0; y < H; ++y)
        for (int xo = 0; xo < Wo; ++xo)
            for (int c = 0; c < C; ++c) {
                double s = 0.0;
                for (int k = 0; k < n; ++k) s += g[k] * x.at(y, xo + k, c);
                tmp.at(y, xo, c) = s;
            }
    Tensor out({Ho, Wo, C});
    for (int yo = 0; yo < Ho; ++yo)
        for (int xo = 0; xo < Wo; ++xo)
            for (int c = 0; c < C; ++c) {
                double s = 0.0;
                for (int k = 0; k < n; ++k) s += g[k] * tmp.at(yo + k, xo, c);
                out.at(yo, xo, c) = s;
            }
    return out;
}

Tensor elem_mul(const Tensor& a, const Tensor& b) {
    Tensor out(a.shape());
    kern::mul(out.size(), a.data(), b.data(), out.data());
    return out;
}

Tensor downsample2(const Tensor& x) {
    int H = (x.dim(0) / 2) * 2, W = (x.dim(1) / 2) * 2, C = x.dim(2);
    Tensor out({H / 2, W / 2, C});
    for (int y = 0; y < H / 2; ++y)
        for (int xo = 0; xo < W / 2; ++xo)
            for (int c = 0; c < C; ++c)
                out.at(y, xo, c) = 0.25 * (x.at(2 * y, 2 * xo, c) + x.at(2 * y, 2 * xo + 1, c) +
                                           x.at(2 * y + 1, 2 * xo, c) +
                                           x.at(2 * y + 1, 2 * xo + 1, c));
    return out;
}

struct ScaleStats {
    double cs;    // mean contrast-structure term
    double ssim;  // mean luminance * cs term
};

ScaleStats ssim_scale(const Tensor& x, const Tensor& y, const std::vector<double>& g, double c1,
                      double c2) {
    Tensor mu_x = filter_valid(x, g);
    Tensor mu_y = filter_valid(y, g);
    Tensor xx = filter_valid(elem_mul(x, x), g);
    Tensor yy = filter_valid(elem_mul(y, y), g);
    Tensor xy = filter_valid(elem_mul(x, y), g);
    double cs_sum = 0.0, ssim_sum = 0.0;
    for (std::size_t i = 0; i < mu_x.size(); ++i) {
        double mx = mu_x[i], my = mu_y[i];
        double sx = xx[i] - mx * mx;
        double sy = yy[i] - my * my;
        double sxy = xy[i] - mx * my;
        double cs = (2.0 * sxy + c2) / (sx + sy + c2);
        double l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        cs_sum += cs;
        ssim_sum += l * cs;
    }
    double n = static_cast<double>(mu_x.size());
    return {cs_sum / n, ssim_sum / n};
}
}  // namespace

double ms_ssim(const Image& x, const Image& y, const MsSsimConfig& cfg) {
    cfg.validate();
    if (!x.data.same_shape(y.data)) throw std::invalid_argument("ms_ssim: shape mismatch");
    int min_dim = std::min(x.height(), x.width());
    if (min_dim >> (cfg.scales - 1) < cfg.window)
        throw std::invalid_argument("ms_ssim: too many scales for this image size");

    std::vector<double> g = gaussian_window(cfg.window, cfg.sigma);
    Tensor xs = x.data, ys = y.data;
    double result = 1.0;
    for (int s = 0; s < cfg.scales; ++s) {
        ScaleStats st = ssim_scale(xs, ys, g, cfg.c1, cfg.c2);
        double term = s + 1 == cfg.scales ? st.ssim : st.cs;
        if (cfg.scales == 1) return term;  // plain SSIM, sign preserved
        term = std::max(term, 0.0);  // fractional exponents need nonnegative terms
        result *= std::pow(term, cfg.weights[s]);
        if (s + 1 < cfg.scales) {
            xs = downsample2(xs);
            ys = downsample2(ys);
        }
    }
    return result;
}

// --------------------------------------------------------------- embeddings

namespace {
Tensor box_downsample(const Image& img, int out_h, int out_w) {
    int H = img.height(), W = img.width(), C = img.channels();
    Tensor out({out_h, out_w, C});
    for (int i = 0; i < out_h; ++i) {
        int y0 = i * H / out_h, y1 = std::max((i + 1) * H / out_h, y0 + 1);
        for (int j = 0; j < out_w; ++j) {
            int x0 = j * W / out_w, x1 = std::max((j + 1) * W / out_w, x0 + 1);
            for (int c = 0; c < C; ++c) {
                double s = 0.0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) s += img.data.at(y, x, c);
                out.at(i, j, c) = s / ((y1 - y0) * (x1 - x0));
            }
        }
    }
    return out;
}

void normalize_unit(Tensor& v) {
    double n = std::sqrt(kern::dot(v.size(), v.data(), v.data()));
    if (n == 0.0) {
        v[0] = 1.0;
        return;
    }
    kern::scale(v.size(), 1.0 / n, v.data(), v.data());
}
}  // namespace

HashProjectionProvider::HashProjectionProvider(int dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
    Rng rng(splitmix64(seed ^ 0x70726f6aULL));
    proj_ = rng.normal_tensor({192, dim});
    double s = 1.0 / std::sqrt(192.0);
    for (std::size_t i = 0; i < proj_.size(); ++i) proj_[i] *= s;
}

Tensor HashProjectionProvider::embed_image(const Image& img) {
    if (img.channels() != 3)
        throw std::invalid_argument("embedding provider expects 3-channel images");
    Tensor small = box_downsample(img, 8, 8);  // 192 features
    Tensor feat = small.reshaped({1, 192});
    // center to make the embedding sensitive to structure, not brightness
    double mean = kern::sum(feat.size(), feat.data()) / feat.size();
    for (std::size_t i = 0; i < feat.size(); ++i) feat[i] -= mean;
    Tensor out({1, dim_});
    kern::matmul(1, 192, dim_, feat.data(), proj_.data(), out.data());
    Tensor v = out.reshaped({dim_});
    normalize_unit(v);
    return v;
}

Tensor HashProjectionProvider::embed_text(const std::string& text) {
    Rng rng(splitmix64(seed_ ^ fnv1a64(text)));
    Tensor v = rng.normal_tensor({dim_});
    normalize_unit(v);
    return v;
}

double clip_sim(const Image& x, const Image& y, EmbeddingProvider& provider) {
    Tensor ex = provider.embed_image(x);
    Tensor ey = provider.embed_image(y);
    return kern::dot(ex.size(), ex.data(), ey.data());
}

double clip_iqa(const std::vector<Image>& images, const std::string& positive_prompt,
                const std::string& negative_prompt, EmbeddingProvider& provider) {
    if (images.empty()) throw std::invalid_argument("clip_iqa: empty image list");
    (void)positive_prompt;  // recorded in configs; the score uses the negative prompt
    Tensor neg = provider.embed_text(negative_prompt);
    double sum = 0.0;
    for (const Image& img : images) {
        Tensor e = provider.embed_image(img);
        sum += kern::dot(e.size(), e.data(), neg.data());
    }
    return 100.0 * sum / static_cast<double>(images.size());
}

}  // namespace ldms
