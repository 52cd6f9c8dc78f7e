#include "ldmshield/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ldmshield/hashio.hpp"
#include "ldmshield/rng.hpp"

namespace fs = std::filesystem;

namespace ldms {

void ToyDatasetSpec::validate() const {
    if (groups < 1 || per_group < 1 || holdout_per_group < 0)
        throw std::invalid_argument("dataset: bad counts");
    if (size < 8 || size % 2) throw std::invalid_argument("dataset: size must be even and >= 8");
}

namespace {
struct Rgb {
    double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    double c = v * s;
    double hp = h * 6.0;
    double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    double m = v - c;
    return {r + m, g + m, b + m};
}

double smoothstep(double e0, double e1, double x) {
    double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

struct Identity {
    Rgb bg0, bg1;      // background gradient endpoints
    double grad_angle;
    Rgb stripe_color;
    double stripe_angle;
    double stripe_freq;
    double stripe_amp;
    int shape_kind;  // 0 disc, 1 square, 2 bar
    Rgb shape_color;
    double shape_cx, shape_cy, shape_r;
};

Identity make_identity(const ToyDatasetSpec& spec, int group) {
    Rng rng = Rng(spec.seed).fork("identity", static_cast<std::uint64_t>(group));
    Identity id;
    double hue = rng.uniform();
    id.bg0 = hsv_to_rgb(hue, 0.35 + 0.25 * rng.uniform(), 0.45 + 0.25 * rng.uniform());
    id.bg1 = hsv_to_rgb(hue + 0.12 + 0.1 * rng.uniform(), 0.3, 0.65 + 0.2 * rng.uniform());
    id.grad_angle = rng.uniform() * 6.2831853;
    id.stripe_color = hsv_to_rgb(hue + 0.45, 0.6, 0.8);
    id.stripe_angle = rng.uniform() * 3.14159265;
    id.stripe_freq = 2.0 + 3.0 * rng.uniform();  // periods across the image
    id.stripe_amp = 0.25 + 0.2 * rng.uniform();
    id.shape_kind = rng.uniform_int(3);
    id.shape_color = hsv_to_rgb(hue + 0.5 + 0.15 * rng.uniform(), 0.75, 0.9);
    id.shape_cx = 0.3 + 0.4 * rng.uniform();
    id.shape_cy = 0.3 + 0.4 * rng.uniform();
    id.shape_r = 0.16 + 0.1 * rng.uniform();
    return id;
}
}  // namespace

Image generate_toy_image(const ToyDatasetSpec& spec, int group, int index) {
    spec.validate();
    if (group < 0 || group >= spec.groups) throw std::out_of_range("dataset: group out of range");
    Identity id = make_identity(spec, group);
    Rng rng = Rng(spec.seed).fork("image",
                                  static_cast<std::uint64_t>(group) * 1000003 + index);
    double dx = 0.12 * (rng.uniform() - 0.5);
    double dy = 0.12 * (rng.uniform() - 0.5);
    double rscale = 1.0 + 0.3 * (rng.uniform() - 0.5);
    double phase = rng.uniform();
    double bright = 1.0 + 0.12 * (rng.uniform() - 0.5);
    double hue_jit = 0.04 * (rng.uniform() - 0.5);

    int n = spec.size;
    Image img(n, n, 3);
    double ga = id.grad_angle, sa = id.stripe_angle;
    double cx = id.shape_cx + dx, cy = id.shape_cy + dy, rr = id.shape_r * rscale;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double u = (x + 0.5) / n, v = (y + 0.5) / n;
            double gproj = 0.5 + 0.5 * ((u - 0.5) * std::cos(ga) + (v - 0.5) * std::sin(ga));
            double base[3] = {id.bg0.r + (id.bg1.r - id.bg0.r) * gproj,
                              id.bg0.g + (id.bg1.g - id.bg0.g) * gproj,
                              id.bg0.b + (id.bg1.b - id.bg0.b) * gproj};
            double sproj = u * std::cos(sa) + v * std::sin(sa);
            double stripe = 0.5 + 0.5 * std::sin(6.2831853 * (id.stripe_freq * sproj + phase));
            double sw = id.stripe_amp * stripe;
            double px[3] = {base[0] * (1 - sw) + id.stripe_color.r * sw,
                            base[1] * (1 - sw) + id.stripe_color.g * sw,
                            base[2] * (1 - sw) + id.stripe_color.b * sw};
            double mask = 0.0;
            if (id.shape_kind == 0) {
                double d = std::hypot(u - cx, v - cy);
                mask = 1.0 - smoothstep(rr - 0.03, rr + 0.03, d);
            } else if (id.shape_kind == 1) {
                double d = std::max(std::abs(u - cx), std::abs(v - cy));
                mask = 1.0 - smoothstep(rr - 0.03, rr + 0.03, d);
            } else {
                double d = std::abs((u - cx) * std::cos(sa + 0.7) + (v - cy) * std::sin(sa + 0.7));
                double along = std::abs((u - cx) * -std::sin(sa + 0.7) +
                                        (v - cy) * std::cos(sa + 0.7));
                mask = (1.0 - smoothstep(rr * 0.35 - 0.02, rr * 0.35 + 0.02, d)) *
                       (1.0 - smoothstep(rr * 1.6 - 0.03, rr * 1.6 + 0.03, along));
            }
            double sc[3] = {std::clamp(id.shape_color.r + hue_jit, 0.0, 1.0),
                            std::clamp(id.shape_color.g - hue_jit, 0.0, 1.0),
                            id.shape_color.b};
            for (int c = 0; c < 3; ++c) px[c] = px[c] * (1 - mask) + sc[c] * mask;
            for (int c = 0; c < 3; ++c)
                img.data.at(y, x, c) = std::clamp(px[c] * bright, 0.02, 0.98);
        }
    }
    return img;
}

ToyDataset generate_toy_dataset(const ToyDatasetSpec& spec) {
    spec.validate();
    ToyDataset ds;
    ds.spec = spec;
    ds.train.resize(spec.groups);
    ds.holdout.resize(spec.groups);
    for (int g = 0; g < spec.groups; ++g) {
        for (int i = 0; i < spec.per_group; ++i)
            ds.train[g].push_back(generate_toy_image(spec, g, i));
        for (int i = 0; i < spec.holdout_per_group; ++i)
            ds.holdout[g].push_back(generate_toy_image(spec, g, spec.per_group + i));
    }
    return ds;
}

std::string write_dataset(const ToyDataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json index;
    index["spec"] = {{"groups", ds.spec.groups},
                     {"per_group", ds.spec.per_group},
                     {"holdout_per_group", ds.spec.holdout_per_group},
                     {"size", ds.spec.size},
                     {"seed", ds.spec.seed}};
    nlohmann::json jgroups = nlohmann::json::array();
    for (int g = 0; g < ds.spec.groups; ++g) {
        nlohmann::json jg;
        jg["id"] = g;
        jg["cond"] = g + 1;  // condition id 0 is reserved for "no condition"
        nlohmann::json files = nlohmann::json::array();
        for (std::size_t i = 0; i < ds.train[g].size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "g%02d_i%03d.png", g, static_cast<int>(i));
            fs::path p = fs::path(dir) / name;
            write_png(ds.train[g][i], p.string());
            files.push_back({{"file", name}, {"sha256", sha256_file(p.string())}});
        }
        jg["files"] = files;
        nlohmann::json hfiles = nlohmann::json::array();
        for (std::size_t i = 0; i < ds.holdout[g].size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "g%02d_h%03d.png", g, static_cast<int>(i));
            fs::path p = fs::path(dir) / name;
            write_png(ds.holdout[g][i], p.string());
            hfiles.push_back({{"file", name}, {"sha256", sha256_file(p.string())}});
        }
        jg["holdout"] = hfiles;
        jgroups.push_back(jg);
    }
    index["groups"] = jgroups;
    fs::path ipath = fs::path(dir) / "index.json";
    std::ofstream out(ipath);
    out << index.dump(2) << "\n";
    return ipath.string();
}

}  // namespace ldms
