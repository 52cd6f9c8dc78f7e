#include "ldmshield/unet.hpp"

#include <cmath>
#include <stdexcept>

#include "ldmshield/rng.hpp"

namespace ldms {

Tensor EpsilonModel::predict_value(const Tensor& z, int t, int cond) {
    ad::Tape tape(false);
    ad::Var zin = tape.constant(z);
    return tape.value(predict(tape, zin, t, cond));
}

Tensor sinusoidal_embedding(int t, int dim) {
    int half = dim / 2;
    Tensor emb({dim});
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        double ang = static_cast<double>(t) * freq;
        emb[i] = std::sin(ang);
        emb[half + i] = std::cos(ang);
    }
    return emb;
}

namespace {
Tensor normal_init(Rng& rng, std::vector<int> shape, double fan_in) {
    Tensor w = rng.normal_tensor(std::move(shape));
    double s = 1.0 / std::sqrt(fan_in);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= s;
    return w;
}
}  // namespace

UNetModel::UNetModel(UNetConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
    Rng rng(init_seed);
    int B = cfg_.base, C = cfg_.latent_c, D = cfg_.time_dim;

    auto conv_p = [&](const std::string& name, int ci, int co, bool zero = false) {
        Tensor w = zero ? Tensor({3, 3, ci, co}) : normal_init(rng, {3, 3, ci, co}, 9.0 * ci);
        store_.create(name + ".w", std::move(w));
        store_.create(name + ".b", Tensor({co}));
    };
    auto conv1_p = [&](const std::string& name, int ci, int co) {
        store_.create(name + ".w", normal_init(rng, {1, 1, ci, co}, ci));
        store_.create(name + ".b", Tensor({co}));
    };
    auto dense_p = [&](const std::string& name, int di, int dout, bool zero = false) {
        Tensor w = zero ? Tensor({di, dout}) : normal_init(rng, {di, dout}, di);
        store_.create(name + ".w", std::move(w));
        store_.create(name + ".b", Tensor({dout}));
    };
    auto gn_p = [&](const std::string& name, int ch) {
        store_.create(name + ".g", Tensor::full({ch}, 1.0));
        store_.create(name + ".b", Tensor({ch}));
    };
    auto block_p = [&](const std::string& name, int ci, int co) {
        gn_p(name + ".gn1", ci);
        conv_p(name + ".conv1", ci, co);
        dense_p(name + ".tproj", D, co, /*zero=*/true);
        gn_p(name + ".gn2", co);
        conv_p(name + ".conv2", co, co);
        if (ci != co) conv1_p(name + ".skip", ci, co);
    };

    dense_p("temb1", cfg_.sin_dim, D);
    dense_p("temb2", D, D);
    store_.create("cond.table", Tensor({cfg_.cond_vocab, D}));
    conv_p("stem", C, B);
    block_p("down1", B, B);
    block_p("down2", B, 2 * B);
    block_p("mid", 2 * B, 2 * B);
    block_p("up1", 4 * B, 2 * B);
    block_p("up2", 3 * B, B);
    gn_p("head.gn", B);
    conv_p("head.conv", B, C, /*zero=*/true);
}

ad::Var UNetModel::layer_weight(ad::Tape& t, const std::string& name) {
    ad::Var w = t.param(store_, name + ".w");
    std::string la = name + ".lora_a", lb = name + ".lora_b";
    if (store_.has(la)) {
        ad::Var A = t.param(store_, la);
        ad::Var B = t.param(store_, lb);
        ad::Var delta = t.reshape(t.matmul(A, B), t.value(w).shape());
        double scale = store_.value(name + ".lora_scale")[0];
        w = t.add_scaled(w, delta, scale);
    }
    return w;
}

ad::Var UNetModel::dense(ad::Tape& t, ad::Var x, const std::string& name) {
    // x is a vector (D,); weight (D, out)
    int din = static_cast<int>(t.value(x).size());
    ad::Var row = t.reshape(x, {1, din});
    ad::Var w = layer_weight(t, name);
    ad::Var y = t.matmul(row, w);
    int dout = t.value(y).dim(1);
    return t.add(t.reshape(y, {dout}), t.param(store_, name + ".b"));
}

ad::Var UNetModel::conv(ad::Tape& t, ad::Var x, const std::string& name, int pad, int stride) {
    return t.conv2d(x, layer_weight(t, name), t.param(store_, name + ".b"), pad, stride);
}

ad::Var UNetModel::res_block(ad::Tape& t, ad::Var x, ad::Var emb, const std::string& name,
                             int cin, int cout) {
    ad::Var h = t.group_norm(x, t.param(store_, name + ".gn1.g"), t.param(store_, name + ".gn1.b"),
                             cfg_.groups, 1e-5);
    h = t.silu(h);
    h = conv(t, h, name + ".conv1", 1, 1);
    ad::Var shift = dense(t, t.silu(emb), name + ".tproj");
    h = t.add_channel(h, shift);
    h = t.group_norm(h, t.param(store_, name + ".gn2.g"), t.param(store_, name + ".gn2.b"),
                     cfg_.groups, 1e-5);
    h = t.silu(h);
    h = conv(t, h, name + ".conv2", 1, 1);
    ad::Var skip = (cin == cout) ? x : conv(t, x, name + ".skip", 0, 1);
    return t.add(h, skip);
}

ad::Var UNetModel::predict(ad::Tape& t, ad::Var z, int tstep, int cond) {
    const Tensor& zv = t.value(z);
    if (zv.rank() != 3 || zv.dim(0) != cfg_.latent_h || zv.dim(1) != cfg_.latent_w ||
        zv.dim(2) != cfg_.latent_c)
        throw std::invalid_argument("unet: latent shape mismatch, got " + zv.shape_str());
    if (tstep < 0) throw std::out_of_range("unet: negative timestep");
    if (cond < 0 || cond >= cfg_.cond_vocab) throw std::out_of_range("unet: condition id");

    ad::Var sin_emb = t.constant(sinusoidal_embedding(tstep, cfg_.sin_dim));
    ad::Var emb = dense(t, sin_emb, "temb1");
    emb = t.silu(emb);
    emb = dense(t, emb, "temb2");
    emb = t.add(emb, t.embed_row(store_, "cond.table", cond));

    int B = cfg_.base;
    auto seg = [&](const char* name, int cin, int cout) {
        return [this, name, cin, cout](ad::Tape& tt, const std::vector<ad::Var>& in) {
            return res_block(tt, in[0], in[1], name, cin, cout);
        };
    };

    bool ckpt = recompute_;
    ad::Tape::SegmentFn stem_fn = [this](ad::Tape& tt, const std::vector<ad::Var>& in) {
        return conv(tt, in[0], "stem", 1, 1);
    };
    ad::Var h = ckpt ? t.checkpoint(stem_fn, {z}) : stem_fn(t, {z});

    ad::Var d1 = ckpt ? t.checkpoint(seg("down1", B, B), {h, emb})
                      : res_block(t, h, emb, "down1", B, B);
    ad::Var p1 = t.avg_pool2(d1);
    ad::Var d2 = ckpt ? t.checkpoint(seg("down2", B, 2 * B), {p1, emb})
                      : res_block(t, p1, emb, "down2", B, 2 * B);
    ad::Var p2 = t.avg_pool2(d2);
    ad::Var mid = ckpt ? t.checkpoint(seg("mid", 2 * B, 2 * B), {p2, emb})
                       : res_block(t, p2, emb, "mid", 2 * B, 2 * B);

    ad::Var u1in = t.concat_c(t.upsample2(mid), d2);
    ad::Var u1 = ckpt ? t.checkpoint(seg("up1", 4 * B, 2 * B), {u1in, emb})
                      : res_block(t, u1in, emb, "up1", 4 * B, 2 * B);
    ad::Var u2in = t.concat_c(t.upsample2(u1), d1);
    ad::Var u2 = ckpt ? t.checkpoint(seg("up2", 3 * B, B), {u2in, emb})
                      : res_block(t, u2in, emb, "up2", 3 * B, B);

    ad::Tape::SegmentFn head_fn = [this](ad::Tape& tt, const std::vector<ad::Var>& in) {
        ad::Var o = tt.group_norm(in[0], tt.param(store_, "head.gn.g"),
                                  tt.param(store_, "head.gn.b"), cfg_.groups, 1e-5);
        o = tt.silu(o);
        return conv(tt, o, "head.conv", 1, 1);
    };
    return ckpt ? t.checkpoint(head_fn, {u2}) : head_fn(t, {u2});
}

std::vector<std::string> UNetModel::adapter_layers() const {
    std::vector<std::string> out = {"temb1", "temb2", "stem", "head.conv"};
    for (const char* blk : {"down1", "down2", "mid", "up1", "up2"}) {
        out.push_back(std::string(blk) + ".conv1");
        out.push_back(std::string(blk) + ".conv2");
        out.push_back(std::string(blk) + ".tproj");
        if (store_.has(std::string(blk) + ".skip.w")) out.push_back(std::string(blk) + ".skip");
    }
    return out;
}

std::unique_ptr<EpsilonModel> UNetModel::clone() const {
    auto copy = std::make_unique<UNetModel>(*this);
    copy->params().zero_grads();
    return copy;
}

}  // namespace ldms
