#include "ldmshield/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

#include "ldmshield/attack.hpp"
#include "ldmshield/checkpoint.hpp"
#include "ldmshield/dataset.hpp"
#include "ldmshield/defenses.hpp"
#include "ldmshield/diffusion.hpp"
#include "ldmshield/hashio.hpp"
#include "ldmshield/metrics.hpp"
#include "ldmshield/patterns.hpp"
#include "ldmshield/recipes.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ldms {

double parse_real(const std::string& s) {
    auto slash = s.find('/');
    try {
        if (slash == std::string::npos) return std::stod(s);
        double num = std::stod(s.substr(0, slash));
        double den = std::stod(s.substr(slash + 1));
        if (den == 0.0) throw ConfigError("division by zero in '" + s + "'");
        return num / den;
    } catch (const std::invalid_argument&) {
        throw ConfigError("cannot parse number '" + s + "'");
    }
}

namespace {

double real_param(const json& params, const std::string& key, double fallback) {
    if (!params.contains(key)) return fallback;
    const json& v = params.at(key);
    if (v.is_string()) return parse_real(v.get<std::string>());
    return v.get<double>();
}

// Tracks the files a stage reads and writes, with content hashes.
struct StageIO {
    std::string out_dir;
    json inputs = json::object();
    json outputs = json::object();

    explicit StageIO(std::string dir) : out_dir(std::move(dir)) {
        fs::create_directories(out_dir);
    }
    void note_input(const std::string& path) { inputs[path] = sha256_file(path); }
    std::string out_path(const std::string& rel) {
        fs::path p = fs::path(out_dir) / rel;
        fs::create_directories(p.parent_path());
        return p.string();
    }
    void note_output(const std::string& rel) {
        outputs[rel] = sha256_file((fs::path(out_dir) / rel).string());
    }
    std::string write_json(const std::string& rel, const json& j) {
        std::string p = out_path(rel);
        std::ofstream out(p);
        out << j.dump(2) << "\n";
        out.close();
        note_output(rel);
        return p;
    }
};

std::vector<std::string> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

struct ImageSet {
    std::vector<Image> images;
    std::vector<std::string> names;
    int cond = 0;
};

// Accepts a directory of PNGs or {"index": ..., "group": g, "split": ...}.
ImageSet load_image_set(const json& spec, StageIO& io, int default_cond) {
    ImageSet set;
    set.cond = default_cond;
    std::vector<std::string> files;
    if (spec.is_string()) {
        files = list_pngs(spec.get<std::string>());
    } else if (spec.is_object()) {
        std::string index_path = spec.at("index");
        io.note_input(index_path);
        std::ifstream in(index_path);
        if (!in) throw ConfigError("cannot open index: " + index_path);
        json index = json::parse(in);
        int group = spec.value("group", 0);
        std::string split = spec.value("split", "train");
        fs::path base = fs::path(index_path).parent_path();
        for (const auto& jg : index.at("groups")) {
            if (jg.at("id").get<int>() != group) continue;
            set.cond = jg.at("cond").get<int>();
            const json& arr = split == "holdout" ? jg.at("holdout") : jg.at("files");
            for (const auto& f : arr)
                files.push_back((base / f.at("file").get<std::string>()).string());
        }
        if (files.empty()) throw ConfigError("group not found or empty in index");
        if (spec.contains("cond")) set.cond = spec.at("cond").get<int>();
        int limit = spec.value("limit", 0);
        if (limit > 0 && static_cast<int>(files.size()) > limit) files.resize(limit);
    } else {
        throw ConfigError("image set must be a directory or an index object");
    }
    for (const std::string& f : files) {
        if (!spec.is_object()) io.note_input(f);
        set.images.push_back(read_png(f));
        set.names.push_back(fs::path(f).stem().string());
    }
    if (set.images.empty()) throw ConfigError("image set is empty");
    return set;
}

std::unique_ptr<Autoencoder> load_backend(const json& params, StageIO& io) {
    std::string spec = params.value("autoencoder", "analytic");
    if (spec == "analytic") return std::make_unique<AnalyticAutoencoder>();
    if (spec.size() > 5 && spec.substr(0, 9) == "analytic:") {
        int c = std::stoi(spec.substr(9));
        return std::make_unique<AnalyticAutoencoder>(3, c);
    }
    io.note_input(spec);
    return load_conv_autoencoder(spec);
}

std::unique_ptr<UNetModel> load_model(const json& params, StageIO& io,
                                      const std::string& key = "model") {
    std::string path = params.at(key);
    io.note_input(path);
    return load_unet(path);
}

NoiseSchedule schedule_from(const json& params) {
    int T = params.value("timesteps", 1000);
    double b0 = real_param(params, "beta0", 1e-4);
    double bT = real_param(params, "betaT", 2e-2);
    return build_linear_schedule(T, b0, bT);
}

json schedule_meta(const NoiseSchedule& s) {
    return {{"T", s.T}, {"beta0", s.beta[0]}, {"betaT", s.beta[s.T - 1]}, {"kind", "linear"}};
}

FinetuneConfig finetune_config_from(const json& params, int default_cond) {
    FinetuneConfig cfg;
    cfg.steps = params.value("steps", 10);
    cfg.lr = real_param(params, "lr", 1e-5);
    cfg.rank = params.value("rank", 4);
    cfg.mode = params.value("mode", "adapter") == std::string("full") ? FinetuneMode::full
                                                                      : FinetuneMode::adapter;
    cfg.cond = params.value("cond", default_cond);
    cfg.batch = params.value("batch", 4);
    std::string opt = params.value("optimizer", "sgd");
    cfg.optimizer = opt == "adam"   ? OptimizerKind::adam
                    : opt == "momentum" ? OptimizerKind::momentum
                                        : OptimizerKind::sgd;
    return cfg;
}

Latent resolve_target(const json& params, Autoencoder& backend, UNetModel& model, StageIO& io,
                      json& details) {
    auto [h, w, c] = model.latent_shape();
    int f = backend.factor();
    if (params.contains("target_png")) {
        std::string path = params.at("target_png");
        io.note_input(path);
        Image img = read_png(path);
        TargetLatent t = encode_target(img, backend);
        details["target"] = {{"source", path}, {"hash", t.content_hash}};
        return t.latent;
    }
    std::string spec_str = params.value("target", "glyph:8:1.0");
    PatternSpec spec = PatternSpec::parse(spec_str);
    spec.height = h * f;
    spec.width = w * f;
    spec.channels = backend.image_channels();
    Image img = generate_pattern(spec);
    TargetLatent t = encode_target(img, backend);
    details["target"] = {{"spec", spec.to_string()}, {"hash", t.content_hash}};
    return t.latent;
}

// ------------------------------------------------------------------- stages

json stage_dataset(const json& params, StageIO& io) {
    ToyDatasetSpec spec;
    spec.groups = params.value("groups", 5);
    spec.per_group = params.value("per_group", 20);
    spec.holdout_per_group = params.value("holdout_per_group", 4);
    spec.size = params.value("size", 32);
    spec.seed = params.value("seed", 42ULL);
    ToyDataset ds = generate_toy_dataset(spec);
    std::string sub = params.value("subdir", "dataset");
    std::string index = write_dataset(ds, (fs::path(io.out_dir) / sub).string());
    for (int g = 0; g < spec.groups; ++g) {
        for (std::size_t i = 0; i < ds.train[g].size(); ++i) {
            char name[96];
            std::snprintf(name, sizeof(name), "%s/g%02d_i%03d.png", sub.c_str(), g,
                          static_cast<int>(i));
            io.note_output(name);
        }
        for (std::size_t i = 0; i < ds.holdout[g].size(); ++i) {
            char name[96];
            std::snprintf(name, sizeof(name), "%s/g%02d_h%03d.png", sub.c_str(), g,
                          static_cast<int>(i));
            io.note_output(name);
        }
    }
    io.note_output(sub + "/index.json");
    return {{"index", index}, {"images", spec.groups * (spec.per_group + spec.holdout_per_group)}};
}

json stage_pretrain(const json& params, StageIO& io) {
    std::uint64_t seed = params.value("seed", 7ULL);
    NoiseSchedule sched = schedule_from(params);

    json images_spec = params.contains("images") ? params.at("images") : json();
    std::vector<ConditionedImage> dataset;
    if (params.contains("dataset_index")) {
        std::string index_path = params.at("dataset_index");
        io.note_input(index_path);
        std::ifstream in(index_path);
        json index = json::parse(in);
        fs::path base = fs::path(index_path).parent_path();
        for (const auto& jg : index.at("groups")) {
            int cond = jg.at("cond");
            for (const auto& f : jg.at("files"))
                dataset.emplace_back(read_png((base / f.at("file").get<std::string>()).string()),
                                     cond);
        }
    } else {
        ImageSet set = load_image_set(images_spec, io, params.value("cond", 1));
        for (const Image& img : set.images) dataset.emplace_back(img, set.cond);
    }
    if (dataset.empty()) throw ConfigError("pretrain: no training images");

    std::vector<Image> plain;
    for (auto& [img, cond] : dataset) plain.push_back(img);

    std::string backend_kind = params.value("backend", "trained");
    std::unique_ptr<Autoencoder> backend;
    json details;
    if (backend_kind == "trained") {
        ConvAutoencoderConfig acfg;
        acfg.latent_c = params.value("latent_c", 4);
        auto ae = std::make_unique<ConvAutoencoder>(acfg, splitmix64(seed ^ 0xae));
        AeTrainConfig atc;
        atc.steps = params.value("ae_steps", atc.steps);
        atc.lr = real_param(params, "ae_lr", atc.lr);
        train_conv_autoencoder(*ae, plain, atc, splitmix64(seed ^ 0xae1));
        double mse = autoencoder_mse(*ae, plain);
        details["ae_train_mse"] = mse;
        std::string ae_path = io.out_path("autoencoder.ldsc");
        save_conv_autoencoder(*ae, ae_path, {{"schedule", schedule_meta(sched)}});
        io.note_output("autoencoder.ldsc");
        details["autoencoder"] = ae_path;
        backend = std::move(ae);
    } else {
        backend = std::make_unique<AnalyticAutoencoder>();
    }

    int size = dataset[0].first.height();
    UNetConfig ucfg;
    ucfg.latent_h = size / backend->factor();
    ucfg.latent_w = size / backend->factor();
    ucfg.latent_c = backend->latent_channels();
    ucfg.base = params.value("base", 16);
    int max_cond = 0;
    for (auto& [img, cond] : dataset) max_cond = std::max(max_cond, cond);
    ucfg.cond_vocab = std::max(params.value("cond_vocab", max_cond + 1), max_cond + 1);

    UNetModel model(ucfg, splitmix64(seed ^ 0x111e7));
    PretrainConfig pcfg;
    pcfg.steps = params.value("unet_steps", pcfg.steps);
    pcfg.lr = real_param(params, "unet_lr", pcfg.lr);
    pcfg.batch = params.value("batch", pcfg.batch);
    std::vector<double> losses;
    pretrain_unet(model, dataset, *backend, sched, pcfg, splitmix64(seed ^ 0x111e8), &losses);

    json backend_meta = {{"kind", backend_kind}, {"factor", backend->factor()},
                         {"latent_c", backend->latent_channels()}};
    std::string model_path = io.out_path("unet.ldsc");
    save_unet(model, model_path,
              {{"schedule", schedule_meta(sched)}, {"backend", backend_meta}});
    io.note_output("unet.ldsc");
    details["model"] = model_path;
    details["final_loss"] = losses.empty() ? 0.0 : losses.back();
    details["steps"] = pcfg.steps;
    return details;
}

json stage_pattern(const json& params, StageIO& io) {
    PatternSpec spec = PatternSpec::parse(params.value("spec", "glyph:8:1.0"));
    spec.height = params.value("height", 32);
    spec.width = params.value("width", 32);
    spec.channels = params.value("channels", 3);
    Image img = generate_pattern(spec);
    std::string rel = params.value("output", "pattern.png");
    write_png(img, io.out_path(rel));
    io.note_output(rel);
    return {{"spec", spec.to_string()}, {"file", rel}};
}

json stage_attack(const json& params, StageIO& io) {
    std::uint64_t seed = params.value("seed", 1ULL);
    NoiseSchedule sched = schedule_from(params);
    auto backend = load_backend(params, io);
    auto model = load_model(params, io);

    ImageSet set = load_image_set(params.at("images"), io, params.value("cond", 1));

    AttackObjective obj;
    obj.kind = parse_objective_kind(params.value("objective", "ace"));
    obj.direction = default_direction(obj.kind);
    if (params.contains("direction")) {
        std::string d = params.at("direction");
        if (d == "ascend") obj.direction = Direction::ascend;
        else if (d == "descend") obj.direction = Direction::descend;
        else if (d != "default") throw ConfigError("bad direction: " + d);
    }
    obj.fusion_weight = real_param(params, "alpha", 100.0);
    obj.cond = params.value("cond", set.cond);

    json details;
    if (obj.kind != ObjectiveKind::advdm)
        obj.target = resolve_target(params, *backend, *model, io, details);

    AttackBudget budget;
    budget.zeta = real_param(params, "zeta", 4.0 / 255.0);
    budget.step = real_param(params, "step", 5e-3);
    budget.epochs = params.value("epochs", 5);
    budget.pgd_iters_per_epoch = params.value("pgd_steps", 10);
    budget.finetune_steps = params.value("finetune_steps", 10);

    AttackEngineConfig engine;
    engine.mc = params.value("mc", 4);
    engine.memory = params.value("memory", "standard") == std::string("recompute")
                        ? MemoryMode::recompute
                        : MemoryMode::standard;
    engine.inner_finetune = finetune_config_from(params.value("finetune", json::object()),
                                                 obj.cond);

    AttackStats stats;
    std::vector<AdversarialExample> examples = run_attack(
        set.images, *model, obj, budget, engine, *backend, sched, seed, &stats);

    json traces = json::array();
    for (std::size_t i = 0; i < examples.size(); ++i) {
        Image quantized = quantize8(examples[i].adv);
        double linf = linf_dist(quantized.data, quantize8(examples[i].clean).data);
        if (linf > budget.zeta + 1e-12)
            throw StageError("attack: budget violated after 8-bit export");
        std::string rel = "adv/" + set.names[i] + ".png";
        write_png(quantized, io.out_path(rel));
        io.note_output(rel);
        traces.push_back({{"image", set.names[i]},
                          {"objective_first", examples[i].objective_trace.front()},
                          {"objective_last", examples[i].objective_trace.back()},
                          {"linf_after_export", linf}});
    }
    details["objective"] = objective_kind_name(obj.kind);
    details["zeta"] = budget.zeta;
    details["step"] = budget.step;
    details["epochs"] = budget.epochs;
    details["pgd_steps_per_epoch"] = budget.pgd_iters_per_epoch;
    details["finetune_steps_per_epoch"] = budget.finetune_steps;
    details["mc"] = engine.mc;
    details["memory"] = engine.memory == MemoryMode::recompute ? "recompute" : "standard";
    details["total_pgd_steps"] = stats.pgd_steps;
    details["total_finetune_steps"] = stats.finetune_steps;
    details["peak_memory_bytes"] = stats.peak_memory_bytes;
    details["traces"] = traces;
    return details;
}

json stage_finetune(const json& params, StageIO& io) {
    std::uint64_t seed = params.value("seed", 3ULL);
    NoiseSchedule sched = schedule_from(params);
    auto backend = load_backend(params, io);
    auto model = load_model(params, io);

    ImageSet set = load_image_set(params.at("images"), io, params.value("cond", 1));
    FinetuneConfig cfg = finetune_config_from(params, set.cond);

    std::vector<ConditionedImage> dataset;
    for (const Image& img : set.images) dataset.emplace_back(img, cfg.cond);

    FinetuneTrace trace;
    std::unique_ptr<UNetModel> tuned =
        finetune(*model, dataset, cfg, *backend, sched, seed, &trace);

    json details;
    details["steps"] = cfg.steps;
    details["lr"] = cfg.lr;
    details["mode"] = cfg.mode == FinetuneMode::adapter ? "adapter" : "full";
    details["loss_first"] = trace.losses.front();
    details["loss_last"] = trace.losses.back();

    if (cfg.mode == FinetuneMode::adapter) {
        std::string apath = io.out_path("adapters.ldsc");
        save_adapters(*tuned, apath);
        io.note_output("adapters.ldsc");
        details["adapters"] = apath;
        if (params.value("save_merged", true)) {
            merge_adapters(*tuned);
        }
    }
    std::string mpath = io.out_path("model.ldsc");
    save_unet(*tuned, mpath, {{"schedule", schedule_meta(sched)}});
    io.note_output("model.ldsc");
    details["model"] = mpath;
    return details;
}

json stage_sample(const json& params, StageIO& io) {
    std::uint64_t seed = params.value("seed", 5ULL);
    NoiseSchedule sched = schedule_from(params);
    auto backend = load_backend(params, io);
    auto model = load_model(params, io);
    int steps = params.value("steps", 50);
    int cond = params.value("cond", 0);
    int count = params.value("count", 4);
    for (int i = 0; i < count; ++i) {
        Latent z = sample(*model, sched, steps, cond, splitmix64(seed + i));
        char name[64];
        std::snprintf(name, sizeof(name), "sample_%03d.png", i);
        write_png(backend->decode(z), io.out_path(name));
        io.note_output(name);
    }
    return {{"count", count}, {"steps", steps}, {"cond", cond}};
}

json stage_sdedit(const json& params, StageIO& io) {
    std::uint64_t seed = params.value("seed", 6ULL);
    NoiseSchedule sched = schedule_from(params);
    auto backend = load_backend(params, io);
    auto model = load_model(params, io);
    ImageSet set = load_image_set(params.at("images"), io, params.value("cond", 0));
    double strength = real_param(params, "strength", 0.3);
    int steps = params.value("steps", 0);
    int cond = params.value("cond", 0);
    for (std::size_t i = 0; i < set.images.size(); ++i) {
        SampleTrace trace;
        Image out = sdedit(*model, *backend, sched, set.images[i], strength, cond,
                           splitmix64(seed + 13 * i), steps, &trace);
        std::string rel = "sdedit/" + set.names[i] + ".png";
        write_png(out, io.out_path(rel));
        io.note_output(rel);
    }
    return {{"strength", strength}, {"steps", steps}, {"count", set.images.size()}};
}

json stage_analyze(const json& params, StageIO& io) {
    std::uint64_t seed = params.value("seed", 11ULL);
    NoiseSchedule sched = schedule_from(params);
    auto backend = load_backend(params, io);
    auto theta = load_model(params, io, "theta");

    std::unique_ptr<UNetModel> theta_star, phi;
    if (params.contains("theta_star")) theta_star = load_model(params, io, "theta_star");
    if (params.contains("phi")) phi = load_model(params, io, "phi");

    ImageSet clean = load_image_set(params.at("clean"), io, params.value("cond", 1));
    int cond = params.value("cond", clean.cond);

    std::vector<int> timesteps = params.value("timesteps", std::vector<int>{100, 300, 500, 700, 900});
    int mc = params.value("mc", 64);

    json details;
    json cosjson;

    std::vector<BiasField> eps_fields;
    if (params.contains("adv")) {
        ImageSet adv = load_image_set(params.at("adv"), io, cond);
        if (adv.images.size() != clean.images.size())
            throw ConfigError("analyze: clean/adv set size mismatch");
        for (std::size_t i = 0; i < clean.images.size(); ++i) {
            for (int t : timesteps) {
                BiasField f = estimate_eps_adv(*theta, clean.images[i], adv.images[i], t, mc,
                                               *backend, sched, splitmix64(seed + 97 * i + t),
                                               cond);
                if (t == timesteps[timesteps.size() / 2]) {
                    std::string rel = "fields/eps_adv_" + clean.names[i] + "_t" +
                                      std::to_string(t) + ".ldsa";
                    export_bias_field(f, io.out_path(rel));
                    io.note_output(rel);
                    std::string hrel = "heatmaps/eps_adv_" + clean.names[i] + "_t" +
                                       std::to_string(t) + ".png";
                    write_png(render_heatmap(f), io.out_path(hrel));
                    io.note_output(hrel);
                }
                eps_fields.push_back(std::move(f));
            }
        }

        if (phi && theta_star) {
            std::vector<BiasField> bx_fields;
            ImageSet adv2 = adv;
            for (std::size_t i = 0; i < clean.images.size(); ++i)
                for (int t : timesteps)
                    bx_fields.push_back(estimate_reverse_bias(
                        *theta, *theta_star, *phi, clean.images[i], adv2.images[i], t, mc,
                        *backend, sched, splitmix64(seed + 131 * i + t), cond));
            CosineReport rep = cosine_protocol(bx_fields, eps_fields);
            cosjson["bx_vs_eps_adv"] = {{"mean", rep.mean},
                                        {"pairs", rep.matrix.size()},
                                        {"excluded", rep.excluded_pairs}};
            if (!bx_fields.empty()) {
                std::string hrel = "heatmaps/reverse_bias_t" +
                                   std::to_string(bx_fields.front().timestep) + ".png";
                write_png(render_heatmap(bx_fields.front()), io.out_path(hrel));
                io.note_output(hrel);
            }
        }
    }

    if (phi && params.contains("holdout")) {
        ImageSet holdout = load_image_set(params.at("holdout"), io, cond);
        std::vector<BiasField> bspl_fields;
        std::map<int, BiasField> by_t;
        for (std::size_t i = 0; i < holdout.images.size(); ++i)
            for (int t : timesteps) {
                BiasField f = estimate_sampling_bias(*phi, holdout.images[i], t, mc, *backend,
                                                     sched, splitmix64(seed + 173 * i + t), cond);
                if (i == 0) by_t.emplace(t, f);
                bspl_fields.push_back(std::move(f));
            }
        BiasField eta = accumulate_sampling_error(by_t, sched);
        std::string rel = "fields/eta_spl.ldsa";
        export_bias_field(eta, io.out_path(rel));
        io.note_output(rel);
        std::string hrel = "heatmaps/eta_spl.png";
        write_png(render_heatmap(eta), io.out_path(hrel));
        io.note_output(hrel);
        details["eta_spl_l2"] = l2_norm(eta.data);
        if (!bspl_fields.empty()) {
            std::string brel = "heatmaps/sampling_bias_t" +
                               std::to_string(bspl_fields.front().timestep) + ".png";
            write_png(render_heatmap(bspl_fields.front()), io.out_path(brel));
            io.note_output(brel);
        }
        if (!eps_fields.empty()) {
            CosineReport rep = cosine_protocol(eps_fields, bspl_fields);
            cosjson["eps_adv_vs_bspl"] = {{"mean", rep.mean},
                                          {"pairs", rep.matrix.size()},
                                          {"excluded", rep.excluded_pairs}};
        }
    }

    if (!eps_fields.empty()) {
        CosineReport self = cosine_protocol(eps_fields, eps_fields);
        cosjson["eps_adv_pairwise"] = {{"mean", self.mean}, {"excluded", self.excluded_pairs}};
    }

    io.write_json("cosine_report.json", cosjson);
    details["cosine_report"] = cosjson;
    details["timesteps"] = timesteps;
    details["mc"] = mc;
    return details;
}

json stage_evaluate(const json& params, StageIO& io) {
    ImageSet inputs = load_image_set(params.at("inputs"), io, 0);
    ImageSet outputs = load_image_set(params.at("outputs"), io, 0);
    HashProjectionProvider provider(params.value("provider_dim", 64),
                                    params.value("provider_seed", 2024ULL));
    std::string pos = params.value("positive", kDefaultPositivePrompt);
    std::string neg = params.value("negative", kDefaultNegativePrompt);

    MsSsimConfig mcfg = MsSsimConfig::for_size(inputs.images[0].height(),
                                               inputs.images[0].width());
    std::size_t n = std::min(inputs.images.size(), outputs.images.size());
    double ms_sum = 0.0, cs_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ms_sum += ms_ssim(outputs.images[i], inputs.images[i], mcfg);
        cs_sum += clip_sim(outputs.images[i], inputs.images[i], provider);
    }
    double iqa = clip_iqa(outputs.images, pos, neg, provider);

    json table;
    table["pairs"] = n;
    table["ms_ssim"] = ms_sum / n;
    table["clip_sim_x100"] = 100.0 * cs_sum / n;
    table["clip_iqa"] = iqa;
    table["positive_prompt"] = pos;
    table["negative_prompt"] = neg;
    io.write_json("metrics.json", table);
    return table;
}

json stage_defend(const json& params, StageIO& io) {
    std::uint64_t seed = params.value("seed", 17ULL);
    NoiseSchedule sched = schedule_from(params);
    auto backend = load_backend(params, io);
    auto model = load_model(params, io);
    ImageSet adv = load_image_set(params.at("images"), io, params.value("cond", 1));

    std::vector<DefenseSpec> specs;
    if (params.value("grid", false)) {
        specs = defense_grid();
    } else {
        DefenseSpec spec;
        std::string kind = params.value("defense", "gaussian");
        if (kind == "gaussian") spec.kind = DefenseKind::gaussian;
        else if (kind == "jpeg") spec.kind = DefenseKind::jpeg;
        else if (kind == "resize") spec.kind = DefenseKind::resize;
        else if (kind == "sr") spec.kind = DefenseKind::sr;
        else throw ConfigError("unknown defense kind: " + kind);
        spec.sigma = real_param(params, "sigma", 4.0);
        spec.quality = params.value("quality", 70);
        spec.factor = real_param(params, "factor", 2.0);
        specs.push_back(spec);
    }

    VictimConfig victim;
    victim.pipeline = params.value("victim", "sdedit") == std::string("finetune_sample")
                          ? VictimPipeline::finetune_sample
                          : VictimPipeline::sdedit;
    victim.finetune = finetune_config_from(params.value("finetune", json::object()),
                                           params.value("cond", adv.cond));
    victim.sdedit_strength = real_param(params, "strength", 0.3);
    victim.sdedit_steps = params.value("sdedit_steps", 40);
    victim.sample_steps = params.value("sample_steps", 40);
    victim.cond = params.value("cond", adv.cond);

    HashProjectionProvider provider(64, params.value("provider_seed", 2024ULL));
    DefenseReport report =
        robustness_run(adv.images, specs, victim, *model, *backend, sched, provider, seed);

    json rows = json::array();
    for (const DefenseRow& r : report.rows) {
        json row = {{"defense", r.defense}, {"ok", r.ok}};
        if (r.ok) {
            row["ms_ssim"] = r.ms_ssim;
            row["clip_sim_x100"] = 100.0 * r.clip_sim;
            row["clip_iqa"] = r.clip_iqa;
        } else {
            row["error"] = r.error;
        }
        rows.push_back(row);
    }
    json out = {{"rows", rows}, {"configs", specs.size()}};
    io.write_json("defense_report.json", out);
    return out;
}

json dispatch_stage(const std::string& kind, const json& params, StageIO& io) {
    if (kind == "dataset") return stage_dataset(params, io);
    if (kind == "pretrain") return stage_pretrain(params, io);
    if (kind == "pattern") return stage_pattern(params, io);
    if (kind == "attack") return stage_attack(params, io);
    if (kind == "finetune") return stage_finetune(params, io);
    if (kind == "sample") return stage_sample(params, io);
    if (kind == "sdedit") return stage_sdedit(params, io);
    if (kind == "analyze") return stage_analyze(params, io);
    if (kind == "evaluate") return stage_evaluate(params, io);
    if (kind == "defend") return stage_defend(params, io);
    throw ConfigError("unknown stage kind: " + kind);
}

}  // namespace

json run_command(const std::string& kind, const json& params, const std::string& out_dir) {
    StageIO io(out_dir);
    auto t0 = std::chrono::steady_clock::now();
    reset_peak_tracked_bytes();
    json details;
    try {
        details = dispatch_stage(kind, params, io);
    } catch (const ConfigError&) {
        throw;
    } catch (const StageError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const std::exception& e) {
        throw StageError(e.what());
    }
    auto t1 = std::chrono::steady_clock::now();

    json manifest;
    manifest["schema_version"] = kManifestSchemaVersion;
    manifest["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
    manifest["command"] = kind;
    manifest["config"] = params;
    if (params.contains("seed")) manifest["seed"] = params.at("seed");
    manifest["inputs"] = io.inputs;
    manifest["outputs"] = io.outputs;
    manifest["details"] = details;
    manifest["timing_seconds"] = std::chrono::duration<double>(t1 - t0).count();
    manifest["peak_memory_bytes"] = peak_tracked_bytes();

    std::ofstream out(fs::path(out_dir) / "manifest.json");
    out << manifest.dump(2) << "\n";
    return manifest;
}

json run_pipeline(const json& config, const std::string& out_dir) {
    if (!config.contains("stages") || !config.at("stages").is_array())
        throw ConfigError("pipeline config needs a 'stages' array");
    fs::create_directories(out_dir);

    json manifest;
    manifest["schema_version"] = kManifestSchemaVersion;
    manifest["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
    manifest["command"] = "pipeline";
    manifest["config"] = config;
    manifest["stages"] = json::array();

    auto flush = [&]() {
        std::ofstream out(fs::path(out_dir) / "manifest.json");
        out << manifest.dump(2) << "\n";
    };

    int idx = 0;
    for (const json& stage : config.at("stages")) {
        std::string kind = stage.at("kind");
        std::string name = stage.value("name", std::to_string(idx) + "_" + kind);
        std::string sub = (fs::path(out_dir) / name).string();
        json entry = {{"kind", kind}, {"name", name}};
        try {
            json smanifest = run_command(kind, stage.value("params", json::object()), sub);
            entry["outputs"] = smanifest["outputs"];
            entry["details"] = smanifest["details"];
            entry["timing_seconds"] = smanifest["timing_seconds"];
            entry["status"] = "ok";
            manifest["stages"].push_back(entry);
        } catch (const std::exception& e) {
            entry["status"] = "failed";
            entry["error"] = e.what();
            manifest["stages"].push_back(entry);
            manifest["status"] = "failed";
            flush();
            throw;
        }
        ++idx;
    }
    manifest["status"] = "ok";
    flush();
    return manifest;
}

ReplayResult replay(const std::string& manifest_path, const std::string& out_dir) {
    std::ifstream in(manifest_path);
    if (!in) throw ConfigError("cannot open manifest: " + manifest_path);
    json manifest = json::parse(in);
    std::string command = manifest.at("command");

    ReplayResult result;
    result.report["manifest"] = manifest_path;
    result.report["command"] = command;

    auto compare = [&](const json& oldout, const json& newout, const std::string& scope) {
        json mism = json::array();
        for (auto it = oldout.begin(); it != oldout.end(); ++it) {
            if (!newout.contains(it.key()))
                mism.push_back({{"file", it.key()}, {"reason", "missing"}});
            else if (newout.at(it.key()) != it.value())
                mism.push_back({{"file", it.key()}, {"reason", "hash mismatch"}});
        }
        if (!mism.empty()) result.report["mismatches_" + scope] = mism;
        return mism.empty();
    };

    bool ok = true;
    if (command == "pipeline") {
        json rerun = run_pipeline(manifest.at("config"), out_dir);
        const json& old_stages = manifest.at("stages");
        const json& new_stages = rerun.at("stages");
        for (std::size_t i = 0; i < old_stages.size() && i < new_stages.size(); ++i)
            ok = compare(old_stages[i].value("outputs", json::object()),
                         new_stages[i].value("outputs", json::object()),
                         old_stages[i].value("name", std::to_string(i))) &&
                 ok;
    } else {
        json rerun = run_command(command, manifest.at("config"), out_dir);
        ok = compare(manifest.value("outputs", json::object()),
                     rerun.value("outputs", json::object()), "outputs");
    }
    result.identical = ok;
    result.report["identical"] = ok;
    return result;
}

}  // namespace ldms
