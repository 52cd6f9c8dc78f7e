#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

#include "ldmshield/pipeline.hpp"

using nlohmann::json;

namespace {

// flags > config file > defaults; explicit command-line values win
json merge_config(const std::string& config_path, const json& flags) {
    json params = json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ldms::ConfigError("cannot open config file: " + config_path);
        try {
            params = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ldms::ConfigError(std::string("config parse error: ") + e.what());
        }
    }
    for (auto it = flags.begin(); it != flags.end(); ++it) params[it.key()] = it.value();
    return params;
}

int run(const std::string& kind, const std::string& config_path, const json& flags,
        const std::string& out_dir) {
    json params = merge_config(config_path, flags);
    json manifest = ldms::run_command(kind, params, out_dir);
    std::cout << kind << ": ok, " << manifest["outputs"].size() << " artifact(s) in " << out_dir
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ldmshield: latent diffusion protection attacks, dynamics analysis, and evaluation"};
    app.require_subcommand(1);

    std::string out_dir = "out";
    std::string config_path;
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--config", config_path, "JSON config file (flags override it)");

    json flags = json::object();

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t v) { flags["seed"] = v; }, "master seed");
    };
    auto opt_str = [&](CLI::App* cmd, const std::string& name, const std::string& key,
                       const std::string& help) {
        cmd->add_option_function<std::string>(
            "--" + name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
    };
    auto opt_int = [&](CLI::App* cmd, const std::string& name, const std::string& key,
                       const std::string& help) {
        cmd->add_option_function<int>(
            "--" + name, [&flags, key](int v) { flags[key] = v; }, help);
    };
    auto opt_real = [&](CLI::App* cmd, const std::string& name, const std::string& key,
                        const std::string& help) {
        // accepts "4/255" style fractions, stored as strings and parsed later
        cmd->add_option_function<std::string>(
            "--" + name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
    };

    CLI::App* dataset = app.add_subcommand("dataset", "generate the grouped toy dataset");
    add_common(dataset);
    opt_int(dataset, "groups", "groups", "identity groups");
    opt_int(dataset, "per-group", "per_group", "images per group");
    opt_int(dataset, "holdout-per-group", "holdout_per_group", "held-out images per group");
    opt_int(dataset, "size", "size", "image size in pixels");

    CLI::App* pretrain = app.add_subcommand("pretrain", "train the autoencoder and backbone");
    add_common(pretrain);
    opt_str(pretrain, "dataset-index", "dataset_index", "dataset index.json");
    opt_str(pretrain, "backend", "backend", "trained | analytic");
    opt_int(pretrain, "ae-steps", "ae_steps", "autoencoder training steps");
    opt_int(pretrain, "unet-steps", "unet_steps", "backbone training steps");
    opt_int(pretrain, "base", "base", "backbone channel width");
    opt_int(pretrain, "latent-c", "latent_c", "latent channels (trained backend)");

    CLI::App* pattern = app.add_subcommand("pattern", "render a target pattern to PNG");
    add_common(pattern);
    opt_str(pattern, "spec", "spec", "kind:repetition:contrast[:phase]");
    opt_int(pattern, "height", "height", "pattern height");
    opt_int(pattern, "width", "width", "pattern width");

    CLI::App* attack = app.add_subcommand("attack", "generate adversarial examples");
    add_common(attack);
    opt_str(attack, "objective", "objective", "advdm | encoder | ace | ace-plus | diffusion-target");
    opt_str(attack, "model", "model", "backbone checkpoint");
    opt_str(attack, "autoencoder", "autoencoder", "autoencoder checkpoint or 'analytic'");
    opt_str(attack, "images", "images", "input image directory");
    opt_real(attack, "zeta", "zeta", "l-inf budget, e.g. 4/255");
    opt_real(attack, "step", "step", "PGD step length");
    opt_int(attack, "epochs", "epochs", "outer epochs N");
    opt_int(attack, "pgd-steps", "pgd_steps", "PGD steps per epoch K");
    opt_int(attack, "finetune-steps", "finetune_steps", "finetune steps per epoch M");
    opt_str(attack, "target", "target", "target pattern spec");
    opt_str(attack, "target-png", "target_png", "target image file");
    opt_int(attack, "mc", "mc", "Monte-Carlo draws per objective evaluation");
    opt_str(attack, "memory", "memory", "standard | recompute");
    opt_real(attack, "alpha", "alpha", "fusion weight (ace-plus)");
    opt_int(attack, "cond", "cond", "condition id");

    CLI::App* finetune = app.add_subcommand("finetune", "finetune a backbone on images");
    add_common(finetune);
    opt_str(finetune, "model", "model", "backbone checkpoint");
    opt_str(finetune, "autoencoder", "autoencoder", "autoencoder checkpoint or 'analytic'");
    opt_str(finetune, "images", "images", "training image directory");
    opt_int(finetune, "steps", "steps", "gradient steps");
    opt_real(finetune, "lr", "lr", "learning rate");
    opt_int(finetune, "rank", "rank", "adapter rank");
    opt_str(finetune, "mode", "mode", "adapter | full");
    opt_int(finetune, "cond", "cond", "condition id");

    CLI::App* sample_cmd = app.add_subcommand("sample", "sample images from a model");
    add_common(sample_cmd);
    opt_str(sample_cmd, "model", "model", "model checkpoint");
    opt_str(sample_cmd, "autoencoder", "autoencoder", "autoencoder checkpoint or 'analytic'");
    opt_int(sample_cmd, "steps", "steps", "sampling steps");
    opt_int(sample_cmd, "count", "count", "number of samples");
    opt_int(sample_cmd, "cond", "cond", "condition id");

    CLI::App* sdedit_cmd = app.add_subcommand("sdedit", "image-to-image editing");
    add_common(sdedit_cmd);
    opt_str(sdedit_cmd, "model", "model", "model checkpoint");
    opt_str(sdedit_cmd, "autoencoder", "autoencoder", "autoencoder checkpoint or 'analytic'");
    opt_str(sdedit_cmd, "images", "images", "input image directory");
    opt_real(sdedit_cmd, "strength", "strength", "noising strength in (0,1)");
    opt_int(sdedit_cmd, "steps", "steps", "chain steps (0 = every timestep)");
    opt_int(sdedit_cmd, "cond", "cond", "condition id");

    CLI::App* analyze = app.add_subcommand("analyze", "score-function error diagnostics");
    add_common(analyze);
    opt_str(analyze, "theta", "theta", "backbone checkpoint");
    opt_str(analyze, "theta-star", "theta_star", "clean-finetuned checkpoint");
    opt_str(analyze, "phi", "phi", "adversarially finetuned checkpoint");
    opt_str(analyze, "autoencoder", "autoencoder", "autoencoder checkpoint or 'analytic'");
    opt_str(analyze, "clean", "clean", "clean image directory");
    opt_str(analyze, "adv", "adv", "adversarial image directory");
    opt_str(analyze, "holdout", "holdout", "held-out image directory");
    opt_int(analyze, "mc", "mc", "Monte-Carlo draws per estimate");
    opt_int(analyze, "cond", "cond", "condition id");

    CLI::App* evaluate = app.add_subcommand("evaluate", "similarity/quality metric table");
    add_common(evaluate);
    opt_str(evaluate, "inputs", "inputs", "clean/input image directory");
    opt_str(evaluate, "outputs", "outputs", "output image directory");
    opt_str(evaluate, "positive", "positive", "positive prompt");
    opt_str(evaluate, "negative", "negative", "negative prompt");

    CLI::App* defend = app.add_subcommand("defend", "denoising counter-attack harness");
    add_common(defend);
    bool grid = false;
    defend->add_flag("--grid", grid, "run the full seven-config defense grid");
    opt_str(defend, "model", "model", "backbone checkpoint");
    opt_str(defend, "autoencoder", "autoencoder", "autoencoder checkpoint or 'analytic'");
    opt_str(defend, "images", "images", "adversarial image directory");
    opt_str(defend, "defense", "defense", "gaussian | jpeg | resize | sr");
    opt_real(defend, "sigma", "sigma", "gaussian sigma in 8-bit units");
    opt_int(defend, "quality", "quality", "jpeg quality");
    opt_real(defend, "factor", "factor", "resize factor");
    opt_str(defend, "victim", "victim", "sdedit | finetune_sample");
    opt_int(defend, "cond", "cond", "condition id");

    CLI::App* pipeline_cmd = app.add_subcommand("pipeline", "run a multi-stage config");
    add_common(pipeline_cmd);

    CLI::App* replay_cmd = app.add_subcommand("replay", "re-run a manifest and verify hashes");
    std::string manifest_path;
    replay_cmd->add_option("manifest", manifest_path, "manifest.json to replay")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (dataset->parsed()) return run("dataset", config_path, flags, out_dir);
        if (pretrain->parsed()) return run("pretrain", config_path, flags, out_dir);
        if (pattern->parsed()) return run("pattern", config_path, flags, out_dir);
        if (attack->parsed()) return run("attack", config_path, flags, out_dir);
        if (finetune->parsed()) return run("finetune", config_path, flags, out_dir);
        if (sample_cmd->parsed()) return run("sample", config_path, flags, out_dir);
        if (sdedit_cmd->parsed()) return run("sdedit", config_path, flags, out_dir);
        if (analyze->parsed()) return run("analyze", config_path, flags, out_dir);
        if (evaluate->parsed()) return run("evaluate", config_path, flags, out_dir);
        if (defend->parsed()) {
            if (grid) flags["grid"] = true;
            return run("defend", config_path, flags, out_dir);
        }
        if (pipeline_cmd->parsed()) {
            if (config_path.empty()) throw ldms::ConfigError("pipeline requires --config");
            std::ifstream in(config_path);
            if (!in) throw ldms::ConfigError("cannot open config file: " + config_path);
            json config = json::parse(in);
            json manifest = ldms::run_pipeline(config, out_dir);
            std::cout << "pipeline: ok, " << manifest["stages"].size() << " stage(s) in "
                      << out_dir << "\n";
            return 0;
        }
        if (replay_cmd->parsed()) {
            ldms::ReplayResult result = ldms::replay(manifest_path, out_dir);
            std::cout << result.report.dump(2) << "\n";
            if (!result.identical) {
                std::cerr << "replay: output hashes differ\n";
                return 3;
            }
            std::cout << "replay: outputs byte-identical\n";
            return 0;
        }
    } catch (const ldms::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
