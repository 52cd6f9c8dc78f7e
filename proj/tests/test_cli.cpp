#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ldmshield/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
int run_cli(const std::string& args) {
    std::string cmd = std::string(LDMS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}
}  // namespace

TEST_CASE("fraction parser accepts k/255 syntax") {
    CHECK(ldms::parse_real("4/255") == doctest::Approx(4.0 / 255.0));
    CHECK(ldms::parse_real("0.005") == doctest::Approx(0.005));
    CHECK_THROWS_AS(ldms::parse_real("abc"), ldms::ConfigError);
}

TEST_CASE("dataset subcommand writes images, an index, and a manifest") {
    fs::path dir = fresh_dir("ldms_cli_dataset");
    int rc = run_cli("--out " + dir.string() +
                     " dataset --groups 2 --per-group 3 --holdout-per-group 1 --size 16 --seed 9");
    REQUIRE(rc == 0);
    CHECK(fs::exists(dir / "dataset" / "index.json"));
    CHECK(fs::exists(dir / "dataset" / "g00_i000.png"));
    CHECK(fs::exists(dir / "manifest.json"));

    std::ifstream in(dir / "manifest.json");
    json manifest = json::parse(in);
    CHECK(manifest["command"] == "dataset");
    CHECK(manifest["outputs"].size() == 2 * 3 + 2 * 1 + 1);
    fs::remove_all(dir);
}

TEST_CASE("pattern subcommand renders a PNG") {
    fs::path dir = fresh_dir("ldms_cli_pattern");
    int rc = run_cli("--out " + dir.string() + " pattern --spec stripes:4:1.0 --height 16 --width 16");
    REQUIRE(rc == 0);
    CHECK(fs::exists(dir / "pattern.png"));
    fs::remove_all(dir);
}

TEST_CASE("bad flags exit with the config error code") {
    CHECK(run_cli("pattern --no-such-flag 1") == 2);
    CHECK(run_cli("dataset --size -3") == 2);
    // stage failure: missing model file
    fs::path dir = fresh_dir("ldms_cli_badmodel");
    int rc = run_cli("--out " + dir.string() +
                     " sample --model /nonexistent.ldsc --autoencoder analytic");
    CHECK(rc == 3);
    fs::remove_all(dir);
}

TEST_CASE("replay reproduces byte-identical dataset outputs") {
    fs::path dir = fresh_dir("ldms_cli_replay");
    int rc = run_cli("--out " + (dir / "run1").string() +
                     " dataset --groups 1 --per-group 2 --holdout-per-group 0 --size 16 --seed 4");
    REQUIRE(rc == 0);
    rc = run_cli("--out " + (dir / "run2").string() + " replay " +
                 (dir / "run1" / "manifest.json").string());
    CHECK(rc == 0);
    fs::remove_all(dir);
}

TEST_CASE("library-level replay detects diverging outputs") {
    fs::path dir = fresh_dir("ldms_lib_replay");
    json params = {{"groups", 1}, {"per_group", 2}, {"holdout_per_group", 0},
                   {"size", 16},  {"seed", 21}};
    ldms::run_command("dataset", params, (dir / "a").string());

    // tamper with one artifact, then replay against the modified manifest dir
    {
        std::ifstream in(dir / "a" / "manifest.json");
        json manifest = json::parse(in);
        manifest["outputs"]["dataset/g00_i000.png"] = std::string(64, '0');
        std::ofstream out(dir / "a" / "manifest.json");
        out << manifest.dump(2);
    }
    ldms::ReplayResult result = ldms::replay((dir / "a" / "manifest.json").string(),
                                             (dir / "b").string());
    CHECK(!result.identical);
    fs::remove_all(dir);
}

TEST_CASE("pipeline halts on stage failure and records partial state") {
    fs::path dir = fresh_dir("ldms_pipeline_fail");
    json config;
    config["stages"] = json::array();
    config["stages"].push_back({{"kind", "dataset"},
                                {"name", "data"},
                                {"params", {{"groups", 1}, {"per_group", 2},
                                            {"holdout_per_group", 0}, {"size", 16}, {"seed", 1}}}});
    config["stages"].push_back(
        {{"kind", "sample"},
         {"name", "broken"},
         {"params", {{"model", "/nonexistent.ldsc"}}}});

    CHECK_THROWS(ldms::run_pipeline(config, dir.string()));
    std::ifstream in(dir / "manifest.json");
    json manifest = json::parse(in);
    CHECK(manifest["status"] == "failed");
    REQUIRE(manifest["stages"].size() == 2);
    CHECK(manifest["stages"][0]["status"] == "ok");
    CHECK(manifest["stages"][1]["status"] == "failed");
    fs::remove_all(dir);
}
