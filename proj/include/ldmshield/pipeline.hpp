#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

namespace ldms {

// exit code 2
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// exit code 3
struct StageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr const char* kToolName = "ldmshield";
inline constexpr const char* kToolVersion = "0.1.0";

// Parses "4/255" fractions as well as plain reals.
double parse_real(const std::string& s);

// Runs one command, writes artifacts plus manifest.json under out_dir, and
// returns the manifest. Stage kinds: dataset, pretrain, pattern, attack,
// finetune, sample, sdedit, analyze, evaluate, defend.
nlohmann::json run_command(const std::string& kind, const nlohmann::json& params,
                           const std::string& out_dir);

// Sequential stages from a config {"stages": [{"kind":..., "params":...}]}.
// A stage failure halts the pipeline; the manifest records the partial state.
nlohmann::json run_pipeline(const nlohmann::json& config, const std::string& out_dir);

struct ReplayResult {
    bool identical = false;
    nlohmann::json report;
};

// Re-runs the manifest's command(s) into out_dir and compares output hashes.
ReplayResult replay(const std::string& manifest_path, const std::string& out_dir);

}  // namespace ldms
