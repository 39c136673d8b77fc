#pragma once

// Experiment orchestration: config files, the run manifest and the stages
// simulate -> measure -> generate -> train -> finetune -> analyze -> report.

#include "ecalab/analysis.hpp"
#include "ecalab/complexity.hpp"
#include "ecalab/datagen.hpp"
#include "ecalab/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace ecalab::pipeline {

inline constexpr const char* tool_version = "0.1.0";
inline constexpr int config_version = 1;
inline constexpr const char* output_root_env = "ECALAB_OUTPUT_ROOT";

// Two rules per Wolfram class.
inline const std::vector<int> representative_rules = {0, 168, 4, 179, 30, 150, 54, 110};

struct TaskSettings {
    bool enabled = true;
    std::size_t samples = 256;
    std::size_t seq_len = 6;
    std::uint64_t seed = 7;
    model::TrainConfig train;
};

struct ChessSettings {
    bool enabled = false;
    std::vector<std::string> pgn;
    int min_rating = 2200;
    std::uint64_t split_seed = 0;
    model::TrainConfig train;
};

struct ExperimentConfig {
    std::vector<int> rules = representative_rules;
    std::string rule_set = "explicit";  // explicit | all-256 | canonical-88
    std::vector<std::size_t> horizons = {1};
    std::vector<std::uint64_t> seeds = {0};
    std::string output_dir;

    complexity::ComplexityConfig complexity;
    datagen::PretrainConfig pretrain;
    std::size_t pretrain_samples = 2048;
    std::size_t probe_samples = 256;
    std::uint64_t probe_seed = 0x50524F4245ULL;
    model::ModelConfig model;
    model::TrainConfig train;

    TaskSettings easy;
    TaskSettings hard;
    ChessSettings chess;

    double efficiency_threshold = 0.8;
    analysis::CkaMode cka_mode = analysis::CkaMode::activation;
    std::size_t attention_k = 10;

    std::vector<eca::RuleId> rule_ids() const;
    std::string hash() const;  // SHA-256 of the canonical JSON
};

// Desk-scale defaults used when a config omits a field; ExperimentConfig{}
// carries the library-level training defaults instead.
ExperimentConfig default_config();

void validate(const ExperimentConfig& c);
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);
// JSON with // and /* */ comments allowed.
ExperimentConfig load_config(const std::string& path);
// Commented template listing every field with its default.
std::string config_template();

// ---------------------------------------------------------------- manifest

struct StageRecord {
    std::string status;  // running | done
    std::string inputs_hash;
    std::map<std::string, std::string> outputs;  // run-relative path -> sha256 ("" while running)
    double wall_seconds = 0;
};

struct RunManifest {
    std::string tool_version = pipeline::tool_version;
    std::string config_hash;
    std::size_t threads = 1;
    std::map<std::string, StageRecord> stages;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

struct VerifyReport {
    std::vector<std::string> orphans;      // files no manifest entry claims
    std::vector<std::string> mismatched;   // recorded hash differs from disk
    std::vector<std::string> missing;      // recorded output absent
    std::vector<std::string> incomplete;   // stages still marked running
    bool ok() const { return orphans.empty() && mismatched.empty() && missing.empty(); }
};

// ------------------------------------------------------------------- run

struct StageStats {
    std::size_t executed = 0;
    std::size_t cached = 0;
};

class Run {
public:
    Run(ExperimentConfig config, std::filesystem::path dir, std::size_t threads = 1);

    const ExperimentConfig& config() const noexcept { return config_; }
    const std::filesystem::path& dir() const noexcept { return dir_; }
    RunManifest manifest() const;

    StageStats complexity();
    StageStats generate();
    StageStats train();
    StageStats finetune();
    StageStats analyze();
    StageStats report();
    StageStats all();

    VerifyReport verify() const;

    // Run-relative artifact names.
    static std::string pretrain_dataset(int rule, std::size_t horizon, std::uint64_t seed);
    static std::string probe_dataset(int rule, std::size_t horizon);
    static std::string pretrain_checkpoint(int rule, std::size_t horizon, std::uint64_t seed);
    static std::string finetune_checkpoint(const std::string& task, int rule, std::size_t horizon, std::uint64_t seed);
    static std::string history_file(const std::string& stage, int rule, std::size_t horizon, std::uint64_t seed);

private:
    template <typename Fn>
    bool stage(const std::string& key, const nlohmann::json& inputs, const std::vector<std::string>& outputs, Fn&& fn);
    std::string require(const std::string& rel) const;  // returns sha256, throws missing-prerequisite
    std::string recorded_hash(const std::string& rel) const;
    void save_manifest();
    std::filesystem::path path(const std::string& rel) const { return dir_ / rel; }

    ExperimentConfig config_;
    std::filesystem::path dir_;
    RunManifest manifest_;
    mutable std::mutex mu_;
};

// Exit status for an exception escaping a command: 2 config, 3 missing
// prerequisite or corrupt artifact, 4 numeric failure, 1 otherwise.
int exit_code(const Error& e) noexcept;

}  // namespace ecalab::pipeline
