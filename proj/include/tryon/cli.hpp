#ifndef TRYON_CLI_HPP
#define TRYON_CLI_HPP

#include <string>
#include <vector>

#include "tryon/sprite_world.hpp"
#include "tryon/trainer.hpp"

namespace tryon {

// Batch orchestration entry point. Subcommands: gen-data, train, sample,
// refine, eval, judge, report. Exit codes: 0 success, 1 runtime failure,
// 2 usage or config error.
int run_command(const std::vector<std::string>& argv);
int run_command(int argc, const char* const* argv);

// Parsed and validated run configuration (schema: configs/schema.json;
// unknown keys are rejected before any work starts).
struct DatasetConfig {
    int avatars = 2;
    int garments_per_type = 2;
    int train_motions = 8;
    int eval_motions = 4;
    int sets_per_avatar = 4;
    int eval_sets_per_avatar = 1;
    int64_t frames = 9;
    double fps = 8.0;
    int64_t height = 64, width = 96;
    bool include_reconstruction = true;
    double extra_holdout_fraction = 0.1;
    bool highfps = true;
};

struct SampleDefaults {
    int steps = 12;
    double guidance = 1.0;
};

struct JudgeSettings {
    std::string client = "stub";  // stub | http
    int n = 40;
    std::string rubric_file;
    std::string endpoint;
    std::string model = "judge";
    std::string api_key_env = "JUDGE_API_KEY";
};

struct RunConfig {
    uint64_t seed = 7;
    ModelConfig model;
    std::string vocab_file;
    DatasetConfig dataset;
    StagePlan stages;
    SampleDefaults sample;
    JudgeSettings judge;
    std::string raw_json;  // canonical echo for provenance

    std::string config_hash() const;
};

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides = {});

// Deterministic sprite dataset construction per the run config (scene
// rendering, triplet cross-matching, train/held-out split assignment).
sprite::Dataset build_sprite_dataset(const RunConfig& cfg, uint64_t seed);

}  // namespace tryon

#endif
