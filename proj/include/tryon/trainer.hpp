#ifndef TRYON_TRAINER_HPP
#define TRYON_TRAINER_HPP

#include <functional>
#include <optional>
#include <string>

#include "tryon/checkpoint.hpp"
#include "tryon/sprite_world.hpp"

namespace tryon {

struct StageSpec {
    std::string name;  // warmup_image | video_base | video_hires | refiner
    int64_t height = 32, width = 48;
    int64_t frames = 1;
    int64_t steps = 0;
    int64_t batch_size = 4;
    double lr = 1e-3;
    double image_mix_ratio = 0.0;
    struct Conditions {
        bool text = true, garment = true, motion = true;
    } conditions;
    double mask_loss_weight = 0.0;
    DropoutRates dropout;

    bool is_warmup() const { return name == "warmup_image"; }
    bool is_refiner() const { return name == "refiner"; }
};

struct StagePlan {
    std::vector<StageSpec> stages;

    void validate() const;
    std::string canonical_json() const;
    int64_t main_step_budget() const;  // sum over non-refiner stages
    const StageSpec* final_main_stage() const;
    const StageSpec* refiner_stage() const;
};

std::string config_hash_for(const ModelConfig& cfg, const StagePlan& plan);

// Reconstruction-first curriculum: pure function of (plan stage, step index).
bool warmup_uses_reconstruction(const StageSpec& stage, int64_t step);

// Linear warm-up over the first 5% of a stage, then constant.
double lr_at(const StageSpec& stage, int64_t step);

// Placement-mask weight, annealed linearly to zero across the warm-up stage.
double mask_weight_at(const StageSpec& stage, int64_t step);

// Per-slot source mixing: with probability rho a slot comes from the image
// source (single-frame sample, motion dropped).
template <typename SampleT>
std::vector<SampleT> mix_image_video(const std::function<SampleT()>& video_source,
                                     const std::function<SampleT()>& image_source,
                                     int64_t batch, double rho, Rng& rng) {
    if (rho < 0.0 || rho > 1.0)
        fail(ErrorKind::InvalidArgument, "image_mix_ratio must be in [0,1]");
    std::vector<SampleT> out;
    out.reserve(size_t(batch));
    for (int64_t i = 0; i < batch; i++) {
        bool image = rng.bernoulli(rho);
        out.push_back(image ? image_source() : video_source());
    }
    return out;
}

struct TrainContext {
    ModelConfig model_config;
    StagePlan plan;
    std::string config_hash;
    uint64_t seed = 0;
    std::string log_path;      // ndjson; empty disables logging
    std::string last_good_dir; // where the NaN guard parks the last finite state
};

TrainContext make_train_context(const ModelConfig& cfg, const StagePlan& plan, uint64_t seed);

Checkpoint fresh_checkpoint(const TrainContext& ctx);

// Builds the train sample for one triplet at stage resolution; image_mode
// collapses the target to frame 0 and drops the motion condition.
TrainSampleT<float> assemble_sample(const sprite::Dataset& ds, const sprite::TripletRef& ref,
                                    const StageSpec& stage, bool image_mode);

// Single-stage training: deterministic batches from (dataset, rng state),
// AdamW updates, ndjson logging. steps == 0 is an exact no-op.
Checkpoint run_stage(const TrainContext& ctx, const StageSpec& stage,
                     const sprite::Dataset& dataset, const Checkpoint& checkpoint_in);

struct PlanResult {
    Checkpoint main;
    std::optional<Checkpoint> refiner;
    std::vector<std::pair<std::string, int64_t>> stage_steps;  // boundary log
};

enum class TrainMode { Staged, Direct };

// staged: run the plan's stages in order, threading checkpoints (the
// refiner stage fine-tunes from the final main checkpoint). direct: one
// stage at the final main stage's settings with the same total budget.
PlanResult run_plan(const TrainContext& ctx, const sprite::Dataset& dataset, TrainMode mode);

StagePlan plan_from_json_text(const std::string& text);

}  // namespace tryon

#endif
