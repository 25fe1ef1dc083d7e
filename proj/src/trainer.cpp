#include "tryon/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tryon/refiner.hpp"
#include "tryon/util.hpp"

namespace tryon {

using nlohmann::json;

void StagePlan::validate() const {
    if (stages.empty()) fail(ErrorKind::Config, "stage plan has no stages");
    int64_t prev_res = 0;
    for (size_t i = 0; i < stages.size(); i++) {
        const StageSpec& s = stages[i];
        if (s.name != "warmup_image" && s.name != "video_base" && s.name != "video_hires" &&
            s.name != "refiner")
            fail(ErrorKind::Config, "unknown stage name: " + s.name);
        if (s.is_refiner() && i + 1 != stages.size())
            fail(ErrorKind::Config, "refiner stage must be last");
        if (s.is_warmup()) {
            if (s.frames != 1) fail(ErrorKind::Config, "warmup_image stage must have frames == 1");
            if (s.mask_loss_weight <= 0.0)
                fail(ErrorKind::Config, "warmup_image stage must have mask_loss_weight > 0");
        }
        if (!s.is_refiner()) {
            if (s.height * s.width < prev_res)
                fail(ErrorKind::Config, "stage resolutions must be nondecreasing");
            prev_res = s.height * s.width;
        }
        if (s.height % 8 != 0 || s.width % 8 != 0)
            fail(ErrorKind::Config, "stage resolution must be divisible by 8");
        if (s.steps < 0 || s.batch_size < 1)
            fail(ErrorKind::Config, "stage steps/batch invalid");
        if (s.image_mix_ratio < 0.0 || s.image_mix_ratio > 1.0)
            fail(ErrorKind::Config, "image_mix_ratio must be in [0,1]");
    }
}

namespace {

json stage_to_json(const StageSpec& s) {
    json j;
    j["name"] = s.name;
    j["resolution"] = {s.height, s.width};
    j["frames"] = s.frames;
    j["steps"] = s.steps;
    j["batch_size"] = s.batch_size;
    j["lr"] = s.lr;
    j["image_mix_ratio"] = s.image_mix_ratio;
    json conds = json::array();
    if (s.conditions.text) conds.push_back("text");
    if (s.conditions.garment) conds.push_back("garment");
    if (s.conditions.motion) conds.push_back("motion");
    j["conditions"] = conds;
    j["mask_loss_weight"] = s.mask_loss_weight;
    j["dropout"] = {{"text", s.dropout.text},
                    {"garment", s.dropout.garment},
                    {"motion", s.dropout.motion}};
    return j;
}

StageSpec stage_from_json(const json& j) {
    StageSpec s;
    s.name = j.at("name").get<std::string>();
    s.height = j.at("resolution").at(0).get<int64_t>();
    s.width = j.at("resolution").at(1).get<int64_t>();
    s.frames = j.at("frames").get<int64_t>();
    s.steps = j.at("steps").get<int64_t>();
    s.batch_size = j.at("batch_size").get<int64_t>();
    s.lr = j.at("lr").get<double>();
    s.image_mix_ratio = j.value("image_mix_ratio", 0.0);
    if (j.contains("conditions")) {
        s.conditions = {false, false, false};
        for (const auto& c : j.at("conditions")) {
            std::string name = c.get<std::string>();
            if (name == "text") s.conditions.text = true;
            else if (name == "garment") s.conditions.garment = true;
            else if (name == "motion") s.conditions.motion = true;
            else fail(ErrorKind::Config, "unknown condition in stage plan: " + name);
        }
    }
    s.mask_loss_weight = j.value("mask_loss_weight", 0.0);
    if (j.contains("dropout")) {
        s.dropout.text = j.at("dropout").value("text", 0.0);
        s.dropout.garment = j.at("dropout").value("garment", 0.0);
        s.dropout.motion = j.at("dropout").value("motion", 0.0);
    }
    return s;
}

}  // namespace

std::string StagePlan::canonical_json() const {
    json arr = json::array();
    for (const auto& s : stages) arr.push_back(stage_to_json(s));
    return arr.dump();
}

int64_t StagePlan::main_step_budget() const {
    int64_t total = 0;
    for (const auto& s : stages)
        if (!s.is_refiner()) total += s.steps;
    return total;
}

const StageSpec* StagePlan::final_main_stage() const {
    const StageSpec* last = nullptr;
    for (const auto& s : stages)
        if (!s.is_refiner()) last = &s;
    return last;
}

const StageSpec* StagePlan::refiner_stage() const {
    for (const auto& s : stages)
        if (s.is_refiner()) return &s;
    return nullptr;
}

StagePlan plan_from_json_text(const std::string& text) {
    StagePlan plan;
    json arr;
    try {
        arr = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, std::string("bad stage plan json: ") + e.what());
    }
    for (const auto& sj : arr) plan.stages.push_back(stage_from_json(sj));
    plan.validate();
    return plan;
}

std::string config_hash_for(const ModelConfig& cfg, const StagePlan& plan) {
    return sha256_hex(cfg.canonical_json() + "|" + plan.canonical_json());
}

bool warmup_uses_reconstruction(const StageSpec& stage, int64_t step) {
    // first 30% of the warm-up teaches identity reconstruction
    return step < (stage.steps * 3 + 9) / 10;
}

double lr_at(const StageSpec& stage, int64_t step) {
    int64_t warm = (stage.steps * 5 + 99) / 100;
    if (warm > 0 && step < warm) return stage.lr * double(step + 1) / double(warm);
    return stage.lr;
}

double mask_weight_at(const StageSpec& stage, int64_t step) {
    if (stage.mask_loss_weight <= 0.0 || stage.steps == 0) return stage.mask_loss_weight;
    double frac = double(step) / double(stage.steps);
    return stage.mask_loss_weight * (1.0 - frac);
}

TrainContext make_train_context(const ModelConfig& cfg, const StagePlan& plan, uint64_t seed) {
    plan.validate();
    TrainContext ctx;
    ctx.model_config = cfg;
    ctx.plan = plan;
    ctx.config_hash = config_hash_for(cfg, plan);
    ctx.seed = seed;
    return ctx;
}

Checkpoint fresh_checkpoint(const TrainContext& ctx) {
    Checkpoint ckpt;
    ckpt.model = init_model<float>(ctx.model_config, ctx.seed);
    nn::ParamRegistry<float> reg = make_registry(ckpt.model);
    ckpt.opt.init_like(reg);
    ckpt.rng = Rng(derive_seed(ctx.seed, "train-stream"));
    ckpt.config_hash = ctx.config_hash;
    ckpt.stage = "init";
    return ckpt;
}

// ---------------------------------------------------------------------------
// sample assembly

namespace {

Image downscale_to(const Image& img, int64_t h, int64_t w) {
    if (img.dim(0) == h && img.dim(1) == w) return img;
    if (img.dim(0) % h != 0 || img.dim(1) % w != 0)
        fail(ErrorKind::Shape, "stage resolution must divide the dataset resolution");
    return downscale_area(img, img.dim(0) / h, img.dim(1) / w);
}

Tensor<float> video_head_downscaled(const VideoTensor& video, int64_t frames, int64_t h,
                                    int64_t w) {
    if (video.frames() < frames)
        fail(ErrorKind::InvalidArgument, "stage frame count exceeds dataset frames");
    Tensor<float> out({frames, h, w, 3});
    for (int64_t f = 0; f < frames; f++) {
        Image fr = downscale_to(video.frame(f), h, w);
        std::copy(fr.data.begin(), fr.data.end(), out.ptr() + f * h * w * 3);
    }
    return out;
}

}  // namespace

TrainSampleT<float> assemble_sample(const sprite::Dataset& ds, const sprite::TripletRef& ref,
                                    const StageSpec& stage, bool image_mode) {
    const auto& target = ds.scene(ref.target_scene).render;
    const auto& user = ds.scene(ref.user_scene).render;
    int64_t frames = (image_mode || stage.is_warmup()) ? 1 : stage.frames;

    TrainSampleT<float> s;
    s.x0 = video_head_downscaled(target.video, frames, stage.height, stage.width);
    s.bundle.user_image = downscale_to(user.video.frame(0), stage.height, stage.width);
    if (stage.conditions.text) s.bundle.text = ref.caption;
    else s.bundle.dropped.text = true;
    if (stage.conditions.garment) {
        // garment condition scale follows the stage/dataset ratio
        int64_t gh = sprite::kGarmentTexH * stage.height / ds.height;
        int64_t gw = sprite::kGarmentTexW * stage.width / ds.width;
        for (int gid : ref.garment_ids)
            s.bundle.garments.push_back(downscale_to(ds.garment(gid).texture, gh, gw));
    } else {
        s.bundle.dropped.garment = true;
    }
    bool want_motion = stage.conditions.motion && frames > 1;
    if (want_motion) {
        VideoTensor mref;
        mref.fps = target.skeleton_video.fps;
        mref.pixels = video_head_downscaled(target.skeleton_video, frames, stage.height,
                                            stage.width);
        s.bundle.motion_ref = std::move(mref);
    } else {
        s.bundle.dropped.motion = true;
    }
    if (stage.is_warmup()) {
        // union of target garment masks, max-pooled to the video-token grid
        int64_t gh = stage.height / 8, gw = stage.width / 8;
        int64_t fy = ds.height / gh, fx = ds.width / gw;
        Tensor<float> mask({gh * gw});
        for (int64_t y = 0; y < gh; y++)
            for (int64_t x = 0; x < gw; x++) {
                uint8_t on = 0;
                for (const auto& [gid, mv] : target.garment_masks) {
                    for (int64_t dy = 0; dy < fy && !on; dy++)
                        for (int64_t dx = 0; dx < fx && !on; dx++)
                            on = mv.at(0, y * fy + dy, x * fx + dx);
                    if (on) break;
                }
                mask.data[size_t(y * gw + x)] = float(on);
            }
        s.mask_gt = std::move(mask);
    }
    return s;
}

// ---------------------------------------------------------------------------
// run_stage

namespace {

struct Pools {
    std::vector<int> cross, recon;
};

Pools build_pools(const sprite::Dataset& ds) {
    Pools p;
    for (const auto& t : ds.triplets) {
        if (t.split != "train") continue;
        (t.reconstruction ? p.recon : p.cross).push_back(t.id);
    }
    return p;
}

// deterministic epoch shuffles derived from (seed, pool, epoch); the main
// rng stream is untouched so mid-epoch resume replays nothing
int draw_index(const std::vector<int>& pool, const std::string& pool_name, uint64_t seed,
               int64_t& cursor) {
    if (pool.empty()) fail(ErrorKind::InvalidArgument, "training pool is empty: " + pool_name);
    int64_t n = int64_t(pool.size());
    int64_t epoch = cursor / n, off = cursor % n;
    std::vector<int> order = pool;
    Rng shuffle_rng(derive_seed(seed, pool_name) ^ uint64_t(epoch) * 0x9e3779b97f4a7c15ull);
    shuffle_rng.shuffle(order);
    cursor++;
    return order[size_t(off)];
}

void log_record(const std::string& path, const json& j) {
    if (path.empty()) return;
    std::ofstream f(path, std::ios::app);
    f << j.dump() << "\n";
}

}  // namespace

Checkpoint run_stage(const TrainContext& ctx, const StageSpec& stage,
                     const sprite::Dataset& dataset, const Checkpoint& checkpoint_in) {
    if (checkpoint_in.config_hash != ctx.config_hash)
        fail(ErrorKind::Compatibility,
             "checkpoint was produced under a different config: " + checkpoint_in.config_hash +
                 " vs " + ctx.config_hash);
    Checkpoint ckpt = checkpoint_in;
    if (stage.steps == 0) {
        ckpt.stage = stage.name;
        ckpt.step = 0;
        return ckpt;
    }

    Pools pools = build_pools(dataset);
    nn::ParamRegistry<float> reg = make_registry(ckpt.model);
    Model<float> grads = zero_grads_like(ckpt.model);
    nn::ParamRegistry<float> greg = make_registry(grads);

    auto wall0 = std::chrono::steady_clock::now();
    for (int64_t step = 0; step < stage.steps; step++) {
        // batch selection
        std::vector<TrainSampleT<float>> batch;
        batch.reserve(size_t(stage.batch_size));
        if (stage.is_warmup()) {
            bool use_recon = warmup_uses_reconstruction(stage, step) && !pools.recon.empty();
            const auto& pool = use_recon ? pools.recon : pools.cross;
            const char* pname = use_recon ? "recon" : "cross";
            for (int64_t i = 0; i < stage.batch_size; i++) {
                int id = draw_index(pool, pname, ctx.seed, ckpt.cursors[pname]);
                batch.push_back(assemble_sample(dataset, dataset.triplets[size_t(id)], stage, true));
            }
        } else {
            auto video_source = [&]() {
                int id = draw_index(pools.cross, "cross", ctx.seed, ckpt.cursors["cross"]);
                return assemble_sample(dataset, dataset.triplets[size_t(id)], stage, false);
            };
            auto image_source = [&]() {
                int id = draw_index(pools.cross, "cross", ctx.seed, ckpt.cursors["cross"]);
                return assemble_sample(dataset, dataset.triplets[size_t(id)], stage, true);
            };
            batch = mix_image_video<TrainSampleT<float>>(video_source, image_source,
                                                         stage.batch_size,
                                                         stage.image_mix_ratio, ckpt.rng);
        }

        LossOptions opts;
        opts.dropout = stage.dropout;
        opts.mask_weight = stage.is_warmup() ? mask_weight_at(stage, step) : 0.0;

        for (auto& [name, t] : greg.entries) t->zero();
        double loss;
        try {
            loss = double(training_loss(ckpt.model, batch, ckpt.rng, opts, &grads));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Numeric && !ctx.last_good_dir.empty()) {
                Checkpoint last_good = ckpt;
                last_good.stage = stage.name;
                last_good.step = step;
                save_checkpoint(ctx.last_good_dir, last_good);
                fail(ErrorKind::Numeric, std::string(e.what()) + "; last good checkpoint at " +
                                             ctx.last_good_dir);
            }
            throw;
        }

        double lr = lr_at(stage, step);
        ckpt.opt.update(reg, greg, lr);

        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
        log_record(ctx.log_path, json{{"step", step},
                                      {"stage", stage.name},
                                      {"loss", loss},
                                      {"lr", lr},
                                      {"wallclock", wall}});
    }

    for (const auto& [name, t] : reg.entries)
        if (!t->all_finite())
            fail(ErrorKind::Numeric, "non-finite parameters after stage " + stage.name);

    ckpt.stage = stage.name;
    ckpt.step = stage.steps;
    return ckpt;
}

PlanResult run_plan(const TrainContext& ctx, const sprite::Dataset& dataset, TrainMode mode) {
    PlanResult result;
    if (mode == TrainMode::Direct) {
        const StageSpec* final_stage = ctx.plan.final_main_stage();
        if (!final_stage) fail(ErrorKind::Config, "plan has no main stage");
        StageSpec direct = *final_stage;
        direct.steps = ctx.plan.main_step_budget();
        Checkpoint ckpt = fresh_checkpoint(ctx);
        result.main = run_stage(ctx, direct, dataset, ckpt);
        result.stage_steps.emplace_back("direct:" + direct.name, direct.steps);
        return result;
    }
    Checkpoint ckpt = fresh_checkpoint(ctx);
    for (const auto& stage : ctx.plan.stages) {
        if (stage.is_refiner()) {
            result.refiner = train_refiner(ctx, dataset, stage, result.main);
            result.stage_steps.emplace_back(stage.name, stage.steps);
            continue;
        }
        ckpt = run_stage(ctx, stage, dataset, ckpt);
        result.main = ckpt;
        result.stage_steps.emplace_back(stage.name, stage.steps);
    }
    if (result.stage_steps.empty()) fail(ErrorKind::Config, "plan has no stages");
    return result;
}

}  // namespace tryon
