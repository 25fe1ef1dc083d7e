#include "tryon/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "tryon/image_io.hpp"
#include "tryon/judge.hpp"
#include "tryon/metrics.hpp"
#include "tryon/refiner.hpp"
#include "tryon/util.hpp"

namespace tryon {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kProjectVersion = "0.1.0";

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) fail(ErrorKind::Config, where + " must be a json object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            fail(ErrorKind::Config, "unknown key \"" + key + "\" in " + where);
}

json apply_overrides(json config, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos)
            fail(ErrorKind::Config, "--set expects key.path=value, got: " + ov);
        std::string path = ov.substr(0, eq), value = ov.substr(eq + 1);
        json* node = &config;
        size_t start = 0;
        std::vector<std::string> parts;
        while (true) {
            auto dot = path.find('.', start);
            parts.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        auto descend = [](json* n, const std::string& part) -> json* {
            if (n->is_array()) {
                size_t idx = 0;
                try {
                    idx = std::stoul(part);
                } catch (const std::exception&) {
                    fail(ErrorKind::Config, "--set: array index expected, got: " + part);
                }
                if (idx >= n->size()) fail(ErrorKind::Config, "--set: index out of range: " + part);
                return &(*n)[idx];
            }
            return &(*n)[part];
        };
        for (size_t i = 0; i + 1 < parts.size(); i++) node = descend(node, parts[i]);
        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::exception&) {
            parsed = value;  // plain string
        }
        if (node->is_array()) {
            *descend(node, parts.back()) = parsed;
        } else {
            (*node)[parts.back()] = parsed;
        }
    }
    return config;
}

}  // namespace

std::string RunConfig::config_hash() const {
    return config_hash_for(model, stages);
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, std::string("config is not valid json: ") + e.what());
    }
    j = apply_overrides(j, overrides);

    check_keys(j, "config", {"seed", "model", "dataset", "stages", "sample", "judge"});
    RunConfig cfg;
    cfg.seed = j.value("seed", uint64_t(7));

    const json& mj = j.at("model");
    check_keys(mj, "model",
               {"width", "depth", "heads", "patch", "adapter_depth", "max_text_len", "vocab_file"});
    cfg.model.width = mj.at("width").get<int64_t>();
    cfg.model.depth = mj.at("depth").get<int>();
    cfg.model.heads = mj.at("heads").get<int>();
    if (mj.contains("patch")) {
        cfg.model.patch.pt = mj.at("patch").at(0).get<int64_t>();
        cfg.model.patch.ph = mj.at("patch").at(1).get<int64_t>();
        cfg.model.patch.pw = mj.at("patch").at(2).get<int64_t>();
    }
    cfg.model.adapter_depth = mj.value("adapter_depth", 1);
    cfg.model.max_text_len = mj.value("max_text_len", int64_t(16));
    cfg.vocab_file = mj.value("vocab_file", std::string());
    cfg.model.vocab = cfg.vocab_file.empty() ? builtin_vocabulary()
                                             : Vocabulary::load(cfg.vocab_file);
    if (cfg.model.width % cfg.model.heads != 0)
        fail(ErrorKind::Config, "model width must be divisible by heads");

    if (j.contains("dataset")) {
        const json& dj = j.at("dataset");
        check_keys(dj, "dataset",
                   {"avatars", "garments_per_type", "train_motions", "eval_motions",
                    "sets_per_avatar", "eval_sets_per_avatar", "frames", "fps", "resolution",
                    "include_reconstruction", "extra_holdout_fraction", "highfps"});
        DatasetConfig& d = cfg.dataset;
        d.avatars = dj.value("avatars", d.avatars);
        d.garments_per_type = dj.value("garments_per_type", d.garments_per_type);
        d.train_motions = dj.value("train_motions", d.train_motions);
        d.eval_motions = dj.value("eval_motions", d.eval_motions);
        d.sets_per_avatar = dj.value("sets_per_avatar", d.sets_per_avatar);
        d.eval_sets_per_avatar = dj.value("eval_sets_per_avatar", d.eval_sets_per_avatar);
        d.frames = dj.value("frames", d.frames);
        d.fps = dj.value("fps", d.fps);
        if (dj.contains("resolution")) {
            d.height = dj.at("resolution").at(0).get<int64_t>();
            d.width = dj.at("resolution").at(1).get<int64_t>();
        }
        d.include_reconstruction = dj.value("include_reconstruction", d.include_reconstruction);
        d.extra_holdout_fraction = dj.value("extra_holdout_fraction", d.extra_holdout_fraction);
        d.highfps = dj.value("highfps", d.highfps);
        if (d.avatars < 1 || d.garments_per_type < 1 || d.train_motions < 1)
            fail(ErrorKind::Config, "dataset counts must be >= 1");
        if (d.height % 8 != 0 || d.width % 8 != 0)
            fail(ErrorKind::Config, "dataset resolution must be divisible by 8");
        if (d.extra_holdout_fraction < 0.0 || d.extra_holdout_fraction > 1.0)
            fail(ErrorKind::Config, "extra_holdout_fraction must be in [0,1]");
    }

    if (!j.contains("stages")) fail(ErrorKind::Config, "config is missing \"stages\"");
    cfg.stages = plan_from_json_text(j.at("stages").dump());

    if (j.contains("sample")) {
        const json& sj = j.at("sample");
        check_keys(sj, "sample", {"steps", "guidance"});
        cfg.sample.steps = sj.value("steps", cfg.sample.steps);
        cfg.sample.guidance = sj.value("guidance", cfg.sample.guidance);
        if (cfg.sample.steps < 1) fail(ErrorKind::Config, "sample.steps must be >= 1");
        if (cfg.sample.guidance < 0) fail(ErrorKind::Config, "sample.guidance must be >= 0");
    }
    if (j.contains("judge")) {
        const json& qj = j.at("judge");
        check_keys(qj, "judge", {"client", "n", "rubric_file", "endpoint", "model", "api_key_env"});
        cfg.judge.client = qj.value("client", cfg.judge.client);
        cfg.judge.n = qj.value("n", cfg.judge.n);
        cfg.judge.rubric_file = qj.value("rubric_file", cfg.judge.rubric_file);
        cfg.judge.endpoint = qj.value("endpoint", cfg.judge.endpoint);
        cfg.judge.model = qj.value("model", cfg.judge.model);
        cfg.judge.api_key_env = qj.value("api_key_env", cfg.judge.api_key_env);
        if (cfg.judge.client != "stub" && cfg.judge.client != "http")
            fail(ErrorKind::Config, "judge.client must be \"stub\" or \"http\"");
        if (cfg.judge.n < 1) fail(ErrorKind::Config, "judge.n must be >= 1");
    }
    cfg.raw_json = j.dump(2);
    return cfg;
}

// ---------------------------------------------------------------------------
// dataset builder

sprite::Dataset build_sprite_dataset(const RunConfig& cfg, uint64_t seed) {
    using namespace sprite;
    const DatasetConfig& dc = cfg.dataset;
    int total_motions = dc.train_motions + dc.eval_motions;
    Corpus corpus = gen_assets(seed, {dc.avatars, dc.garments_per_type, total_motions},
                               dc.frames, dc.fps);

    // garment sets: top x bottom combinations, then one-pieces
    std::vector<std::vector<int>> all_sets;
    std::vector<int> tops, bottoms, onepieces;
    for (const auto& g : corpus.garments) {
        if (g.garment_type == GarmentType::Top) tops.push_back(g.id);
        if (g.garment_type == GarmentType::Bottom) bottoms.push_back(g.id);
        if (g.garment_type == GarmentType::OnePiece) onepieces.push_back(g.id);
    }
    for (int t : tops)
        for (int b : bottoms) all_sets.push_back({t, b});
    for (int o : onepieces) all_sets.push_back({o});

    Dataset ds;
    ds.version = kDatasetVersion;
    ds.seed = seed;
    ds.height = dc.height;
    ds.width = dc.width;
    ds.fps = dc.fps;
    ds.corpus = corpus;

    int scene_id = 0;
    struct SetScenes {
        std::vector<int> garments;
        int user_scene = -1, target_scene = -1;
        bool eval_set = false;
        int target_motion = -1;
    };
    std::vector<std::vector<SetScenes>> per_avatar(size_t(dc.avatars));

    int eval_counter = 0;
    for (int av = 0; av < dc.avatars; av++) {
        // deterministic per-avatar set selection and eval designation
        std::vector<int> order(all_sets.size());
        for (size_t i = 0; i < order.size(); i++) order[i] = int(i);
        Rng set_rng(derive_seed(derive_seed(seed, "sets"), uint64_t(av)));
        set_rng.shuffle(order);
        int n_sets = std::min<int>(dc.sets_per_avatar, int(all_sets.size()));
        for (int k = 0; k < n_sets; k++) {
            SetScenes ss;
            ss.garments = all_sets[size_t(order[size_t(k)])];
            ss.eval_set = k >= n_sets - dc.eval_sets_per_avatar;
            per_avatar[size_t(av)].push_back(std::move(ss));
        }
    }

    auto garment_ptr = [&](int id) -> const GarmentAsset* {
        for (const auto& g : corpus.garments)
            if (g.id == id) return &g;
        fail(ErrorKind::InvalidArgument, "builder: unknown garment id");
    };

    for (int av = 0; av < dc.avatars; av++) {
        const AvatarSpec& avatar = corpus.avatars[size_t(av)];
        for (size_t si = 0; si < per_avatar[size_t(av)].size(); si++) {
            SetScenes& ss = per_avatar[size_t(av)][si];
            std::vector<const GarmentAsset*> gs;
            for (int id : ss.garments) gs.push_back(garment_ptr(id));

            // user-source scene: always a training motion
            int user_motion = int(derive_seed(derive_seed(seed, "user-motion"), uint64_t(av), si) %
                                  uint64_t(dc.train_motions));
            // target scene: eval sets get reserved eval motions
            if (ss.eval_set && dc.eval_motions > 0) {
                ss.target_motion = dc.train_motions + (eval_counter % dc.eval_motions);
                eval_counter++;
            } else {
                ss.target_motion = int(derive_seed(derive_seed(seed, "target-motion"), uint64_t(av), si) %
                                       uint64_t(dc.train_motions));
            }

            SceneEntry user_entry;
            user_entry.render = render_scene(avatar, gs, corpus.motions[size_t(user_motion)],
                                             dc.height, dc.width, dc.fps);
            user_entry.render.id = scene_id++;
            ss.user_scene = user_entry.render.id;
            ds.scenes.push_back(std::move(user_entry));

            SceneEntry target_entry;
            target_entry.render = render_scene(avatar, gs, corpus.motions[size_t(ss.target_motion)],
                                               dc.height, dc.width, dc.fps);
            target_entry.render.id = scene_id++;
            ss.target_scene = target_entry.render.id;
            ds.scenes.push_back(std::move(target_entry));

            if (dc.highfps && !ss.eval_set) {
                SceneEntry hi;
                hi.render = render_scene_highfps(avatar, gs, corpus.motions[size_t(ss.target_motion)],
                                                 dc.height, dc.width);
                hi.render.id = scene_id++;
                hi.highfps = true;
                hi.lowfps_scene = ss.target_scene;
                ds.scenes.push_back(std::move(hi));
            }
        }
    }

    // ordered cross pairs + optional reconstruction pairs
    int triplet_id = 0;
    for (int av = 0; av < dc.avatars; av++) {
        auto& sets = per_avatar[size_t(av)];
        for (size_t ia = 0; ia < sets.size(); ia++)
            for (size_t ib = 0; ib < sets.size(); ib++) {
                if (ia == ib && !dc.include_reconstruction) continue;
                TripletRef ref;
                ref.id = triplet_id++;
                ref.avatar_id = av;
                ref.user_scene = sets[ia].user_scene;
                ref.target_scene = sets[ib].target_scene;
                ref.garment_ids = ds.scene(sets[ib].target_scene).render.garment_ids;
                ref.reconstruction = (ia == ib);
                std::vector<const GarmentAsset*> gs;
                for (int id : ref.garment_ids) gs.push_back(garment_ptr(id));
                ref.caption = caption_for(gs, corpus.motions[size_t(sets[ib].target_motion)]);
                if (sets[ib].eval_set) {
                    ref.split = "held_out";
                } else if (!ref.reconstruction &&
                           Rng(derive_seed(derive_seed(seed, "holdout"), uint64_t(ref.id))).uniform() <
                               dc.extra_holdout_fraction) {
                    ref.split = "held_out";
                } else {
                    ref.split = "train";
                }
                ds.triplets.push_back(std::move(ref));
            }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// subcommand helpers

namespace {

void print_repro_header(const std::string& command, const RunConfig& cfg, uint64_t seed) {
    json j;
    j["command"] = command;
    j["config_hash"] = cfg.config_hash();
    j["seed"] = seed;
    j["version"] = kProjectVersion;
    std::cout << "[repro] " << j.dump() << "\n";
}

void write_video_dir(const std::string& dir, const VideoTensor& video) {
    for (int64_t f = 0; f < video.frames(); f++) {
        char name[32];
        snprintf(name, sizeof(name), "%05d.png", int(f));
        write_png_rgb(dir + "/frames/" + name, video.frame(f));
    }
    json vj;
    vj["fps"] = video.fps;
    vj["shape"] = {video.frames(), video.height(), video.width(), video.channels()};
    write_text_file(dir + "/video.json", vj.dump(2) + "\n");
}

VideoTensor read_video_dir(const std::string& dir) {
    json vj = json::parse(read_text_file(dir + "/video.json"));
    int64_t frames = vj.at("shape").at(0).get<int64_t>();
    double fps = vj.at("fps").get<double>();
    std::vector<Image> imgs;
    for (int64_t f = 0; f < frames; f++) {
        char name[32];
        snprintf(name, sizeof(name), "%05d.png", int(f));
        imgs.push_back(read_png_rgb(dir + "/frames/" + name));
    }
    return video_from_frames(imgs, fps);
}

std::string video_dir_hash(const std::string& dir) {
    json vj = json::parse(read_text_file(dir + "/video.json"));
    int64_t frames = vj.at("shape").at(0).get<int64_t>();
    Sha256 h;
    for (int64_t f = 0; f < frames; f++) {
        char name[32];
        snprintf(name, sizeof(name), "%05d.png", int(f));
        auto bytes = read_binary_file(dir + "/frames/" + name);
        h.update(bytes.data(), bytes.size());
    }
    return h.hex_digest();
}

CondBundle bundle_for_triplet(const sprite::Dataset& ds, const sprite::TripletRef& ref,
                              bool with_motion, bool with_text) {
    CondBundle b;
    const auto& user = ds.scene(ref.user_scene).render;
    const auto& target = ds.scene(ref.target_scene).render;
    b.user_image = user.video.frame(0);
    for (int gid : ref.garment_ids) b.garments.push_back(ds.garment(gid).texture);
    if (with_text) b.text = ref.caption;
    else b.dropped.text = true;
    if (with_motion) b.motion_ref = target.skeleton_video;
    else b.dropped.motion = true;
    return b;
}

const sprite::TripletRef& triplet_by_id(const sprite::Dataset& ds, int id) {
    for (const auto& t : ds.triplets)
        if (t.id == id) return t;
    fail(ErrorKind::InvalidArgument, "no such triplet id: " + std::to_string(id));
}

Rubric rubric_for(const JudgeSettings& js) {
    return js.rubric_file.empty() ? Rubric::builtin() : Rubric::load(js.rubric_file);
}

int cmd_gen_data(const RunConfig& cfg, uint64_t seed, const std::string& out) {
    print_repro_header("gen-data", cfg, seed);
    sprite::Dataset ds = build_sprite_dataset(cfg, seed);
    sprite::write_dataset(ds, out);
    std::string hash = sprite::dataset_content_hash(out);
    json summary;
    summary["path"] = out;
    summary["content_hash"] = hash;
    summary["scenes"] = ds.scenes.size();
    summary["triplets"] = ds.triplets.size();
    int64_t held = 0;
    for (const auto& t : ds.triplets) held += t.split == "held_out";
    summary["held_out"] = held;
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& dataset_path, const std::string& mode,
              const std::string& out) {
    print_repro_header("train", cfg, cfg.seed);
    sprite::Dataset ds = sprite::load_dataset(dataset_path);
    TrainContext ctx = make_train_context(cfg.model, cfg.stages, cfg.seed);
    fs::create_directories(out);
    ctx.log_path = out + "/train_log.ndjson";
    ctx.last_good_dir = out + "/checkpoints/last_good";
    TrainMode tm = mode == "direct" ? TrainMode::Direct : TrainMode::Staged;

    PlanResult result = run_plan(ctx, ds, tm);
    save_checkpoint(out + "/checkpoints/final", result.main);
    if (result.refiner) save_checkpoint(out + "/checkpoints/refiner", *result.refiner);

    json manifest;
    manifest["config_hash"] = ctx.config_hash;
    manifest["seed"] = cfg.seed;
    manifest["mode"] = mode;
    manifest["dataset"] = dataset_path;
    json boundaries = json::array();
    for (const auto& [name, steps] : result.stage_steps)
        boundaries.push_back({{"stage", name}, {"steps", steps}});
    manifest["stages"] = boundaries;
    manifest["config"] = json::parse(cfg.raw_json);
    write_text_file(out + "/manifest.json", manifest.dump(2) + "\n");
    std::cout << "final checkpoint: " << out << "/checkpoints/final\n";
    return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& ckpt_path,
               const std::string& dataset_path, int triplet_id, uint64_t seed, int steps,
               double guidance, const std::string& out) {
    print_repro_header("sample", cfg, seed);
    sprite::Dataset ds = sprite::load_dataset(dataset_path);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    const auto& ref = triplet_by_id(ds, triplet_id);
    const auto& target = ds.scene(ref.target_scene).render;

    CondBundle bundle = bundle_for_triplet(ds, ref, true, true);
    SampleConfig sc;
    sc.steps = steps > 0 ? steps : cfg.sample.steps;
    sc.guidance = guidance >= 0 ? guidance : cfg.sample.guidance;
    sc.seed = seed;
    sc.frames = target.video.frames();
    sc.height = ds.height;
    sc.width = ds.width;
    VideoTensor video = sample(ckpt.model, bundle, sc, nullptr, ds.fps);
    quantize_u8_inplace(video);

    fs::create_directories(out);
    write_video_dir(out, video);
    json manifest;
    manifest["config_hash"] = cfg.config_hash();
    manifest["checkpoint"] = ckpt_path;
    manifest["dataset"] = dataset_path;
    manifest["triplet"] = triplet_id;
    manifest["seed"] = seed;
    manifest["steps"] = sc.steps;
    manifest["guidance"] = sc.guidance;
    manifest["content_hash"] = "";
    write_text_file(out + "/manifest.json", manifest.dump(2) + "\n");
    std::string hash = video_dir_hash(out);
    manifest["content_hash"] = hash;
    write_text_file(out + "/manifest.json", manifest.dump(2) + "\n");
    std::cout << json{{"out", out}, {"content_hash", hash}}.dump() << "\n";
    return 0;
}

int cmd_refine(const RunConfig& cfg, const std::string& ckpt_path,
               const std::string& dataset_path, const std::string& video_dir, int triplet_id,
               uint64_t seed, int steps, const std::string& out) {
    print_repro_header("refine", cfg, seed);
    sprite::Dataset ds = sprite::load_dataset(dataset_path);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    const auto& ref = triplet_by_id(ds, triplet_id);
    VideoTensor low = read_video_dir(video_dir);

    CondBundle bundle = bundle_for_triplet(ds, ref, false, true);
    RefinerConfig rc;
    rc.sample_steps = steps > 0 ? steps : cfg.sample.steps;
    rc.guidance = cfg.sample.guidance;
    rc.seed = seed;
    VideoTensor high = refine(low, bundle, ckpt.model, rc);
    quantize_u8_inplace(high);

    fs::create_directories(out);
    write_video_dir(out, high);
    json manifest;
    manifest["config_hash"] = cfg.config_hash();
    manifest["checkpoint"] = ckpt_path;
    manifest["source_video"] = video_dir;
    manifest["triplet"] = triplet_id;
    manifest["seed"] = seed;
    manifest["content_hash"] = video_dir_hash(out);
    write_text_file(out + "/manifest.json", manifest.dump(2) + "\n");
    std::cout << json{{"out", out}, {"frames", high.frames()}}.dump() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& dataset_path,
             const std::vector<std::string>& runs, const std::string& out) {
    print_repro_header("eval", cfg, cfg.seed);
    sprite::Dataset ds = sprite::load_dataset(dataset_path);
    json per_sample = json::array();
    std::vector<std::vector<double>> feats_gen, feats_gt;
    double sum_psnr = 0, sum_ssim = 0, sum_motion = 0, sum_fid_n = 0;
    int motion_n = 0;
    double sum_garment = 0;
    int garment_n = 0;

    for (const auto& run : runs) {
        json manifest = json::parse(read_text_file(run + "/manifest.json"));
        int triplet_id = manifest.at("triplet").get<int>();
        const auto& ref = triplet_by_id(ds, triplet_id);
        const auto& target = ds.scene(ref.target_scene).render;
        VideoTensor gen = read_video_dir(run);
        if (gen.frames() != target.video.frames() || gen.height() != target.video.height())
            fail(ErrorKind::Shape, "generated/target shape mismatch for run " + run);

        json rec;
        rec["run"] = run;
        rec["triplet"] = triplet_id;
        rec["split"] = ref.split;
        double p = psnr(gen, target.video);
        double s = ssim(gen, target.video);
        rec["psnr"] = p;
        rec["ssim"] = s;
        sum_psnr += p;
        sum_ssim += s;

        const auto& avatar = ds.avatar(ref.avatar_id);
        try {
            MotionErrorReport mr = motion_error(gen, target.joints, avatar.joint_marker_colors);
            rec["motion_error_px"] = mr.mean_pixel_error;
            rec["motion_missed"] = mr.missed;
            sum_motion += mr.mean_pixel_error;
            motion_n++;
        } catch (const Error& e) {
            rec["motion_error_px"] = nullptr;
            rec["motion_detect_failure"] = e.what();
        }

        json garments = json::array();
        for (int gid : ref.garment_ids) {
            const auto* mask = target.mask_for(gid);
            if (!mask) continue;
            double score = garment_fidelity(gen, ds.garment(gid), *mask);
            garments.push_back({{"garment", gid}, {"fidelity", score}});
            sum_garment += score;
            garment_n++;
        }
        rec["garment_fidelity"] = garments;

        auto fg = featurize(gen);
        auto ft = featurize(target.video);
        feats_gen.insert(feats_gen.end(), fg.begin(), fg.end());
        feats_gt.insert(feats_gt.end(), ft.begin(), ft.end());
        sum_fid_n += 1;
        per_sample.push_back(std::move(rec));
    }

    json report;
    report["per_sample"] = per_sample;
    json agg;
    int n = int(runs.size());
    if (n > 0) {
        agg["mean_psnr"] = sum_psnr / n;
        agg["mean_ssim"] = sum_ssim / n;
        if (motion_n > 0) agg["mean_motion_error_px"] = sum_motion / motion_n;
        if (garment_n > 0) agg["mean_garment_fidelity"] = sum_garment / garment_n;
        if (feats_gen.size() >= 2 && feats_gt.size() >= 2)
            agg["fid"] = fid(feats_gen, feats_gt);
        agg["runs"] = n;
    }
    report["aggregate"] = agg;
    write_text_file(out, report.dump(2) + "\n");
    std::cout << agg.dump(2) << "\n";
    return 0;
}

int cmd_judge(const RunConfig& cfg, const std::string& dataset_path, const std::string& run,
              int n_override, const std::string& client_override, const std::string& out) {
    print_repro_header("judge", cfg, cfg.seed);
    sprite::Dataset ds = sprite::load_dataset(dataset_path);
    json manifest = json::parse(read_text_file(run + "/manifest.json"));
    const auto& ref = triplet_by_id(ds, manifest.at("triplet").get<int>());
    VideoTensor video = read_video_dir(run);

    GradeRequestContext ctx;
    ctx.user_image = ds.scene(ref.user_scene).render.video.frame(0);
    for (int gid : ref.garment_ids) ctx.garments.push_back(ds.garment(gid).texture);
    ctx.caption = ref.caption;

    JudgeSettings js = cfg.judge;
    if (!client_override.empty()) js.client = client_override;
    int n = n_override > 0 ? n_override : js.n;
    Rubric rubric = rubric_for(js);

    std::unique_ptr<JudgeClient> client;
    if (js.client == "stub") {
        client = std::make_unique<StubJudgeClient>(cfg.seed);
    } else {
        HttpJudgeConfig hc;
        hc.endpoint_url = js.endpoint;
        hc.model = js.model;
        hc.api_key_env = js.api_key_env;
        client = std::make_unique<HttpJudgeClient>(hc);
    }
    GradeReport report = grade_video(video, ctx, rubric, n, *client);
    std::string path = out.empty() ? run + "/grades.json" : out;
    write_text_file(path, report.to_json() + "\n");
    json brief;
    for (int a = 0; a < kNumAspects; a++) brief[kAspectNames[size_t(a)]] = report.mean[size_t(a)];
    std::cout << brief.dump(2) << "\n";
    return 0;
}

int cmd_report(const std::string& eval_json, const std::string& out_dir) {
    json report = json::parse(read_text_file(eval_json));
    fs::create_directories(out_dir);
    json summary;
    summary["aggregate"] = report.at("aggregate");
    summary["samples"] = report.at("per_sample").size();
    write_text_file(out_dir + "/summary.json", summary.dump(2) + "\n");

    std::string csv = "run,triplet,split,psnr,ssim,motion_error_px,mean_garment_fidelity\n";
    for (const auto& rec : report.at("per_sample")) {
        double gf = 0;
        int gn = 0;
        if (rec.contains("garment_fidelity"))
            for (const auto& g : rec.at("garment_fidelity")) {
                gf += g.at("fidelity").get<double>();
                gn++;
            }
        csv += rec.at("run").get<std::string>() + "," +
               std::to_string(rec.at("triplet").get<int>()) + "," +
               rec.at("split").get<std::string>() + "," +
               std::to_string(rec.at("psnr").get<double>()) + "," +
               std::to_string(rec.at("ssim").get<double>()) + ",";
        csv += rec.at("motion_error_px").is_null()
                   ? "nan"
                   : std::to_string(rec.at("motion_error_px").get<double>());
        csv += "," + (gn ? std::to_string(gf / gn) : std::string("nan")) + "\n";
    }
    write_text_file(out_dir + "/per_sample.csv", csv);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& argv) {
    std::vector<const char*> ptrs;
    ptrs.push_back("tryon");
    for (const auto& a : argv) ptrs.push_back(a.c_str());
    return run_command(int(ptrs.size()), ptrs.data());
}

int run_command(int argc, const char* const* argv) {
    set_blas_threads(1);
    CLI::App app{"sprite-world try-on video diffusion pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "run configuration json")->required();
    app.add_option("--set", overrides, "override config values: key.path=value");

    auto* gen = app.add_subcommand("gen-data", "generate the sprite dataset");
    uint64_t gen_seed = 0;
    bool gen_seed_set = false;
    std::string gen_out = "runs/data";
    gen->add_option("--seed", gen_seed, "dataset seed (default: config seed)")
        ->each([&](const std::string&) { gen_seed_set = true; });
    gen->add_option("--out", gen_out, "output dataset directory");

    auto* train = app.add_subcommand("train", "run the training plan");
    std::string train_dataset, train_mode = "staged", train_out = "runs/train";
    train->add_option("--dataset", train_dataset, "dataset directory")->required();
    train->add_option("--mode", train_mode, "staged|direct")
        ->check(CLI::IsMember({"staged", "direct"}));
    train->add_option("--out", train_out, "run directory");

    auto* sample_cmd = app.add_subcommand("sample", "generate a video for one triplet");
    std::string sample_ckpt, sample_dataset, sample_out = "runs/sample";
    int sample_triplet = -1, sample_steps = -1;
    double sample_guidance = -1;
    uint64_t sample_seed = 0;
    sample_cmd->add_option("--checkpoint", sample_ckpt, "checkpoint directory")->required();
    sample_cmd->add_option("--dataset", sample_dataset, "dataset directory")->required();
    sample_cmd->add_option("--triplet", sample_triplet, "triplet id")->required();
    sample_cmd->add_option("--seed", sample_seed, "sampling seed");
    sample_cmd->add_option("--steps", sample_steps, "euler steps");
    sample_cmd->add_option("--guidance", sample_guidance, "guidance scale");
    sample_cmd->add_option("--out", sample_out, "output directory");

    auto* refine_cmd = app.add_subcommand("refine", "3x frame-rate refinement");
    std::string refine_ckpt, refine_dataset, refine_video, refine_out = "runs/refined";
    int refine_triplet = -1, refine_steps = -1;
    uint64_t refine_seed = 0;
    refine_cmd->add_option("--checkpoint", refine_ckpt, "refiner checkpoint")->required();
    refine_cmd->add_option("--dataset", refine_dataset, "dataset directory")->required();
    refine_cmd->add_option("--video", refine_video, "low-fps video run directory")->required();
    refine_cmd->add_option("--triplet", refine_triplet, "triplet id")->required();
    refine_cmd->add_option("--seed", refine_seed, "refiner seed");
    refine_cmd->add_option("--steps", refine_steps, "euler steps per chunk");
    refine_cmd->add_option("--out", refine_out, "output directory");

    auto* eval_cmd = app.add_subcommand("eval", "metrics against ground truth");
    std::string eval_dataset, eval_out = "runs/metrics.json";
    std::vector<std::string> eval_runs;
    eval_cmd->add_option("--dataset", eval_dataset, "dataset directory")->required();
    eval_cmd->add_option("--run", eval_runs, "sample run directory (repeatable)")->required();
    eval_cmd->add_option("--out", eval_out, "metrics json path");

    auto* judge_cmd = app.add_subcommand("judge", "LLM-rubric grading");
    std::string judge_dataset, judge_run, judge_out, judge_client;
    int judge_n = -1;
    judge_cmd->add_option("--dataset", judge_dataset, "dataset directory")->required();
    judge_cmd->add_option("--run", judge_run, "sample run directory")->required();
    judge_cmd->add_option("--n", judge_n, "gradings per video");
    judge_cmd->add_option("--client", judge_client, "stub|http");
    judge_cmd->add_option("--out", judge_out, "grades json path");

    auto* report_cmd = app.add_subcommand("report", "summarize an eval");
    std::string report_eval, report_out = "runs/report";
    report_cmd->add_option("--eval", report_eval, "metrics json from eval")->required();
    report_cmd->add_option("--out", report_out, "report directory");

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = load_run_config(config_path, overrides);
        if (gen->parsed())
            return cmd_gen_data(cfg, gen_seed_set ? gen_seed : cfg.seed, gen_out);
        if (train->parsed()) return cmd_train(cfg, train_dataset, train_mode, train_out);
        if (sample_cmd->parsed())
            return cmd_sample(cfg, sample_ckpt, sample_dataset, sample_triplet, sample_seed,
                              sample_steps, sample_guidance, sample_out);
        if (refine_cmd->parsed())
            return cmd_refine(cfg, refine_ckpt, refine_dataset, refine_video, refine_triplet,
                              refine_seed, refine_steps, refine_out);
        if (eval_cmd->parsed()) return cmd_eval(cfg, eval_dataset, eval_runs, eval_out);
        if (judge_cmd->parsed())
            return cmd_judge(cfg, judge_dataset, judge_run, judge_n, judge_client, judge_out);
        if (report_cmd->parsed()) return cmd_report(report_eval, report_out);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error (" << error_kind_name(e.kind()) << "): " << e.what() << "\n";
        return e.kind() == ErrorKind::Config ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace tryon
