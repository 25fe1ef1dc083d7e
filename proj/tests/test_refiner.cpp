#include <doctest.h>

#include "tryon/cli.hpp"
#include "tryon/refiner.hpp"
#include "tryon/util.hpp"

using namespace tryon;

namespace {

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.width = 16;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.adapter_depth = 1;
    cfg.vocab = builtin_vocabulary();
    return cfg;
}

Model<float> random_model(uint64_t seed) {
    Model<float> m = init_model<float>(tiny_model(), seed);
    nn::ParamRegistry<float> reg = make_registry(m);
    Rng rng(seed ^ 0xabcd);
    for (auto& [name, t] : reg.entries)
        for (auto& v : t->data) v += float(rng.normal() * 0.04);
    return m;
}

VideoTensor low_video(int64_t frames, uint64_t seed) {
    VideoTensor v(frames, 16, 16, 3, 8.0);
    Rng rng(seed);
    for (auto& p : v.pixels.data) p = float(rng.uniform());
    quantize_u8_inplace(v);
    return v;
}

CondBundle small_bundle() {
    CondBundle b;
    b.user_image = Image({16, 16, 3});
    b.user_image.fill(0.4f);
    Image g({16, 16, 3});
    g.fill(0.8f);
    b.garments = {g};
    b.dropped.text = true;
    b.dropped.motion = true;
    return b;
}

const sprite::Dataset& refiner_dataset() {
    static sprite::Dataset ds = [] {
        RunConfig rc;
        rc.model = tiny_model();
        rc.dataset.avatars = 1;
        rc.dataset.garments_per_type = 1;
        rc.dataset.train_motions = 2;
        rc.dataset.eval_motions = 1;
        rc.dataset.sets_per_avatar = 3;
        rc.dataset.eval_sets_per_avatar = 1;
        rc.dataset.frames = 5;
        rc.dataset.height = 32;
        rc.dataset.width = 48;
        rc.dataset.extra_holdout_fraction = 0.0;
        rc.dataset.highfps = true;
        return build_sprite_dataset(rc, 321);
    }();
    return ds;
}

}  // namespace

TEST_SUITE("refiner") {
    TEST_CASE("frame count law and keyframe preservation") {
        Model<float> model = random_model(3);
        RefinerConfig cfg;
        cfg.sample_steps = 2;
        cfg.seed = 5;

        VideoTensor nine = low_video(9, 11);
        CondBundle bundle = small_bundle();
        VideoTensor out = refine(nine, bundle, model, cfg);
        CHECK(out.frames() == 25);  // 3*9 - 2
        CHECK(out.fps == doctest::Approx(24.0));
        for (int64_t i = 0; i < 9; i++) {
            Image key = nine.frame(i);
            Image got = out.frame(3 * i);
            CHECK(key.data == got.data);  // bit-exact copies
        }

        VideoTensor one = low_video(1, 13);
        CHECK_THROWS_AS((void)refine(one, bundle, model, cfg), Error);
    }

    TEST_CASE("41 low-fps frames refine to 121") {
        Model<float> model = init_model<float>(tiny_model(), 7);  // zero-init: fast
        RefinerConfig cfg;
        cfg.sample_steps = 1;
        VideoTensor low = low_video(41, 17);
        VideoTensor out = refine(low, small_bundle(), model, cfg);
        CHECK(out.frames() == 121);
    }

    TEST_CASE("autoregressive determinism and the prefix property") {
        Model<float> model = random_model(19);
        RefinerConfig cfg;
        cfg.sample_steps = 2;
        cfg.seed = 23;
        VideoTensor low = low_video(6, 29);
        CondBundle bundle = small_bundle();

        VideoTensor full1 = refine(low, bundle, model, cfg);
        VideoTensor full2 = refine(low, bundle, model, cfg);
        CHECK(full1.pixels.data == full2.pixels.data);

        // refining only the first k keyframes reproduces the full run's prefix
        for (int64_t k : {2, 4}) {
            VideoTensor head(k, 16, 16, 3, 8.0);
            for (int64_t i = 0; i < k; i++) head.set_frame(i, low.frame(i));
            VideoTensor partial = refine(head, bundle, model, cfg);
            CHECK(partial.frames() == 3 * k - 2);
            for (int64_t f = 0; f < partial.frames(); f++)
                CHECK(partial.frame(f).data == full1.frame(f).data);
        }
    }

    TEST_CASE("the motion condition is unused") {
        Model<float> model = random_model(31);
        RefinerConfig cfg;
        cfg.sample_steps = 2;
        cfg.seed = 37;
        VideoTensor low = low_video(4, 41);

        CondBundle with_motion = small_bundle();
        VideoTensor mref(4, 16, 16, 3, 8.0);
        Rng rng(43);
        for (auto& p : mref.pixels.data) p = float(rng.uniform());
        with_motion.dropped.motion = false;
        with_motion.motion_ref = mref;

        CondBundle without = small_bundle();
        VideoTensor a = refine(low, with_motion, model, cfg);
        VideoTensor b = refine(low, without, model, cfg);
        CHECK(a.pixels.data == b.pixels.data);
    }

    TEST_CASE("refiner chunks assemble with ground-truth context") {
        const sprite::Dataset& ds = refiner_dataset();
        StageSpec stage;
        stage.name = "refiner";
        stage.height = 32;
        stage.width = 48;
        stage.frames = 2;
        stage.steps = 0;
        stage.batch_size = 1;

        const sprite::TripletRef* ref = nullptr;
        const sprite::SceneEntry* high = nullptr;
        for (const auto& t : ds.triplets) {
            if (t.split != "train" || t.reconstruction) continue;
            if (const auto* h = ds.highfps_twin(t.target_scene)) {
                ref = &t;
                high = h;
                break;
            }
        }
        REQUIRE(ref != nullptr);
        CHECK(high->render.video.frames() == 13);  // 3*5 - 2

        // first chunk: context is just the keyframe pair
        TrainSampleT<float> c0 = assemble_refiner_chunk(ds, *ref, *high, 0, stage);
        CHECK(c0.x0.shape == std::vector<int64_t>{2, 32, 48, 3});
        REQUIRE(c0.context.has_value());
        CHECK(c0.context->frames.size() == 2);
        CHECK(c0.context->times == std::vector<int64_t>{kChunkTimeKeyA, kChunkTimeKeyB});
        CHECK(c0.video_times == std::vector<int64_t>{kChunkTimeMid1, kChunkTimeMid2});
        CHECK(c0.bundle.dropped.motion);

        // later chunks carry the previous two refined frames as context
        TrainSampleT<float> c2 = assemble_refiner_chunk(ds, *ref, *high, 2, stage);
        CHECK(c2.context->frames.size() == 4);
        CHECK(c2.context->times ==
              std::vector<int64_t>{kChunkTimePrev0, kChunkTimePrev1, kChunkTimeKeyA,
                                   kChunkTimeKeyB});
        // x0 holds the two ground-truth intermediates of chunk 2
        Image mid1 = downscale_area(high->render.video.frame(7), 1, 1);
        for (int64_t i = 0; i < 32 * 48 * 3; i++)
            CHECK(c2.x0.data[size_t(i)] == mid1.data[size_t(i)]);

        CHECK_THROWS_AS((void)assemble_refiner_chunk(ds, *ref, *high, 4, stage), Error);
    }

    TEST_CASE("train_refiner initializes from the base checkpoint") {
        const sprite::Dataset& ds = refiner_dataset();
        StagePlan plan;
        StageSpec video;
        video.name = "video_base";
        video.height = 32;
        video.width = 48;
        video.frames = 5;
        video.steps = 1;
        video.batch_size = 1;
        video.lr = 1e-3;
        StageSpec refiner_stage;
        refiner_stage.name = "refiner";
        refiner_stage.height = 32;
        refiner_stage.width = 48;
        refiner_stage.frames = 2;
        refiner_stage.steps = 0;
        refiner_stage.batch_size = 1;
        refiner_stage.lr = 1e-3;
        plan.stages = {video, refiner_stage};

        TrainContext ctx = make_train_context(tiny_model(), plan, 47);
        Checkpoint base = fresh_checkpoint(ctx);
        base = run_stage(ctx, plan.stages[0], ds, base);

        // zero refiner steps: parameters stay bit-identical to the base
        Checkpoint ref0 = train_refiner(ctx, ds, refiner_stage, base);
        CHECK(shared_params_hash(ref0.model, base.model) ==
              shared_params_hash(base.model, base.model));
        CHECK(params_hash(ref0.model) == params_hash(base.model));

        // a couple of steps move them
        StageSpec two = refiner_stage;
        two.steps = 2;
        Checkpoint ref2 = train_refiner(ctx, ds, two, base);
        CHECK(params_hash(ref2.model) != params_hash(base.model));

        // incompatible base checkpoint is rejected
        Checkpoint alien = base;
        alien.config_hash = "feed";
        CHECK_THROWS_AS((void)train_refiner(ctx, ds, two, alien), Error);
    }
}
