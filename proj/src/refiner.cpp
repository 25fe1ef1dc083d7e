#include "tryon/refiner.hpp"

#include <chrono>
#include <fstream>

#include <json.hpp>

#include "tryon/util.hpp"

namespace tryon {

using nlohmann::json;

VideoTensor refine(const VideoTensor& video_low, const CondBundle& bundle,
                   const Model<float>& refiner_params, const RefinerConfig& cfg) {
    int64_t t_low = video_low.frames();
    if (t_low < 2) fail(ErrorKind::InvalidArgument, "refine: need at least 2 input frames");
    int64_t h = video_low.height(), w = video_low.width();
    int64_t t_high = 3 * t_low - 2;

    VideoTensor out(t_high, h, w, 3, video_low.fps * 3.0);
    for (int64_t i = 0; i < t_low; i++) out.set_frame(3 * i, video_low.frame(i));

    CondBundle cond = bundle;
    cond.dropped.motion = true;  // the refiner interpolates; motion is unused

    for (int64_t chunk = 0; chunk + 1 < t_low; chunk++) {
        ContextFrames context;
        if (chunk > 0) {
            context.frames.push_back(out.frame(3 * chunk - 2));
            context.times.push_back(kChunkTimePrev0);
            context.frames.push_back(out.frame(3 * chunk - 1));
            context.times.push_back(kChunkTimePrev1);
        }
        context.frames.push_back(video_low.frame(chunk));
        context.times.push_back(kChunkTimeKeyA);
        context.frames.push_back(video_low.frame(chunk + 1));
        context.times.push_back(kChunkTimeKeyB);

        SampleConfig sc;
        sc.steps = cfg.sample_steps;
        sc.guidance = cfg.guidance;
        sc.seed = derive_seed(derive_seed(cfg.seed, "refine-chunk"), uint64_t(chunk));
        sc.frames = 2;
        sc.height = h;
        sc.width = w;
        sc.video_times = {kChunkTimeMid1, kChunkTimeMid2};
        Tensor<float> mids = sample_tensor(refiner_params, cond, sc, &context);
        Tensor<float> m(std::vector<int64_t>{h, w, int64_t(3)});
        std::copy(mids.ptr(), mids.ptr() + h * w * 3, m.ptr());
        out.set_frame(3 * chunk + 1, m);
        std::copy(mids.ptr() + h * w * 3, mids.ptr() + 2 * h * w * 3, m.ptr());
        out.set_frame(3 * chunk + 2, m);
    }
    return out;
}

namespace {

Image downscale_to(const Image& img, int64_t h, int64_t w) {
    if (img.dim(0) == h && img.dim(1) == w) return img;
    return downscale_area(img, img.dim(0) / h, img.dim(1) / w);
}

}  // namespace

TrainSampleT<float> assemble_refiner_chunk(const sprite::Dataset& ds,
                                           const sprite::TripletRef& ref,
                                           const sprite::SceneEntry& high, int64_t chunk,
                                           const StageSpec& stage) {
    const VideoTensor& hv = high.render.video;
    if ((hv.frames() - 1) % 3 != 0)
        fail(ErrorKind::InvalidArgument, "high-fps scene frame count is not 3F-2");
    int64_t t_low = (hv.frames() + 2) / 3;
    if (chunk + 1 >= t_low) fail(ErrorKind::InvalidArgument, "chunk index out of range");

    const auto& user = ds.scene(ref.user_scene).render;
    TrainSampleT<float> s;
    s.bundle.user_image = downscale_to(user.video.frame(0), stage.height, stage.width);
    if (stage.conditions.text) s.bundle.text = ref.caption;
    else s.bundle.dropped.text = true;
    int64_t gh = sprite::kGarmentTexH * stage.height / ds.height;
    int64_t gw = sprite::kGarmentTexW * stage.width / ds.width;
    for (int gid : ref.garment_ids)
        s.bundle.garments.push_back(downscale_to(ds.garment(gid).texture, gh, gw));
    s.bundle.dropped.motion = true;

    // ground-truth context: previous refined frames are teacher-forced
    ContextFrames context;
    if (chunk > 0) {
        context.frames.push_back(downscale_to(hv.frame(3 * chunk - 2), stage.height, stage.width));
        context.times.push_back(kChunkTimePrev0);
        context.frames.push_back(downscale_to(hv.frame(3 * chunk - 1), stage.height, stage.width));
        context.times.push_back(kChunkTimePrev1);
    }
    context.frames.push_back(downscale_to(hv.frame(3 * chunk), stage.height, stage.width));
    context.times.push_back(kChunkTimeKeyA);
    context.frames.push_back(downscale_to(hv.frame(3 * chunk + 3), stage.height, stage.width));
    context.times.push_back(kChunkTimeKeyB);
    s.context = std::move(context);

    s.x0 = Tensor<float>({2, stage.height, stage.width, 3});
    Image mid1 = downscale_to(hv.frame(3 * chunk + 1), stage.height, stage.width);
    Image mid2 = downscale_to(hv.frame(3 * chunk + 2), stage.height, stage.width);
    std::copy(mid1.data.begin(), mid1.data.end(), s.x0.ptr());
    std::copy(mid2.data.begin(), mid2.data.end(), s.x0.ptr() + stage.height * stage.width * 3);
    s.video_times = {kChunkTimeMid1, kChunkTimeMid2};
    return s;
}

Checkpoint train_refiner(const TrainContext& ctx, const sprite::Dataset& dataset,
                         const StageSpec& stage, const Checkpoint& base_checkpoint) {
    if (base_checkpoint.config_hash != ctx.config_hash)
        fail(ErrorKind::Compatibility, "refiner base checkpoint has a different config hash");

    // chunk pool over train triplets that have a high-fps twin
    struct ChunkKey {
        int triplet;
        int64_t chunk;
    };
    std::vector<ChunkKey> pool;
    for (const auto& t : dataset.triplets) {
        if (t.split != "train" || t.reconstruction) continue;
        const sprite::SceneEntry* high = dataset.highfps_twin(t.target_scene);
        if (!high) continue;
        int64_t t_low = (high->render.video.frames() + 2) / 3;
        for (int64_t c = 0; c + 1 < t_low; c++) pool.push_back({t.id, c});
    }
    if (pool.empty())
        fail(ErrorKind::InvalidArgument,
             "refiner training requires high-fps renders (dataset has none for train triplets)");

    Checkpoint ckpt = base_checkpoint;  // fine-tune: parameters shared verbatim
    ckpt.stage = "refiner";
    ckpt.step = 0;
    if (stage.steps == 0) return ckpt;

    nn::ParamRegistry<float> reg = make_registry(ckpt.model);
    Model<float> grads = zero_grads_like(ckpt.model);
    nn::ParamRegistry<float> greg = make_registry(grads);

    auto wall0 = std::chrono::steady_clock::now();
    for (int64_t step = 0; step < stage.steps; step++) {
        std::vector<TrainSampleT<float>> batch;
        for (int64_t i = 0; i < stage.batch_size; i++) {
            int64_t& cursor = ckpt.cursors["refiner"];
            int64_t n = int64_t(pool.size());
            int64_t epoch = cursor / n, off = cursor % n;
            std::vector<int64_t> order(static_cast<size_t>(n));
            for (int64_t k = 0; k < n; k++) order[size_t(k)] = k;
            Rng shuffle_rng(derive_seed(ctx.seed, "refiner") ^
                            uint64_t(epoch) * 0x9e3779b97f4a7c15ull);
            shuffle_rng.shuffle(order);
            cursor++;
            const ChunkKey& key = pool[size_t(order[size_t(off)])];
            batch.push_back(assemble_refiner_chunk(dataset,
                                                   dataset.triplets[size_t(key.triplet)],
                                                   *dataset.highfps_twin(
                                                       dataset.triplets[size_t(key.triplet)]
                                                           .target_scene),
                                                   key.chunk, stage));
        }

        LossOptions opts;
        opts.dropout = stage.dropout;
        for (auto& [name, t] : greg.entries) t->zero();
        double loss = double(training_loss(ckpt.model, batch, ckpt.rng, opts, &grads));
        double lr = lr_at(stage, step);
        ckpt.opt.update(reg, greg, lr);

        if (!ctx.log_path.empty()) {
            double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
            std::ofstream f(ctx.log_path, std::ios::app);
            f << json{{"step", step}, {"stage", "refiner"}, {"loss", loss}, {"lr", lr},
                      {"wallclock", wall}}
                     .dump()
              << "\n";
        }
    }
    for (const auto& [name, t] : reg.entries)
        if (!t->all_finite()) fail(ErrorKind::Numeric, "non-finite parameters after refiner stage");
    ckpt.step = stage.steps;
    return ckpt;
}

}  // namespace tryon
