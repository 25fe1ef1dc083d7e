#ifndef TRYON_REFINER_HPP
#define TRYON_REFINER_HPP

#include "tryon/trainer.hpp"

namespace tryon {

// Fixed 3x temporal upsampling: keyframes are copied verbatim, the two
// frames between each adjacent keyframe pair are generated by the backbone
// conditioned on [bundle without motion] plus context tokens (the keyframe
// pair and the previous chunk's last two refined frames).
struct RefinerConfig {
    static constexpr int kFactor = 3;
    static constexpr int kContextFrames = 2;
    int sample_steps = 8;
    double guidance = 1.0;
    uint64_t seed = 0;
};

// chunk-local time coordinates on a 6-slot timeline:
//   [prev_refined_0, prev_refined_1, key_i, mid_1, mid_2, key_i+1]
constexpr int64_t kChunkTimePrev0 = 0;
constexpr int64_t kChunkTimePrev1 = 1;
constexpr int64_t kChunkTimeKeyA = 2;
constexpr int64_t kChunkTimeMid1 = 3;
constexpr int64_t kChunkTimeMid2 = 4;
constexpr int64_t kChunkTimeKeyB = 5;

// T_low >= 2 frames in, 3*T_low - 2 frames out; output[3i] == input[i]
// bit-exactly. Chunks are processed strictly left to right, each with a
// seed derived from (cfg.seed, chunk index).
VideoTensor refine(const VideoTensor& video_low, const CondBundle& bundle,
                   const Model<float>& refiner_params, const RefinerConfig& cfg);

// Fine-tunes from the base checkpoint on high-FPS renders: each training
// sample is one chunk with ground-truth context (teacher forcing) and the
// two ground-truth intermediates as the flow target.
Checkpoint train_refiner(const TrainContext& ctx, const sprite::Dataset& dataset,
                         const StageSpec& stage, const Checkpoint& base_checkpoint);

// One refiner training chunk materialized at stage resolution.
TrainSampleT<float> assemble_refiner_chunk(const sprite::Dataset& ds,
                                           const sprite::TripletRef& ref,
                                           const sprite::SceneEntry& high, int64_t chunk,
                                           const StageSpec& stage);

}  // namespace tryon

#endif
