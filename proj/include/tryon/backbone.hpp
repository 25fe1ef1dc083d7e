#ifndef TRYON_BACKBONE_HPP
#define TRYON_BACKBONE_HPP

#include <optional>

#include "tryon/conditioning.hpp"
#include "tryon/nn.hpp"

namespace tryon {

template <typename T>
struct BackboneParams {
    Tensor<T> temb_w1, temb_b1, temb_w2, temb_b2;
    std::vector<nn::BlockParams<T>> blocks;
    Tensor<T> final_mod_w, final_mod_b;  // (2D, D) zero-init: shift/scale
    Tensor<T> out_w, out_b;              // (P, D) zero-init output projection
    Tensor<T> mask_w, mask_b;            // (1, D) auxiliary placement head

    void init(const ModelConfig& cfg, Rng& rng);
    void register_params(nn::ParamRegistry<T>& reg);
};

template <typename T>
struct Model {
    ModelConfig config;
    CondParams<T> cond;
    BackboneParams<T> bb;
};

template <typename T>
Model<T> init_model(const ModelConfig& cfg, uint64_t seed);

// Gradient buffers share the model's structure, zeroed.
template <typename T>
Model<T> zero_grads_like(const Model<T>& m);

template <typename T>
nn::ParamRegistry<T> make_registry(Model<T>& m);

template <typename T>
Model<T> cast_model(const Model<float>& m);

// x_t = (1 - t) * x0 + t * eps
template <typename T>
Tensor<T> noise_interpolate(const Tensor<T>& x0, const Tensor<T>& eps, double t);

// ---------------------------------------------------------------------------
// forward / backward

template <typename T>
struct ForwardCache {
    EncodeCache<T> cond_enc;
    typename EncodeCache<T>::Block video_enc;
    std::vector<nn::BlockCache<T>> blocks;
    Tensor<T> t_sinus, t_u1, t_a1, t_emb;  // timestep mlp activations
    Tensor<T> mods;                         // (depth, 6D)
    Tensor<T> final_mod;                    // (2D)
    Tensor<T> x_blocks_out;                 // (L, D) after the block stack
    Tensor<T> final_h, final_hm;
    Tensor<T> ln_f_mean, ln_f_rstd;
    int64_t video_len = 0, total_len = 0;
};

// Joint full attention over [video tokens ‖ condition tokens]; only video
// token outputs are projected to the velocity. mask_logits, when requested,
// is the auxiliary placement head over video tokens.
template <typename T>
Tensor<T> predict_velocity(const Model<T>& model, const Tensor<T>& x_t,
                           const std::vector<int64_t>& video_times,
                           const TokenSequence<T>& cond, double t,
                           Tensor<T>* mask_logits = nullptr,
                           ForwardCache<T>* cache = nullptr);

// Backward from velocity-patch and mask-logit gradients; accumulates into
// grads. dv_patches is (Lv, P); dmask may be empty.
template <typename T>
void backward(const Model<T>& model, Model<T>& grads, const ForwardCache<T>& cache,
              const Tensor<T>& dv_patches, const Tensor<T>& dmask);

// ---------------------------------------------------------------------------
// losses

struct LossOptions {
    DropoutRates dropout;
    double mask_weight = 0.0;
};

template <typename T>
struct TrainSampleT {
    Tensor<T> x0;                          // (T,H,W,C) in [0,1]
    std::vector<int64_t> video_times;      // empty -> 0..T-1
    CondBundle bundle;
    std::optional<ContextFrames> context;
    std::optional<Tensor<float>> mask_gt;  // flattened video-token grid, 0/1
};

// Rectified-flow velocity matching: per sample t ~ U(0,1), eps ~ N(0,1),
// loss = mean((v_hat - (eps - x0))^2) over video-token elements, plus the
// optional BCE placement term. Draw order per sample: dropout (text,
// garment, motion), then t, then eps.
template <typename T>
T training_loss(const Model<T>& model, const std::vector<TrainSampleT<T>>& batch,
                Rng& rng, const LossOptions& opts, Model<T>* grads = nullptr);

// ---------------------------------------------------------------------------
// sampling

struct SampleConfig {
    int steps = 8;
    double guidance = 1.0;
    uint64_t seed = 0;
    int64_t frames = 0, height = 0, width = 0;
    std::vector<int64_t> video_times;  // refiner chunks override these
};

// Euler integration of the learned velocity field from t=1 to t=0 with
// classifier-free guidance; g == 1 uses the conditional branch exactly and
// g == 0 the unconditional one.
VideoTensor sample(const Model<float>& model, const CondBundle& bundle,
                   const SampleConfig& cfg, const ContextFrames* context = nullptr,
                   double fps = 8.0);

// Raw-tensor variant shared by sample() and the refiner.
template <typename T>
Tensor<T> sample_tensor(const Model<T>& model, const CondBundle& bundle,
                        const SampleConfig& cfg, const ContextFrames* context = nullptr);

extern template struct Model<float>;
extern template struct Model<double>;

}  // namespace tryon

#endif
