#include "tryon/backbone.hpp"

#include <cmath>

#include "tryon/util.hpp"

namespace tryon {

template <typename T>
void BackboneParams<T>::init(const ModelConfig& cfg, Rng& rng) {
    int64_t d = cfg.width;
    int64_t p = cfg.patch.pixels_per_patch();
    temb_w1 = Tensor<T>({d, d});
    temb_b1 = Tensor<T>({d});
    temb_w2 = Tensor<T>({d, d});
    temb_b2 = Tensor<T>({d});
    rng.fill_normal(temb_w1.ptr(), size_t(temb_w1.numel()), 0.0, 1.0 / std::sqrt(double(d)));
    rng.fill_normal(temb_w2.ptr(), size_t(temb_w2.numel()), 0.0, 1.0 / std::sqrt(double(d)));
    blocks.resize(size_t(cfg.depth));
    for (auto& b : blocks) b.init(d, rng);
    final_mod_w = Tensor<T>({2 * d, d});
    final_mod_b = Tensor<T>({2 * d});
    out_w = Tensor<T>({p, d});
    out_b = Tensor<T>({p});
    mask_w = Tensor<T>({1, d});
    mask_b = Tensor<T>({1});
}

template <typename T>
void BackboneParams<T>::register_params(nn::ParamRegistry<T>& reg) {
    reg.add("bb.temb.w1", temb_w1);
    reg.add("bb.temb.b1", temb_b1);
    reg.add("bb.temb.w2", temb_w2);
    reg.add("bb.temb.b2", temb_b2);
    for (size_t i = 0; i < blocks.size(); i++)
        blocks[i].register_params(reg, "bb.block." + std::to_string(i));
    reg.add("bb.final_mod.w", final_mod_w);
    reg.add("bb.final_mod.b", final_mod_b);
    reg.add("bb.out.w", out_w);
    reg.add("bb.out.b", out_b);
    reg.add("bb.mask.w", mask_w);
    reg.add("bb.mask.b", mask_b);
}

template struct BackboneParams<float>;
template struct BackboneParams<double>;
template struct Model<float>;
template struct Model<double>;

template <typename T>
Model<T> init_model(const ModelConfig& cfg, uint64_t seed) {
    if (cfg.width % cfg.heads != 0)
        fail(ErrorKind::InvalidArgument, "model width must be divisible by heads");
    Model<T> m;
    m.config = cfg;
    Rng rng(derive_seed(seed, "model-init"));
    m.cond.init(cfg, rng);
    m.bb.init(cfg, rng);
    return m;
}

template Model<float> init_model(const ModelConfig&, uint64_t);
template Model<double> init_model(const ModelConfig&, uint64_t);

template <typename T>
Model<T> zero_grads_like(const Model<T>& m) {
    Model<T> g = m;
    nn::ParamRegistry<T> reg = make_registry(g);
    for (auto& [name, t] : reg.entries) t->zero();
    return g;
}

template Model<float> zero_grads_like(const Model<float>&);
template Model<double> zero_grads_like(const Model<double>&);

template <typename T>
nn::ParamRegistry<T> make_registry(Model<T>& m) {
    nn::ParamRegistry<T> reg;
    m.cond.register_params(reg);
    m.bb.register_params(reg);
    return reg;
}

template nn::ParamRegistry<float> make_registry(Model<float>&);
template nn::ParamRegistry<double> make_registry(Model<double>&);

template <>
Model<float> cast_model<float>(const Model<float>& m) {
    return m;
}

template <>
Model<double> cast_model<double>(const Model<float>& m) {
    Model<double> out;
    out.config = m.config;
    for (int i = 0; i < kNumModalities; i++) {
        out.cond.patch_w[size_t(i)] = m.cond.patch_w[size_t(i)].cast<double>();
        out.cond.patch_b[size_t(i)] = m.cond.patch_b[size_t(i)].cast<double>();
        out.cond.adapters[size_t(i)].resize(m.cond.adapters[size_t(i)].size());
        for (size_t a = 0; a < m.cond.adapters[size_t(i)].size(); a++) {
            const auto& s = m.cond.adapters[size_t(i)][a];
            auto& d = out.cond.adapters[size_t(i)][a];
            d.ln1_g = s.ln1_g.cast<double>(); d.ln1_b = s.ln1_b.cast<double>();
            d.ln2_g = s.ln2_g.cast<double>(); d.ln2_b = s.ln2_b.cast<double>();
            d.w_qkv = s.w_qkv.cast<double>(); d.b_qkv = s.b_qkv.cast<double>();
            d.w_o = s.w_o.cast<double>(); d.b_o = s.b_o.cast<double>();
            d.w_fc1 = s.w_fc1.cast<double>(); d.b_fc1 = s.b_fc1.cast<double>();
            d.w_fc2 = s.w_fc2.cast<double>(); d.b_fc2 = s.b_fc2.cast<double>();
        }
    }
    out.cond.modality_emb = m.cond.modality_emb.cast<double>();
    out.cond.null_text = m.cond.null_text.cast<double>();
    out.cond.null_garment = m.cond.null_garment.cast<double>();
    out.cond.null_motion = m.cond.null_motion.cast<double>();
    out.cond.vocab_emb = m.cond.vocab_emb.cast<double>();
    out.cond.pos_proj = m.cond.pos_proj.cast<double>();
    out.bb.temb_w1 = m.bb.temb_w1.cast<double>();
    out.bb.temb_b1 = m.bb.temb_b1.cast<double>();
    out.bb.temb_w2 = m.bb.temb_w2.cast<double>();
    out.bb.temb_b2 = m.bb.temb_b2.cast<double>();
    out.bb.blocks.resize(m.bb.blocks.size());
    for (size_t i = 0; i < m.bb.blocks.size(); i++) {
        const auto& s = m.bb.blocks[i];
        auto& d = out.bb.blocks[i];
        d.w_qkv = s.w_qkv.cast<double>(); d.b_qkv = s.b_qkv.cast<double>();
        d.w_o = s.w_o.cast<double>(); d.b_o = s.b_o.cast<double>();
        d.w_fc1 = s.w_fc1.cast<double>(); d.b_fc1 = s.b_fc1.cast<double>();
        d.w_fc2 = s.w_fc2.cast<double>(); d.b_fc2 = s.b_fc2.cast<double>();
        d.w_mod = s.w_mod.cast<double>(); d.b_mod = s.b_mod.cast<double>();
    }
    out.bb.final_mod_w = m.bb.final_mod_w.cast<double>();
    out.bb.final_mod_b = m.bb.final_mod_b.cast<double>();
    out.bb.out_w = m.bb.out_w.cast<double>();
    out.bb.out_b = m.bb.out_b.cast<double>();
    out.bb.mask_w = m.bb.mask_w.cast<double>();
    out.bb.mask_b = m.bb.mask_b.cast<double>();
    return out;
}

template <typename T>
Tensor<T> noise_interpolate(const Tensor<T>& x0, const Tensor<T>& eps, double t) {
    if (!x0.same_shape(eps)) fail(ErrorKind::Shape, "noise_interpolate: shape mismatch");
    if (t < 0.0 || t > 1.0) fail(ErrorKind::InvalidArgument, "noise_interpolate: t must be in [0,1]");
    Tensor<T> out = x0;
    T tt = T(t), omt = T(1.0 - t);
    for (int64_t i = 0; i < out.numel(); i++)
        out.data[size_t(i)] = omt * x0.data[size_t(i)] + tt * eps.data[size_t(i)];
    return out;
}

template Tensor<float> noise_interpolate(const Tensor<float>&, const Tensor<float>&, double);
template Tensor<double> noise_interpolate(const Tensor<double>&, const Tensor<double>&, double);

namespace {

// sinusoidal features of the scalar timestep, frequencies geometric in
// [1, 1000]
template <typename T>
void timestep_sinusoid(double t, int64_t d, T* out) {
    int64_t pairs = d / 2;
    for (int64_t k = 0; k < pairs; k++) {
        double w = std::pow(1000.0, pairs > 1 ? double(k) / double(pairs - 1) : 0.0);
        out[2 * k] = T(std::sin(t * w));
        out[2 * k + 1] = T(std::cos(t * w));
    }
    if (d % 2) out[d - 1] = T(0);
}

}  // namespace

template <typename T>
Tensor<T> predict_velocity(const Model<T>& model, const Tensor<T>& x_t,
                           const std::vector<int64_t>& video_times,
                           const TokenSequence<T>& cond, double t,
                           Tensor<T>* mask_logits, ForwardCache<T>* cache) {
    const ModelConfig& cfg = model.config;
    int64_t d = cfg.width;
    if (cond.length() > 0 && cond.tokens.dim(1) != d)
        fail(ErrorKind::Shape, "predict_velocity: condition width mismatch");

    TokenSequence<T> video_seq = encode_video_tokens(
        x_t, video_times, model.cond, cfg, cache ? &cache->video_enc : nullptr);
    int64_t lv = video_seq.length();
    int64_t l = lv + cond.length();

    Tensor<T> x({l, d});
    std::copy(video_seq.tokens.data.begin(), video_seq.tokens.data.end(), x.data.begin());
    if (cond.length() > 0)
        std::copy(cond.tokens.data.begin(), cond.tokens.data.end(),
                  x.data.begin() + size_t(lv * d));

    // timestep embedding through the two-layer perceptron
    Tensor<T> sinus({d}), u1({d}), a1({d}), emb({d});
    timestep_sinusoid(t, d, sinus.ptr());
    nn::linear_fwd(sinus.ptr(), 1, model.bb.temb_w1, model.bb.temb_b1, u1.ptr());
    for (int64_t i = 0; i < d; i++) a1.data[size_t(i)] = nn::silu(u1.data[size_t(i)]);
    nn::linear_fwd(a1.ptr(), 1, model.bb.temb_w2, model.bb.temb_b2, emb.ptr());

    int depth = cfg.depth;
    Tensor<T> mods({int64_t(depth), 6 * d});
    for (int b = 0; b < depth; b++)
        nn::linear_fwd(emb.ptr(), 1, model.bb.blocks[size_t(b)].w_mod,
                       model.bb.blocks[size_t(b)].b_mod, mods.ptr() + b * 6 * d);
    Tensor<T> fmod({2 * d});
    nn::linear_fwd(emb.ptr(), 1, model.bb.final_mod_w, model.bb.final_mod_b, fmod.ptr());

    if (cache) {
        cache->blocks.resize(size_t(depth));
        cache->video_len = lv;
        cache->total_len = l;
    }
    for (int b = 0; b < depth; b++)
        nn::block_forward(model.bb.blocks[size_t(b)], x, mods.ptr() + b * 6 * d, cfg.heads,
                          cache ? &cache->blocks[size_t(b)] : nullptr);
    if (cache) cache->x_blocks_out = x;

    // final layernorm + modulation, then project video tokens only
    Tensor<T> h({l, d}), hm({l, d}), mean({l}), rstd({l});
    nn::layernorm_fwd(x.ptr(), l, d, (const T*)nullptr, (const T*)nullptr, h.ptr(), mean.ptr(),
                      rstd.ptr());
    const T* fshift = fmod.ptr();
    const T* fscale = fmod.ptr() + d;
    for (int64_t i = 0; i < l; i++)
        for (int64_t c = 0; c < d; c++)
            hm.data[size_t(i * d + c)] =
                h.data[size_t(i * d + c)] * (T(1) + fscale[c]) + fshift[c];

    int64_t p = cfg.patch.pixels_per_patch();
    Tensor<T> v_patches({lv, p});
    nn::linear_fwd(hm.ptr(), lv, model.bb.out_w, model.bb.out_b, v_patches.ptr());
    if (mask_logits) {
        *mask_logits = Tensor<T>({lv});
        nn::linear_fwd(hm.ptr(), lv, model.bb.mask_w, model.bb.mask_b, mask_logits->ptr());
    }

    if (cache) {
        cache->t_sinus = std::move(sinus);
        cache->t_u1 = std::move(u1);
        cache->t_a1 = std::move(a1);
        cache->t_emb = std::move(emb);
        cache->mods = std::move(mods);
        cache->final_mod = std::move(fmod);
        cache->final_h = std::move(h);
        cache->final_hm = std::move(hm);
        cache->ln_f_mean = std::move(mean);
        cache->ln_f_rstd = std::move(rstd);
    }

    return patch_join(v_patches, x_t.shape, cfg.patch);
}

template Tensor<float> predict_velocity(const Model<float>&, const Tensor<float>&,
                                        const std::vector<int64_t>&, const TokenSequence<float>&,
                                        double, Tensor<float>*, ForwardCache<float>*);
template Tensor<double> predict_velocity(const Model<double>&, const Tensor<double>&,
                                         const std::vector<int64_t>&, const TokenSequence<double>&,
                                         double, Tensor<double>*, ForwardCache<double>*);

template <typename T>
void backward(const Model<T>& model, Model<T>& grads, const ForwardCache<T>& cache,
              const Tensor<T>& dv_patches, const Tensor<T>& dmask) {
    const ModelConfig& cfg = model.config;
    int64_t d = cfg.width;
    int64_t l = cache.total_len, lv = cache.video_len;

    // output heads
    Tensor<T> dhm({l, d});
    nn::linear_bwd(cache.final_hm.ptr(), dv_patches.ptr(), lv, model.bb.out_w, grads.bb.out_w,
                   grads.bb.out_b, dhm.ptr());
    if (dmask.numel() > 0)
        nn::linear_bwd(cache.final_hm.ptr(), dmask.ptr(), lv, model.bb.mask_w, grads.bb.mask_w,
                       grads.bb.mask_b, dhm.ptr());

    // final modulation
    Tensor<T> dfmod({2 * d});
    Tensor<T> dh({l, d});
    const T* fscale = cache.final_mod.ptr() + d;
    T* dfshift = dfmod.ptr();
    T* dfscale = dfmod.ptr() + d;
    for (int64_t i = 0; i < l; i++)
        for (int64_t c = 0; c < d; c++) {
            T up = dhm.data[size_t(i * d + c)];
            dfscale[c] += up * cache.final_h.data[size_t(i * d + c)];
            dfshift[c] += up;
            dh.data[size_t(i * d + c)] = up * (T(1) + fscale[c]);
        }

    Tensor<T> dx({l, d});
    nn::layernorm_bwd(cache.x_blocks_out.ptr(), dh.ptr(), cache.ln_f_mean.ptr(),
                      cache.ln_f_rstd.ptr(), l, d, (const T*)nullptr, dx.ptr(), (T*)nullptr,
                      (T*)nullptr);

    // blocks in reverse, accumulating modulation gradients
    Tensor<T> dmods({int64_t(cfg.depth), 6 * d});
    for (int b = cfg.depth - 1; b >= 0; b--)
        nn::block_backward(model.bb.blocks[size_t(b)], grads.bb.blocks[size_t(b)],
                           cache.blocks[size_t(b)], cache.mods.ptr() + b * 6 * d, dx,
                           dmods.ptr() + b * 6 * d, cfg.heads);

    // modulation heads and the timestep mlp
    Tensor<T> demb({d});
    for (int b = 0; b < cfg.depth; b++)
        nn::linear_bwd(cache.t_emb.ptr(), dmods.ptr() + b * 6 * d, 1,
                       model.bb.blocks[size_t(b)].w_mod, grads.bb.blocks[size_t(b)].w_mod,
                       grads.bb.blocks[size_t(b)].b_mod, demb.ptr());
    nn::linear_bwd(cache.t_emb.ptr(), dfmod.ptr(), 1, model.bb.final_mod_w,
                   grads.bb.final_mod_w, grads.bb.final_mod_b, demb.ptr());
    Tensor<T> da1({d}), du1({d});
    nn::linear_bwd(cache.t_a1.ptr(), demb.ptr(), 1, model.bb.temb_w2, grads.bb.temb_w2,
                   grads.bb.temb_b2, da1.ptr());
    for (int64_t i = 0; i < d; i++)
        du1.data[size_t(i)] = da1.data[size_t(i)] * nn::silu_grad(cache.t_u1.data[size_t(i)]);
    nn::linear_bwd(cache.t_sinus.ptr(), du1.ptr(), 1, model.bb.temb_w1, grads.bb.temb_w1,
                   grads.bb.temb_b1, (T*)nullptr);

    // split the token gradient back into the video and condition encoders
    Tensor<T> dvideo_tok({lv, d});
    std::copy(dx.data.begin(), dx.data.begin() + size_t(lv * d), dvideo_tok.data.begin());
    encode_block_backward(model.cond, grads.cond, cache.video_enc, cfg, dvideo_tok.ptr());
    if (l > lv) {
        Tensor<T> dcond({l - lv, d});
        std::copy(dx.data.begin() + size_t(lv * d), dx.data.end(), dcond.data.begin());
        encode_backward(model.cond, grads.cond, cache.cond_enc, cfg, dcond);
    }
}

template void backward(const Model<float>&, Model<float>&, const ForwardCache<float>&,
                       const Tensor<float>&, const Tensor<float>&);
template void backward(const Model<double>&, Model<double>&, const ForwardCache<double>&,
                       const Tensor<double>&, const Tensor<double>&);

template <typename T>
T training_loss(const Model<T>& model, const std::vector<TrainSampleT<T>>& batch, Rng& rng,
                const LossOptions& opts, Model<T>* grads) {
    if (batch.empty()) fail(ErrorKind::InvalidArgument, "training_loss: empty batch");
    const ModelConfig& cfg = model.config;
    double total = 0.0;
    int64_t bsz = int64_t(batch.size());

    for (const auto& sample : batch) {
        if (!sample.x0.all_finite()) fail(ErrorKind::Numeric, "training_loss: NaN in inputs");
        CondBundle bundle = dropout_conditions(sample.bundle, opts.dropout, rng);
        double t = rng.uniform();
        Tensor<T> eps(sample.x0.shape);
        rng.fill_normal(eps.ptr(), size_t(eps.numel()));
        Tensor<T> x_t = noise_interpolate(sample.x0, eps, t);

        ForwardCache<T> cache;
        EncodeCache<T>* enc = grads ? &cache.cond_enc : nullptr;
        TokenSequence<T> cond = encode_bundle(bundle, model.cond, cfg,
                                              sample.context ? &*sample.context : nullptr, enc);
        Tensor<T> mask_logits;
        Tensor<T> v = predict_velocity(model, x_t, sample.video_times, cond, t,
                                       opts.mask_weight > 0 ? &mask_logits : nullptr,
                                       grads ? &cache : nullptr);

        // velocity target eps - x0, compared elementwise
        int64_t n = v.numel();
        double flow = 0.0;
        Tensor<T> diff(v.shape);
        for (int64_t i = 0; i < n; i++) {
            T target = eps.data[size_t(i)] - sample.x0.data[size_t(i)];
            T e = v.data[size_t(i)] - target;
            diff.data[size_t(i)] = e;
            flow += double(e) * double(e);
        }
        flow /= double(n);
        double loss_i = flow;

        Tensor<T> dmask;
        if (opts.mask_weight > 0) {
            if (!sample.mask_gt.has_value())
                fail(ErrorKind::InvalidArgument, "warmup objective requires placement masks");
            int64_t lv = mask_logits.numel();
            if (sample.mask_gt->numel() != lv)
                fail(ErrorKind::Shape, "mask_gt token count mismatch");
            double bce = 0.0;
            dmask = Tensor<T>({lv});
            for (int64_t i = 0; i < lv; i++) {
                double z = double(mask_logits.data[size_t(i)]);
                double y = double(sample.mask_gt->data[size_t(i)]);
                bce += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
                double sig = 1.0 / (1.0 + std::exp(-z));
                dmask.data[size_t(i)] = T(opts.mask_weight * (sig - y) / double(lv * bsz));
            }
            bce /= double(lv);
            loss_i += opts.mask_weight * bce;
        }

        total += loss_i;
        if (!std::isfinite(loss_i)) fail(ErrorKind::Numeric, "training_loss: non-finite loss");

        if (grads) {
            Tensor<T> dv_pixels(v.shape);
            T scale = T(2.0 / (double(n) * double(bsz)));
            for (int64_t i = 0; i < n; i++) dv_pixels.data[size_t(i)] = scale * diff.data[size_t(i)];
            Tensor<T> dv_patches = patch_split(dv_pixels, cfg.patch);
            backward(model, *grads, cache, dv_patches, dmask);
        }
    }
    return T(total / double(bsz));
}

template float training_loss(const Model<float>&, const std::vector<TrainSampleT<float>>&,
                             Rng&, const LossOptions&, Model<float>*);
template double training_loss(const Model<double>&, const std::vector<TrainSampleT<double>>&,
                              Rng&, const LossOptions&, Model<double>*);

template <typename T>
Tensor<T> sample_tensor(const Model<T>& model, const CondBundle& bundle,
                        const SampleConfig& cfg, const ContextFrames* context) {
    if (cfg.steps < 1) fail(ErrorKind::InvalidArgument, "sample: steps must be >= 1");
    if (cfg.guidance < 0.0) fail(ErrorKind::InvalidArgument, "sample: guidance must be >= 0");
    const ModelConfig& mc = model.config;
    patch_count(cfg.frames, cfg.height, cfg.width, mc.patch);  // shape check

    TokenSequence<T> cond_tokens, uncond_tokens;
    bool need_cond = cfg.guidance != 0.0;
    bool need_uncond = cfg.guidance != 1.0;
    if (need_cond) cond_tokens = encode_bundle(bundle, model.cond, mc, context);
    if (need_uncond) {
        CondBundle dropped = bundle;
        dropped.dropped.text = true;
        dropped.dropped.garment = true;
        dropped.dropped.motion = true;
        uncond_tokens = encode_bundle(dropped, model.cond, mc, context);
    }

    Rng rng(derive_seed(cfg.seed, "sample-noise"));
    Tensor<T> x({cfg.frames, cfg.height, cfg.width, 3});
    rng.fill_normal(x.ptr(), size_t(x.numel()));

    double dt = 1.0 / double(cfg.steps);
    for (int k = 0; k < cfg.steps; k++) {
        double t = 1.0 - double(k) * dt;
        Tensor<T> v;
        if (cfg.guidance == 1.0) {
            v = predict_velocity(model, x, cfg.video_times, cond_tokens, t);
        } else if (cfg.guidance == 0.0) {
            v = predict_velocity(model, x, cfg.video_times, uncond_tokens, t);
        } else {
            Tensor<T> vc = predict_velocity(model, x, cfg.video_times, cond_tokens, t);
            Tensor<T> vu = predict_velocity(model, x, cfg.video_times, uncond_tokens, t);
            v = vu;
            T g = T(cfg.guidance);
            for (int64_t i = 0; i < v.numel(); i++)
                v.data[size_t(i)] += g * (vc.data[size_t(i)] - vu.data[size_t(i)]);
        }
        for (int64_t i = 0; i < x.numel(); i++) x.data[size_t(i)] -= T(dt) * v.data[size_t(i)];
    }
    for (auto& p : x.data) p = std::clamp(p, T(0), T(1));
    return x;
}

template Tensor<float> sample_tensor(const Model<float>&, const CondBundle&,
                                     const SampleConfig&, const ContextFrames*);
template Tensor<double> sample_tensor(const Model<double>&, const CondBundle&,
                                      const SampleConfig&, const ContextFrames*);

VideoTensor sample(const Model<float>& model, const CondBundle& bundle, const SampleConfig& cfg,
                   const ContextFrames* context, double fps) {
    Tensor<float> x = sample_tensor(model, bundle, cfg, context);
    VideoTensor out;
    out.pixels = std::move(x);
    out.fps = fps;
    return out;
}

}  // namespace tryon
