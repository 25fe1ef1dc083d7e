#include "tryon/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "tryon/util.hpp"

namespace tryon {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::Video: return "video";
        case Modality::Text: return "text";
        case Modality::User: return "user";
        case Modality::Garment: return "garment";
        case Modality::Motion: return "motion";
        case Modality::Context: return "context";
    }
    return "?";
}

int64_t patch_count(int64_t t, int64_t h, int64_t w, const PatchSpec& spec) {
    if (spec.pt < 1 || spec.ph < 1 || spec.pw < 1)
        fail(ErrorKind::InvalidArgument, "patch spec extents must be >= 1");
    if (t % spec.pt != 0 || h % spec.ph != 0 || w % spec.pw != 0) {
        std::ostringstream ss;
        ss << "shape (" << t << "," << h << "," << w << ") not divisible by patch ("
           << spec.pt << "," << spec.ph << "," << spec.pw << ")";
        fail(ErrorKind::Shape, ss.str());
    }
    return (t / spec.pt) * (h / spec.ph) * (w / spec.pw);
}

template <typename T>
Tensor<T> patch_split(const Tensor<T>& video, const PatchSpec& spec) {
    if (video.rank() != 4) fail(ErrorKind::Shape, "patch_split expects (T,H,W,C)");
    int64_t t = video.dim(0), h = video.dim(1), w = video.dim(2), c = video.dim(3);
    int64_t l = patch_count(t, h, w, spec);
    int64_t p = spec.pixels_per_patch(c);
    Tensor<T> out({l, p});
    int64_t gt = t / spec.pt, gh = h / spec.ph, gw = w / spec.pw;
    int64_t idx = 0;
    for (int64_t tt = 0; tt < gt; tt++)
        for (int64_t yy = 0; yy < gh; yy++)
            for (int64_t xx = 0; xx < gw; xx++, idx++) {
                T* dst = out.ptr() + idx * p;
                int64_t k = 0;
                for (int64_t dt = 0; dt < spec.pt; dt++)
                    for (int64_t dy = 0; dy < spec.ph; dy++)
                        for (int64_t dx = 0; dx < spec.pw; dx++)
                            for (int64_t ch = 0; ch < c; ch++)
                                dst[k++] = video.at({tt * spec.pt + dt, yy * spec.ph + dy,
                                                     xx * spec.pw + dx, ch});
            }
    return out;
}

template <typename T>
Tensor<T> patch_join(const Tensor<T>& patches, const std::vector<int64_t>& video_shape,
                     const PatchSpec& spec) {
    if (video_shape.size() != 4) fail(ErrorKind::Shape, "patch_join expects 4d target shape");
    int64_t t = video_shape[0], h = video_shape[1], w = video_shape[2], c = video_shape[3];
    int64_t l = patch_count(t, h, w, spec);
    int64_t p = spec.pixels_per_patch(c);
    if (patches.rank() != 2 || patches.dim(0) != l || patches.dim(1) != p)
        fail(ErrorKind::Shape, "patch_join: patches shape mismatch");
    Tensor<T> out(video_shape);
    int64_t gt = t / spec.pt, gh = h / spec.ph, gw = w / spec.pw;
    int64_t idx = 0;
    for (int64_t tt = 0; tt < gt; tt++)
        for (int64_t yy = 0; yy < gh; yy++)
            for (int64_t xx = 0; xx < gw; xx++, idx++) {
                const T* src = patches.ptr() + idx * p;
                int64_t k = 0;
                for (int64_t dt = 0; dt < spec.pt; dt++)
                    for (int64_t dy = 0; dy < spec.ph; dy++)
                        for (int64_t dx = 0; dx < spec.pw; dx++)
                            for (int64_t ch = 0; ch < c; ch++)
                                out.at({tt * spec.pt + dt, yy * spec.ph + dy,
                                        xx * spec.pw + dx, ch}) = src[k++];
            }
    return out;
}

template Tensor<float> patch_split(const Tensor<float>&, const PatchSpec&);
template Tensor<double> patch_split(const Tensor<double>&, const PatchSpec&);
template Tensor<float> patch_join(const Tensor<float>&, const std::vector<int64_t>&, const PatchSpec&);
template Tensor<double> patch_join(const Tensor<double>&, const std::vector<int64_t>&, const PatchSpec&);

// ---------------------------------------------------------------------------

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
    Vocabulary v;
    v.words = std::move(words);
    for (size_t i = 0; i < v.words.size(); i++) {
        if (v.index.count(v.words[i]))
            fail(ErrorKind::Format, "duplicate vocabulary word: " + v.words[i]);
        v.index[v.words[i]] = int(i);
    }
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) words.push_back(line);
    }
    return from_words(std::move(words));
}

void Vocabulary::save(const std::string& path) const {
    std::string out;
    for (const auto& w : words) {
        out += w;
        out += '\n';
    }
    write_text_file(path, out);
}

int Vocabulary::id_of(const std::string& word) const {
    auto it = index.find(word);
    if (it == index.end())
        fail(ErrorKind::Vocabulary, "word not in vocabulary: \"" + word + "\"");
    return it->second;
}

std::string Vocabulary::content_hash() const {
    Sha256 h;
    for (const auto& w : words) {
        h.update(w);
        h.update("\n", 1);
    }
    return h.hex_digest();
}

Vocabulary builtin_vocabulary() {
    std::vector<std::string> words = {"wear", "and", "doing"};
    for (const auto& w : {"striped", "banded", "checkered", "solid"}) words.push_back(w);
    for (const auto& c : {"red",  "green", "blue",   "yellow", "magenta", "cyan",
                          "orange", "purple", "teal", "olive", "maroon", "navy",
                          "pink", "lime", "gray", "brown"})
        words.push_back(c);
    for (const auto& t : {"top", "bottom", "onepiece"}) words.push_back(t);
    for (const auto& m : {"idle", "turn", "wave", "dance"}) words.push_back(m);
    return Vocabulary::from_words(std::move(words));
}

std::string ModelConfig::canonical_json() const {
    nlohmann::json j;
    j["width"] = width;
    j["depth"] = depth;
    j["heads"] = heads;
    j["patch"] = {patch.pt, patch.ph, patch.pw};
    j["adapter_depth"] = adapter_depth;
    j["max_text_len"] = max_text_len;
    j["vocab_hash"] = vocab.content_hash();
    return j.dump();
}

// ---------------------------------------------------------------------------

template <typename T>
void TokenSequence<T>::append(const TokenSequence<T>& other) {
    if (other.length() == 0) return;
    if (length() == 0) {
        *this = other;
        return;
    }
    if (tokens.dim(1) != other.tokens.dim(1))
        fail(ErrorKind::Shape, "token width mismatch in append");
    Tensor<T> merged({length() + other.length(), tokens.dim(1)});
    std::copy(tokens.data.begin(), tokens.data.end(), merged.data.begin());
    std::copy(other.tokens.data.begin(), other.tokens.data.end(),
              merged.data.begin() + tokens.data.size());
    tokens = std::move(merged);
    tags.insert(tags.end(), other.tags.begin(), other.tags.end());
    positions.insert(positions.end(), other.positions.begin(), other.positions.end());
}

template struct TokenSequence<float>;
template struct TokenSequence<double>;

CondBundle dropout_conditions(const CondBundle& bundle, const DropoutRates& rates, Rng& rng) {
    for (double r : {rates.text, rates.garment, rates.motion})
        if (r < 0.0 || r > 1.0)
            fail(ErrorKind::InvalidArgument, "dropout rate must be in [0,1]");
    CondBundle out = bundle;
    if (rng.bernoulli(rates.text)) out.dropped.text = true;
    if (rng.bernoulli(rates.garment)) out.dropped.garment = true;
    if (rng.bernoulli(rates.motion)) out.dropped.motion = true;
    return out;
}

template <typename T>
void factorized_position(const std::array<int64_t, 3>& pos, int64_t pos_dim, T* out) {
    int64_t per_axis = pos_dim / 3;
    int64_t pairs = per_axis / 2;
    for (int axis = 0; axis < 3; axis++) {
        T* dst = out + axis * per_axis;
        double p = double(pos[size_t(axis)]);
        for (int64_t k = 0; k < pairs; k++) {
            double freq = std::pow(64.0, pairs > 1 ? -double(k) / double(pairs - 1) : 0.0);
            double a = p * freq;
            dst[2 * k] = T(std::sin(a));
            dst[2 * k + 1] = T(std::cos(a));
        }
    }
}

template void factorized_position(const std::array<int64_t, 3>&, int64_t, float*);
template void factorized_position(const std::array<int64_t, 3>&, int64_t, double*);

template <typename T>
void CondParams<T>::init(const ModelConfig& cfg, Rng& rng) {
    int64_t d = cfg.width;
    int64_t p = cfg.patch.pixels_per_patch();
    for (Modality m : {Modality::Video, Modality::User, Modality::Garment, Modality::Motion,
                       Modality::Context}) {
        auto& w = patch_w[size_t(m)];
        auto& b = patch_b[size_t(m)];
        w = Tensor<T>({d, p});
        b = Tensor<T>({d});
        rng.fill_normal(w.ptr(), size_t(w.numel()), 0.0, 1.0 / std::sqrt(double(p)));
    }
    modality_emb = Tensor<T>({kNumModalities, d});
    rng.fill_normal(modality_emb.ptr(), size_t(modality_emb.numel()), 0.0, 0.1);
    null_text = Tensor<T>({d});
    null_garment = Tensor<T>({d});
    null_motion = Tensor<T>({d});
    for (Tensor<T>* n : {&null_text, &null_garment, &null_motion})
        rng.fill_normal(n->ptr(), size_t(n->numel()), 0.0, 0.1);
    vocab_emb = Tensor<T>({int64_t(cfg.vocab.size()), d});
    rng.fill_normal(vocab_emb.ptr(), size_t(vocab_emb.numel()), 0.0, 0.1);
    // identity block: sinusoids pass through untouched at init
    pos_proj = Tensor<T>({d, cfg.pos_dim()});
    for (int64_t i = 0; i < std::min(d, cfg.pos_dim()); i++)
        pos_proj.at({i, i}) = T(1);
    for (int m = 0; m < kNumModalities; m++) {
        adapters[size_t(m)].resize(size_t(cfg.adapter_depth));
        for (auto& a : adapters[size_t(m)]) a.init(d, rng);
    }
}

template <typename T>
void CondParams<T>::register_params(nn::ParamRegistry<T>& reg) {
    for (Modality m : {Modality::Video, Modality::User, Modality::Garment, Modality::Motion,
                       Modality::Context}) {
        reg.add(std::string("cond.patch.") + modality_name(m) + ".w", patch_w[size_t(m)]);
        reg.add(std::string("cond.patch.") + modality_name(m) + ".b", patch_b[size_t(m)]);
    }
    reg.add("cond.modality_emb", modality_emb);
    reg.add("cond.null.text", null_text);
    reg.add("cond.null.garment", null_garment);
    reg.add("cond.null.motion", null_motion);
    reg.add("cond.vocab", vocab_emb);
    reg.add("cond.pos_proj", pos_proj);
    for (int m = 0; m < kNumModalities; m++)
        for (size_t i = 0; i < adapters[size_t(m)].size(); i++)
            adapters[size_t(m)][i].register_params(
                reg, std::string("cond.adapter.") + modality_name(Modality(m)) + "." +
                         std::to_string(i));
}

template struct CondParams<float>;
template struct CondParams<double>;

namespace {

template <typename T>
void add_positions(Tensor<T>& tokens, const std::vector<std::array<int64_t, 3>>& positions,
                   const CondParams<T>& params, const ModelConfig& cfg, Tensor<T>* sinus_out) {
    int64_t l = tokens.dim(0), d = tokens.dim(1);
    int64_t pd = cfg.pos_dim();
    Tensor<T> sinus({l, pd});
    for (int64_t i = 0; i < l; i++)
        factorized_position(positions[size_t(i)], pd, sinus.ptr() + i * pd);
    // tokens += sinus @ pos_proj^T
    matmul_nt(sinus.ptr(), params.pos_proj.ptr(), tokens.ptr(), l, d, pd, T(1));
    if (sinus_out) *sinus_out = std::move(sinus);
}

template <typename T>
void add_modality(Tensor<T>& tokens, Modality m, const CondParams<T>& params) {
    int64_t l = tokens.dim(0), d = tokens.dim(1);
    const T* emb = params.modality_emb.ptr() + int(m) * d;
    for (int64_t i = 0; i < l; i++)
        for (int64_t c = 0; c < d; c++) tokens.data[size_t(i * d + c)] += emb[c];
}

template <typename T>
TokenSequence<T> null_block(Modality m, const Tensor<T>& null_vec, const ModelConfig& cfg,
                            EncodeCache<T>* cache) {
    TokenSequence<T> seq;
    seq.tokens = Tensor<T>({1, cfg.width});
    std::copy(null_vec.data.begin(), null_vec.data.end(), seq.tokens.data.begin());
    seq.tags = {m};
    seq.positions = {{0, 0, 0}};
    if (cache) {
        typename EncodeCache<T>::Block b;
        b.modality = m;
        b.len = 1;
        b.is_null = true;
        cache->blocks.push_back(std::move(b));
    }
    return seq;
}

std::vector<std::array<int64_t, 3>> grid_positions(int64_t t, int64_t h, int64_t w,
                                                   const PatchSpec& spec,
                                                   const std::vector<int64_t>& frame_times) {
    int64_t gt = t / spec.pt, gh = h / spec.ph, gw = w / spec.pw;
    std::vector<std::array<int64_t, 3>> pos;
    pos.reserve(size_t(gt * gh * gw));
    for (int64_t tt = 0; tt < gt; tt++)
        for (int64_t yy = 0; yy < gh; yy++)
            for (int64_t xx = 0; xx < gw; xx++) {
                int64_t tc = frame_times.empty() ? tt : frame_times[size_t(tt)];
                pos.push_back({tc, yy, xx});
            }
    return pos;
}

template <typename T>
Tensor<T> image_as_video(const Image& img) {
    Tensor<T> v({1, img.dim(0), img.dim(1), img.dim(2)});
    for (int64_t i = 0; i < img.numel(); i++) v.data[size_t(i)] = T(img.data[size_t(i)]);
    return v;
}

}  // namespace

template <typename T>
TokenSequence<T> embed_tokens(const Tensor<T>& patches, Modality modality,
                              const std::vector<std::array<int64_t, 3>>& positions,
                              const CondParams<T>& params, const ModelConfig& cfg,
                              typename EncodeCache<T>::Block* cache) {
    if (modality == Modality::Text)
        fail(ErrorKind::InvalidArgument, "embed_tokens: text goes through encode_text");
    int64_t l = patches.dim(0);
    if (int64_t(positions.size()) != l)
        fail(ErrorKind::Shape, "embed_tokens: positions/patches length mismatch");
    const auto& w = params.patch_w[size_t(modality)];
    const auto& b = params.patch_b[size_t(modality)];
    if (w.numel() == 0) fail(ErrorKind::InvalidArgument, "embed_tokens: unknown modality");
    if (patches.dim(1) != w.dim(1))
        fail(ErrorKind::Shape, "embed_tokens: patch pixel count mismatch");
    TokenSequence<T> seq;
    seq.tokens = Tensor<T>({l, cfg.width});
    seq.tags.assign(size_t(l), modality);
    seq.positions = positions;
    if (l == 0) return seq;
    nn::linear_fwd(patches.ptr(), l, w, b, seq.tokens.ptr());
    add_modality(seq.tokens, modality, params);
    Tensor<T> sinus;
    add_positions(seq.tokens, positions, params, cfg, &sinus);
    if (cache) {
        cache->modality = modality;
        cache->len = l;
        cache->patches = patches;
        cache->sinus = std::move(sinus);
        cache->pre_adapter = seq.tokens;
        cache->adapters.resize(params.adapters[size_t(modality)].size());
    }
    for (size_t i = 0; i < params.adapters[size_t(modality)].size(); i++)
        nn::adapter_forward(params.adapters[size_t(modality)][i], seq.tokens, cfg.heads,
                            cache ? &cache->adapters[i] : nullptr);
    return seq;
}

template <typename T>
TokenSequence<T> encode_text(const std::vector<std::string>& words,
                             const CondParams<T>& params, const ModelConfig& cfg,
                             typename EncodeCache<T>::Block* cache) {
    if (int64_t(words.size()) > cfg.max_text_len)
        fail(ErrorKind::InvalidArgument,
             "text too long: " + std::to_string(words.size()) + " words, limit " +
                 std::to_string(cfg.max_text_len));
    int64_t l = int64_t(words.size());
    int64_t d = cfg.width;
    TokenSequence<T> seq;
    seq.tokens = Tensor<T>({l, d});
    seq.tags.assign(size_t(l), Modality::Text);
    std::vector<int> ids;
    for (int64_t i = 0; i < l; i++) {
        int id = cfg.vocab.id_of(words[size_t(i)]);
        ids.push_back(id);
        seq.positions.push_back({i, 0, 0});
        const T* row = params.vocab_emb.ptr() + id * d;
        std::copy(row, row + d, seq.tokens.ptr() + i * d);
    }
    if (l == 0) return seq;
    add_modality(seq.tokens, Modality::Text, params);
    Tensor<T> sinus;
    add_positions(seq.tokens, seq.positions, params, cfg, &sinus);
    if (cache) {
        cache->modality = Modality::Text;
        cache->len = l;
        cache->token_ids = ids;
        cache->sinus = std::move(sinus);
        cache->pre_adapter = seq.tokens;
        cache->adapters.resize(params.adapters[size_t(Modality::Text)].size());
    }
    for (size_t i = 0; i < params.adapters[size_t(Modality::Text)].size(); i++)
        nn::adapter_forward(params.adapters[size_t(Modality::Text)][i], seq.tokens, cfg.heads,
                            cache ? &cache->adapters[i] : nullptr);
    return seq;
}

template <typename T>
TokenSequence<T> encode_video_tokens(const Tensor<T>& video,
                                     const std::vector<int64_t>& frame_times,
                                     const CondParams<T>& params, const ModelConfig& cfg,
                                     typename EncodeCache<T>::Block* cache) {
    Tensor<T> patches = patch_split(video, cfg.patch);
    auto positions = grid_positions(video.dim(0), video.dim(1), video.dim(2), cfg.patch,
                                    frame_times);
    return embed_tokens(patches, Modality::Video, positions, params, cfg, cache);
}

template <typename T>
TokenSequence<T> encode_bundle(const CondBundle& bundle, const CondParams<T>& params,
                               const ModelConfig& cfg, const ContextFrames* context,
                               EncodeCache<T>* cache) {
    if (int(bundle.garments.size()) > kMaxGarments)
        fail(ErrorKind::InvalidArgument, "too many garments in bundle");
    if (bundle.garments.empty() && !bundle.dropped.garment)
        fail(ErrorKind::InvalidArgument,
             "garment list may be empty only when the garment condition is dropped");

    TokenSequence<T> out;
    auto push_block = [&](TokenSequence<T>&& seq) { out.append(seq); };

    // text
    if (bundle.dropped.text || !bundle.text.has_value()) {
        push_block(null_block(Modality::Text, params.null_text, cfg, cache));
    } else {
        typename EncodeCache<T>::Block blk;
        auto seq = encode_text(*bundle.text, params, cfg, cache ? &blk : nullptr);
        if (cache) cache->blocks.push_back(std::move(blk));
        push_block(std::move(seq));
    }

    // user image (never dropped)
    {
        typename EncodeCache<T>::Block blk;
        Tensor<T> v = image_as_video<T>(bundle.user_image);
        Tensor<T> patches = patch_split(v, cfg.patch);
        auto pos = grid_positions(1, v.dim(1), v.dim(2), cfg.patch, {});
        auto seq = embed_tokens(patches, Modality::User, pos, params, cfg, cache ? &blk : nullptr);
        if (cache) cache->blocks.push_back(std::move(blk));
        push_block(std::move(seq));
    }

    // garments: shared positions, shared modality embedding, no slot index
    if (bundle.dropped.garment) {
        push_block(null_block(Modality::Garment, params.null_garment, cfg, cache));
    } else {
        for (const auto& g : bundle.garments) {
            typename EncodeCache<T>::Block blk;
            Tensor<T> v = image_as_video<T>(g);
            Tensor<T> patches = patch_split(v, cfg.patch);
            auto pos = grid_positions(1, v.dim(1), v.dim(2), cfg.patch, {});
            auto seq = embed_tokens(patches, Modality::Garment, pos, params, cfg,
                                    cache ? &blk : nullptr);
            if (cache) cache->blocks.push_back(std::move(blk));
            push_block(std::move(seq));
        }
    }

    // motion
    if (bundle.dropped.motion || !bundle.motion_ref.has_value()) {
        push_block(null_block(Modality::Motion, params.null_motion, cfg, cache));
    } else {
        typename EncodeCache<T>::Block blk;
        Tensor<T> v = bundle.motion_ref->pixels.template cast<T>();
        Tensor<T> patches = patch_split(v, cfg.patch);
        auto pos = grid_positions(v.dim(0), v.dim(1), v.dim(2), cfg.patch, {});
        auto seq = embed_tokens(patches, Modality::Motion, pos, params, cfg,
                                cache ? &blk : nullptr);
        if (cache) cache->blocks.push_back(std::move(blk));
        push_block(std::move(seq));
    }

    // refiner context frames
    if (context && !context->frames.empty()) {
        if (context->frames.size() != context->times.size())
            fail(ErrorKind::InvalidArgument, "context frames/times length mismatch");
        for (size_t i = 0; i < context->frames.size(); i++) {
            typename EncodeCache<T>::Block blk;
            Tensor<T> v = image_as_video<T>(context->frames[i]);
            Tensor<T> patches = patch_split(v, cfg.patch);
            auto pos = grid_positions(1, v.dim(1), v.dim(2), cfg.patch, {context->times[i]});
            auto seq = embed_tokens(patches, Modality::Context, pos, params, cfg,
                                    cache ? &blk : nullptr);
            if (cache) cache->blocks.push_back(std::move(blk));
            push_block(std::move(seq));
        }
    }
    return out;
}

int64_t bundle_token_count(const CondBundle& bundle, const ModelConfig& cfg) {
    int64_t l = 0;
    if (bundle.dropped.text || !bundle.text.has_value()) l += 1;
    else l += int64_t(bundle.text->size());
    l += patch_count(1, bundle.user_image.dim(0), bundle.user_image.dim(1), cfg.patch);
    if (bundle.dropped.garment) l += 1;
    else
        for (const auto& g : bundle.garments) l += patch_count(1, g.dim(0), g.dim(1), cfg.patch);
    if (bundle.dropped.motion || !bundle.motion_ref.has_value()) l += 1;
    else
        l += patch_count(bundle.motion_ref->frames(), bundle.motion_ref->height(),
                         bundle.motion_ref->width(), cfg.patch);
    return l;
}

// ---------------------------------------------------------------------------
// backward

template <typename T>
void encode_block_backward(const CondParams<T>& params, CondParams<T>& grads,
                           const typename EncodeCache<T>::Block& block,
                           const ModelConfig& cfg, const T* dtok) {
    int64_t d = cfg.width;
    if (block.is_null) {
        Tensor<T>* gnull = nullptr;
        if (block.modality == Modality::Text) gnull = &grads.null_text;
        else if (block.modality == Modality::Garment) gnull = &grads.null_garment;
        else if (block.modality == Modality::Motion) gnull = &grads.null_motion;
        else fail(ErrorKind::InvalidArgument, "null block of unexpected modality");
        for (int64_t c = 0; c < d; c++) gnull->data[size_t(c)] += dtok[c];
        return;
    }
    int64_t l = block.len;
    if (l == 0) return;
    Tensor<T> dx({l, d});
    std::copy(dtok, dtok + l * d, dx.ptr());
    const auto& adapters = params.adapters[size_t(block.modality)];
    auto& gadapters = grads.adapters[size_t(block.modality)];
    for (size_t i = adapters.size(); i-- > 0;)
        nn::adapter_backward(adapters[i], gadapters[i], block.adapters[i], dx, cfg.heads);
    // dx is now the gradient at (content + modality + position) sum
    // position projection: gW_pos += dx^T sinus
    gemm(true, false, d, cfg.pos_dim(), l, T(1), dx.ptr(), d, block.sinus.ptr(), cfg.pos_dim(),
         T(1), grads.pos_proj.ptr(), cfg.pos_dim());
    // modality embedding
    T* gmod = grads.modality_emb.ptr() + int(block.modality) * d;
    for (int64_t i = 0; i < l; i++)
        for (int64_t c = 0; c < d; c++) gmod[c] += dx.data[size_t(i * d + c)];
    if (block.modality == Modality::Text) {
        for (int64_t i = 0; i < l; i++) {
            T* grow = grads.vocab_emb.ptr() + block.token_ids[size_t(i)] * d;
            for (int64_t c = 0; c < d; c++) grow[c] += dx.data[size_t(i * d + c)];
        }
    } else {
        auto& gw = grads.patch_w[size_t(block.modality)];
        auto& gb = grads.patch_b[size_t(block.modality)];
        nn::linear_bwd(block.patches.ptr(), dx.ptr(), l, params.patch_w[size_t(block.modality)],
                   gw, gb, (T*)nullptr);
    }
}

template <typename T>
void encode_backward(const CondParams<T>& params, CondParams<T>& grads,
                     const EncodeCache<T>& cache, const ModelConfig& cfg,
                     const Tensor<T>& dtokens) {
    int64_t off = 0;
    for (const auto& block : cache.blocks) {
        int64_t len = block.is_null ? 1 : block.len;
        encode_block_backward(params, grads, block, cfg, dtokens.ptr() + off * cfg.width);
        off += len;
    }
    if (off != dtokens.dim(0))
        fail(ErrorKind::Shape, "encode_backward: cache/gradient length mismatch");
}

// explicit instantiations
template TokenSequence<float> embed_tokens(const Tensor<float>&, Modality,
                                           const std::vector<std::array<int64_t, 3>>&,
                                           const CondParams<float>&, const ModelConfig&,
                                           EncodeCache<float>::Block*);
template TokenSequence<double> embed_tokens(const Tensor<double>&, Modality,
                                            const std::vector<std::array<int64_t, 3>>&,
                                            const CondParams<double>&, const ModelConfig&,
                                            EncodeCache<double>::Block*);
template TokenSequence<float> encode_text(const std::vector<std::string>&,
                                          const CondParams<float>&, const ModelConfig&,
                                          EncodeCache<float>::Block*);
template TokenSequence<double> encode_text(const std::vector<std::string>&,
                                           const CondParams<double>&, const ModelConfig&,
                                           EncodeCache<double>::Block*);
template TokenSequence<float> encode_video_tokens(const Tensor<float>&,
                                                  const std::vector<int64_t>&,
                                                  const CondParams<float>&, const ModelConfig&,
                                                  EncodeCache<float>::Block*);
template TokenSequence<double> encode_video_tokens(const Tensor<double>&,
                                                   const std::vector<int64_t>&,
                                                   const CondParams<double>&, const ModelConfig&,
                                                   EncodeCache<double>::Block*);
template TokenSequence<float> encode_bundle(const CondBundle&, const CondParams<float>&,
                                            const ModelConfig&, const ContextFrames*,
                                            EncodeCache<float>*);
template TokenSequence<double> encode_bundle(const CondBundle&, const CondParams<double>&,
                                             const ModelConfig&, const ContextFrames*,
                                             EncodeCache<double>*);
template void encode_backward(const CondParams<float>&, CondParams<float>&,
                              const EncodeCache<float>&, const ModelConfig&,
                              const Tensor<float>&);
template void encode_backward(const CondParams<double>&, CondParams<double>&,
                              const EncodeCache<double>&, const ModelConfig&,
                              const Tensor<double>&);
template void encode_block_backward(const CondParams<float>&, CondParams<float>&,
                                    const EncodeCache<float>::Block&, const ModelConfig&,
                                    const float*);
template void encode_block_backward(const CondParams<double>&, CondParams<double>&,
                                    const EncodeCache<double>::Block&, const ModelConfig&,
                                    const double*);

}  // namespace tryon
