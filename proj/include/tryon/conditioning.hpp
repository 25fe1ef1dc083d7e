#ifndef TRYON_CONDITIONING_HPP
#define TRYON_CONDITIONING_HPP

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tryon/nn.hpp"
#include "tryon/rng.hpp"
#include "tryon/video.hpp"

namespace tryon {

enum class Modality : int { Video = 0, Text, User, Garment, Motion, Context };
constexpr int kNumModalities = 6;
const char* modality_name(Modality m);

struct PatchSpec {
    int64_t pt = 1, ph = 8, pw = 8;
    int64_t pixels_per_patch(int64_t channels = 3) const { return pt * ph * pw * channels; }
};

// Raw patchification: (T,H,W,C) -> (L, pt*ph*pw*C), patch-major in (t,y,x).
template <typename T>
Tensor<T> patch_split(const Tensor<T>& video, const PatchSpec& spec);
template <typename T>
Tensor<T> patch_join(const Tensor<T>& patches, const std::vector<int64_t>& video_shape,
                     const PatchSpec& spec);

int64_t patch_count(int64_t t, int64_t h, int64_t w, const PatchSpec& spec);

struct Vocabulary {
    std::vector<std::string> words;
    std::map<std::string, int> index;

    static Vocabulary from_words(std::vector<std::string> words);
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;
    int id_of(const std::string& word) const;  // Vocabulary error naming the word
    size_t size() const { return words.size(); }
    std::string content_hash() const;
};

// The built-in caption vocabulary for the sprite benchmark.
Vocabulary builtin_vocabulary();

template <typename T>
struct TokenSequence {
    Tensor<T> tokens;  // (L, D)
    std::vector<Modality> tags;
    std::vector<std::array<int64_t, 3>> positions;  // (t, y, x) per token

    int64_t length() const { return tokens.rank() == 2 ? tokens.dim(0) : 0; }
    void append(const TokenSequence& other);
};

struct CondBundle {
    std::optional<std::vector<std::string>> text;
    Image user_image;
    std::vector<Image> garments;  // ordered, up to kMaxGarments
    std::optional<VideoTensor> motion_ref;
    struct Dropped {
        bool text = false, garment = false, motion = false;
    } dropped;
};

constexpr int kMaxGarments = 3;

struct DropoutRates {
    double text = 0, garment = 0, motion = 0;
};

// Marks optional modalities dropped with the given probabilities; the user
// image is the identity anchor and is never dropped. Draw order: text,
// garment, motion.
CondBundle dropout_conditions(const CondBundle& bundle, const DropoutRates& rates, Rng& rng);

struct ModelConfig {
    int64_t width = 128;
    int depth = 6;
    int heads = 4;
    PatchSpec patch;
    int adapter_depth = 1;
    int64_t max_text_len = 16;
    Vocabulary vocab;

    int64_t pos_dim() const { return 3 * (2 * (width / 6)); }
    std::string canonical_json() const;
};

// refiner context: frames conditioned on verbatim, with explicit chunk-local
// time coordinates
struct ContextFrames {
    std::vector<Image> frames;
    std::vector<int64_t> times;
};

template <typename T>
struct CondParams {
    // patch embeddings for the pixel modalities, indexed by Modality
    // (Text uses the vocabulary table instead)
    std::array<Tensor<T>, kNumModalities> patch_w, patch_b;
    Tensor<T> modality_emb;  // (kNumModalities, D)
    Tensor<T> null_text, null_garment, null_motion;  // (D) learned absent markers
    Tensor<T> vocab_emb;  // (V, D)
    Tensor<T> pos_proj;   // (D, pos_dim)
    std::array<std::vector<nn::AdapterParams<T>>, kNumModalities> adapters;

    void init(const ModelConfig& cfg, Rng& rng);
    void register_params(nn::ParamRegistry<T>& reg);
};

// factorized sinusoidal embedding of integer (t,y,x): per-axis interleaved
// [sin, cos] frequency bands, concatenated
template <typename T>
void factorized_position(const std::array<int64_t, 3>& pos, int64_t pos_dim, T* out);

template <typename T>
struct EncodeCache {
    struct Block {
        Modality modality = Modality::Video;
        int64_t start = 0, len = 0;
        bool is_null = false;
        Tensor<T> patches;          // (len, P) for pixel modalities
        std::vector<int> token_ids; // text
        Tensor<T> sinus;            // (len, pos_dim)
        Tensor<T> pre_adapter;      // block content before its adapters
        std::vector<nn::AdapterCache<T>> adapters;
    };
    std::vector<Block> blocks;
};

template <typename T>
TokenSequence<T> embed_tokens(const Tensor<T>& patches, Modality modality,
                              const std::vector<std::array<int64_t, 3>>& positions,
                              const CondParams<T>& params, const ModelConfig& cfg,
                              typename EncodeCache<T>::Block* cache = nullptr);

template <typename T>
TokenSequence<T> encode_text(const std::vector<std::string>& words,
                             const CondParams<T>& params, const ModelConfig& cfg,
                             typename EncodeCache<T>::Block* cache = nullptr);

// Fixed block order: [text | user | garment_1..G | motion | context?].
// Dropped modalities contribute exactly their learned null token. All
// garment blocks share spatial positions and the single garment modality
// embedding (no slot identity).
template <typename T>
TokenSequence<T> encode_bundle(const CondBundle& bundle, const CondParams<T>& params,
                               const ModelConfig& cfg,
                               const ContextFrames* context = nullptr,
                               EncodeCache<T>* cache = nullptr);

// Video tokens run through the same machinery with modality Video.
template <typename T>
TokenSequence<T> encode_video_tokens(const Tensor<T>& video,
                                     const std::vector<int64_t>& frame_times,
                                     const CondParams<T>& params, const ModelConfig& cfg,
                                     typename EncodeCache<T>::Block* cache = nullptr);

// Backward through encode_bundle / encode_video_tokens given d(tokens).
template <typename T>
void encode_backward(const CondParams<T>& params, CondParams<T>& grads,
                     const EncodeCache<T>& cache, const ModelConfig& cfg,
                     const Tensor<T>& dtokens);
template <typename T>
void encode_block_backward(const CondParams<T>& params, CondParams<T>& grads,
                           const typename EncodeCache<T>::Block& block,
                           const ModelConfig& cfg, const T* dtok);

int64_t bundle_token_count(const CondBundle& bundle, const ModelConfig& cfg);

extern template struct CondParams<float>;
extern template struct CondParams<double>;

}  // namespace tryon

#endif
