#ifndef TRYON_CHECKPOINT_HPP
#define TRYON_CHECKPOINT_HPP

#include <map>
#include <string>

#include "tryon/backbone.hpp"

namespace tryon {

// AdamW with decoupled weight decay; moment buffers are aligned with the
// parameter registry order and serialized into checkpoints.
struct AdamW {
    double beta1 = 0.9, beta2 = 0.95, eps = 1e-8, weight_decay = 0.01;
    int64_t step = 0;
    std::vector<Tensor<float>> m, v;

    void init_like(const nn::ParamRegistry<float>& reg);
    void update(const nn::ParamRegistry<float>& params, const nn::ParamRegistry<float>& grads,
                double lr);
    bool initialized() const { return !m.empty(); }
};

struct Checkpoint {
    int format_version = 1;
    Model<float> model;
    AdamW opt;
    std::string stage;
    int64_t step = 0;
    std::map<std::string, int64_t> cursors;  // per-pool data cursors
    Rng rng{0};
    std::string config_hash;
};

// Directory layout: manifest.json (names, shapes, offsets, config hash,
// version, rng, cursors) + tensors.bin (raw little-endian f32, row-major,
// concatenated at the manifest offsets).
void save_checkpoint(const std::string& path, Checkpoint& ckpt);

// expected_config_hash, when nonempty, is checked against the stored hash
// (compatibility error on mismatch). Truncated or oversized tensors.bin is
// an integrity error.
Checkpoint load_checkpoint(const std::string& path,
                           const std::string& expected_config_hash = "");

// Order-stable hash over every parameter tensor's bytes.
std::string params_hash(Model<float>& model);
// Hash restricted to tensor names present in both models.
std::string shared_params_hash(Model<float>& a, Model<float>& b);

}  // namespace tryon

#endif
