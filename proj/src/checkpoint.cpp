#include "tryon/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "tryon/util.hpp"

namespace tryon {

using nlohmann::json;

void AdamW::init_like(const nn::ParamRegistry<float>& reg) {
    m.clear();
    v.clear();
    for (const auto& [name, t] : reg.entries) {
        m.emplace_back(t->shape);
        v.emplace_back(t->shape);
    }
    step = 0;
}

void AdamW::update(const nn::ParamRegistry<float>& params, const nn::ParamRegistry<float>& grads,
                   double lr) {
    if (m.size() != params.entries.size())
        fail(ErrorKind::InvalidArgument, "optimizer state does not match parameter registry");
    step++;
    double bc1 = 1.0 - std::pow(beta1, double(step));
    double bc2 = 1.0 - std::pow(beta2, double(step));
    for (size_t i = 0; i < params.entries.size(); i++) {
        Tensor<float>& p = *params.entries[i].second;
        const Tensor<float>& g = *grads.entries[i].second;
        Tensor<float>& mi = m[i];
        Tensor<float>& vi = v[i];
        for (int64_t j = 0; j < p.numel(); j++) {
            double gj = double(g.data[size_t(j)]);
            double mj = beta1 * double(mi.data[size_t(j)]) + (1.0 - beta1) * gj;
            double vj = beta2 * double(vi.data[size_t(j)]) + (1.0 - beta2) * gj * gj;
            mi.data[size_t(j)] = float(mj);
            vi.data[size_t(j)] = float(vj);
            double mhat = mj / bc1;
            double vhat = vj / bc2;
            double upd = mhat / (std::sqrt(vhat) + eps) + weight_decay * double(p.data[size_t(j)]);
            p.data[size_t(j)] = float(double(p.data[size_t(j)]) - lr * upd);
        }
    }
}

namespace {

json model_config_json(const ModelConfig& cfg) {
    json j;
    j["width"] = cfg.width;
    j["depth"] = cfg.depth;
    j["heads"] = cfg.heads;
    j["patch"] = {cfg.patch.pt, cfg.patch.ph, cfg.patch.pw};
    j["adapter_depth"] = cfg.adapter_depth;
    j["max_text_len"] = cfg.max_text_len;
    j["vocab"] = cfg.vocab.words;
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.width = j.at("width").get<int64_t>();
    cfg.depth = j.at("depth").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.patch.pt = j.at("patch").at(0).get<int64_t>();
    cfg.patch.ph = j.at("patch").at(1).get<int64_t>();
    cfg.patch.pw = j.at("patch").at(2).get<int64_t>();
    cfg.adapter_depth = j.at("adapter_depth").get<int>();
    cfg.max_text_len = j.at("max_text_len").get<int64_t>();
    cfg.vocab = Vocabulary::from_words(j.at("vocab").get<std::vector<std::string>>());
    return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, Checkpoint& ckpt) {
    std::filesystem::create_directories(path);
    nn::ParamRegistry<float> reg = make_registry(ckpt.model);
    if (!ckpt.opt.initialized()) ckpt.opt.init_like(reg);

    json manifest;
    manifest["format_version"] = ckpt.format_version;
    manifest["config_hash"] = ckpt.config_hash;
    manifest["stage"] = ckpt.stage;
    manifest["step"] = ckpt.step;
    manifest["cursors"] = ckpt.cursors;
    manifest["rng"] = ckpt.rng.state_hex();
    manifest["adam_step"] = ckpt.opt.step;
    manifest["model_config"] = model_config_json(ckpt.model.config);

    json tensors = json::array();
    int64_t offset = 0;
    auto add_entry = [&](const std::string& name, const Tensor<float>& t) {
        int64_t nbytes = t.numel() * int64_t(sizeof(float));
        tensors.push_back({{"name", name}, {"shape", t.shape}, {"dtype", "f32"},
                           {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
    };
    for (const auto& [name, t] : reg.entries) add_entry(name, *t);
    for (size_t i = 0; i < reg.entries.size(); i++) add_entry("opt.m." + reg.entries[i].first, ckpt.opt.m[i]);
    for (size_t i = 0; i < reg.entries.size(); i++) add_entry("opt.v." + reg.entries[i].first, ckpt.opt.v[i]);
    manifest["tensors"] = tensors;
    write_text_file(path + "/manifest.json", manifest.dump(2) + "\n");

    std::ofstream bin(path + "/tensors.bin", std::ios::binary | std::ios::trunc);
    if (!bin) fail(ErrorKind::Io, "cannot write " + path + "/tensors.bin");
    auto write_tensor = [&](const Tensor<float>& t) {
        bin.write(reinterpret_cast<const char*>(t.ptr()),
                  std::streamsize(t.numel() * int64_t(sizeof(float))));
    };
    for (const auto& [name, t] : reg.entries) write_tensor(*t);
    for (const auto& t : ckpt.opt.m) write_tensor(t);
    for (const auto& t : ckpt.opt.v) write_tensor(t);
    if (!bin) fail(ErrorKind::Io, "write failed: " + path + "/tensors.bin");
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_config_hash) {
    if (!std::filesystem::exists(path + "/manifest.json"))
        fail(ErrorKind::Format, "checkpoint manifest not found: " + path);
    json manifest;
    try {
        manifest = json::parse(read_text_file(path + "/manifest.json"));
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("bad checkpoint manifest: ") + e.what());
    }
    int version = manifest.at("format_version").get<int>();
    if (version != 1)
        fail(ErrorKind::Version, "unsupported checkpoint format version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.format_version = version;
    ckpt.config_hash = manifest.at("config_hash").get<std::string>();
    if (!expected_config_hash.empty() && ckpt.config_hash != expected_config_hash)
        fail(ErrorKind::Compatibility,
             "checkpoint config hash mismatch: checkpoint " + ckpt.config_hash +
                 " vs expected " + expected_config_hash);
    ckpt.stage = manifest.at("stage").get<std::string>();
    ckpt.step = manifest.at("step").get<int64_t>();
    ckpt.cursors = manifest.at("cursors").get<std::map<std::string, int64_t>>();
    ckpt.rng = Rng::from_state_hex(manifest.at("rng").get<std::string>());

    ModelConfig cfg = model_config_from_json(manifest.at("model_config"));
    ckpt.model = init_model<float>(cfg, 0);
    nn::ParamRegistry<float> reg = make_registry(ckpt.model);
    ckpt.opt.init_like(reg);
    ckpt.opt.step = manifest.at("adam_step").get<int64_t>();

    auto bytes = read_binary_file(path + "/tensors.bin");
    int64_t expected_total = 0;
    for (const auto& tj : manifest.at("tensors"))
        expected_total += tj.at("nbytes").get<int64_t>();
    if (int64_t(bytes.size()) != expected_total)
        fail(ErrorKind::Integrity,
             "tensors.bin size mismatch: " + std::to_string(bytes.size()) + " bytes, manifest " +
                 std::to_string(expected_total));

    auto find_target = [&](const std::string& name) -> Tensor<float>* {
        if (name.rfind("opt.m.", 0) == 0) {
            std::string base = name.substr(6);
            for (size_t i = 0; i < reg.entries.size(); i++)
                if (reg.entries[i].first == base) return &ckpt.opt.m[i];
            return nullptr;
        }
        if (name.rfind("opt.v.", 0) == 0) {
            std::string base = name.substr(6);
            for (size_t i = 0; i < reg.entries.size(); i++)
                if (reg.entries[i].first == base) return &ckpt.opt.v[i];
            return nullptr;
        }
        return reg.find(name);
    };

    size_t loaded = 0;
    for (const auto& tj : manifest.at("tensors")) {
        std::string name = tj.at("name").get<std::string>();
        Tensor<float>* dst = find_target(name);
        if (!dst) fail(ErrorKind::Format, "checkpoint tensor has no home: " + name);
        auto shape = tj.at("shape").get<std::vector<int64_t>>();
        if (shape != dst->shape)
            fail(ErrorKind::Compatibility, "checkpoint tensor shape mismatch: " + name);
        int64_t off = tj.at("offset").get<int64_t>();
        int64_t nbytes = tj.at("nbytes").get<int64_t>();
        if (nbytes != dst->numel() * int64_t(sizeof(float)))
            fail(ErrorKind::Integrity, "checkpoint tensor byte count mismatch: " + name);
        if (off < 0 || off + nbytes > int64_t(bytes.size()))
            fail(ErrorKind::Integrity, "checkpoint tensor out of range: " + name);
        std::memcpy(dst->ptr(), bytes.data() + off, size_t(nbytes));
        loaded++;
    }
    if (loaded != reg.entries.size() * 3)
        fail(ErrorKind::Integrity, "checkpoint is missing tensors");
    for (const auto& [name, t] : reg.entries)
        if (!t->all_finite()) fail(ErrorKind::Numeric, "checkpoint tensor not finite: " + name);
    return ckpt;
}

std::string params_hash(Model<float>& model) {
    nn::ParamRegistry<float> reg = make_registry(model);
    Sha256 h;
    for (const auto& [name, t] : reg.entries) {
        h.update(name);
        h.update(t->ptr(), size_t(t->numel()) * sizeof(float));
    }
    return h.hex_digest();
}

std::string shared_params_hash(Model<float>& a, Model<float>& b) {
    nn::ParamRegistry<float> ra = make_registry(a), rb = make_registry(b);
    Sha256 h;
    for (const auto& [name, t] : ra.entries) {
        if (!rb.find(name)) continue;
        h.update(name);
        h.update(t->ptr(), size_t(t->numel()) * sizeof(float));
    }
    return h.hex_digest();
}

}  // namespace tryon
