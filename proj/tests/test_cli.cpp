#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "tryon/cli.hpp"
#include "tryon/sprite_world.hpp"
#include "tryon/util.hpp"

using namespace tryon;
namespace fs = std::filesystem;

namespace {

// self-contained tiny run config written to a scratch directory
std::string write_tiny_config(const std::string& dir) {
    nlohmann::json j;
    j["seed"] = 7;
    j["model"] = {{"width", 16}, {"depth", 1}, {"heads", 2}, {"patch", {1, 8, 8}},
                  {"adapter_depth", 1}, {"max_text_len", 16}, {"vocab_file", ""}};
    j["dataset"] = {{"avatars", 1},
                    {"garments_per_type", 1},
                    {"train_motions", 2},
                    {"eval_motions", 1},
                    {"sets_per_avatar", 3},
                    {"eval_sets_per_avatar", 1},
                    {"frames", 5},
                    {"fps", 8.0},
                    {"resolution", {32, 48}},
                    {"include_reconstruction", true},
                    {"extra_holdout_fraction", 0.0},
                    {"highfps", true}};
    j["stages"] = nlohmann::json::array();
    j["stages"].push_back({{"name", "warmup_image"}, {"resolution", {32, 48}}, {"frames", 1},
                           {"steps", 2}, {"batch_size", 2}, {"lr", 1e-3},
                           {"image_mix_ratio", 1.0}, {"conditions", {"text", "garment"}},
                           {"mask_loss_weight", 0.1},
                           {"dropout", {{"text", 0.1}, {"garment", 0.1}, {"motion", 0.0}}}});
    j["stages"].push_back({{"name", "video_base"}, {"resolution", {32, 48}}, {"frames", 5},
                           {"steps", 3}, {"batch_size", 2}, {"lr", 1e-3},
                           {"image_mix_ratio", 0.25},
                           {"conditions", {"text", "garment", "motion"}},
                           {"mask_loss_weight", 0.0},
                           {"dropout", {{"text", 0.1}, {"garment", 0.05}, {"motion", 0.05}}}});
    j["stages"].push_back({{"name", "refiner"}, {"resolution", {32, 48}}, {"frames", 2},
                           {"steps", 2}, {"batch_size", 2}, {"lr", 1e-3},
                           {"image_mix_ratio", 0.0}, {"conditions", {"text", "garment"}},
                           {"mask_loss_weight", 0.0},
                           {"dropout", {{"text", 0.0}, {"garment", 0.0}, {"motion", 0.0}}}});
    j["sample"] = {{"steps", 2}, {"guidance", 1.0}};
    j["judge"] = {{"client", "stub"}, {"n", 5}};
    std::string path = dir + "/config.json";
    write_text_file(path, j.dump(2));
    return path;
}

std::string scratch_dir(const std::string& name) {
    std::string dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("config validation rejects unknown keys and bad values") {
        std::string dir = scratch_dir("tryon_cli_cfg");
        std::string path = write_tiny_config(dir);
        RunConfig cfg = load_run_config(path);
        CHECK(cfg.model.width == 16);
        CHECK(cfg.stages.stages.size() == 3);
        CHECK(cfg.judge.n == 5);

        // unknown top-level key
        nlohmann::json j = nlohmann::json::parse(read_text_file(path));
        j["banana"] = 1;
        write_text_file(dir + "/bad1.json", j.dump());
        try {
            (void)load_run_config(dir + "/bad1.json");
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Config);
            CHECK(std::string(e.what()).find("banana") != std::string::npos);
        }

        // unknown nested key
        j = nlohmann::json::parse(read_text_file(path));
        j["model"]["banana"] = 1;
        write_text_file(dir + "/bad2.json", j.dump());
        CHECK_THROWS_AS((void)load_run_config(dir + "/bad2.json"), Error);

        // invalid stage plan (warmup without mask weight)
        j = nlohmann::json::parse(read_text_file(path));
        j["stages"][0]["mask_loss_weight"] = 0.0;
        write_text_file(dir + "/bad3.json", j.dump());
        CHECK_THROWS_AS((void)load_run_config(dir + "/bad3.json"), Error);

        // --set overrides
        RunConfig patched = load_run_config(path, {"seed=99", "sample.steps=4"});
        CHECK(patched.seed == 99);
        CHECK(patched.sample.steps == 4);
    }

    TEST_CASE("usage errors exit with code 2") {
        std::string dir = scratch_dir("tryon_cli_usage");
        std::string cfg = write_tiny_config(dir);
        CHECK(run_command({"--config", cfg, "frobnicate"}) == 2);
        // sample without --checkpoint
        CHECK(run_command({"--config", cfg, "sample", "--dataset", dir, "--triplet", "0"}) == 2);
        // config schema violation fails fast with 2
        write_text_file(dir + "/broken.json", "{\"stages\": [], \"oops\": 1}");
        CHECK(run_command({"--config", dir + "/broken.json", "gen-data", "--out", dir + "/x"}) ==
              2);
    }

    TEST_CASE("gen-data is deterministic for a fixed seed") {
        std::string dir = scratch_dir("tryon_cli_gen");
        std::string cfg = write_tiny_config(dir);
        CHECK(run_command({"--config", cfg, "gen-data", "--seed", "7",
                           "--out", dir + "/d1"}) == 0);
        CHECK(run_command({"--config", cfg, "gen-data", "--seed", "7",
                           "--out", dir + "/d2"}) == 0);
        CHECK(sprite::dataset_content_hash(dir + "/d1") ==
              sprite::dataset_content_hash(dir + "/d2"));
        // different seed, different content
        CHECK(run_command({"--config", cfg, "gen-data", "--seed", "8",
                           "--out", dir + "/d3"}) == 0);
        CHECK(sprite::dataset_content_hash(dir + "/d1") !=
              sprite::dataset_content_hash(dir + "/d3"));
    }

    TEST_CASE("the documented pipeline runs end to end in one process") {
        std::string dir = scratch_dir("tryon_cli_pipeline");
        std::string cfg = write_tiny_config(dir);
        std::string data = dir + "/data";
        std::string train_dir = dir + "/train";
        std::string sample_dir = dir + "/sample";
        std::string refined_dir = dir + "/refined";

        CHECK(run_command({"--config", cfg, "gen-data", "--out", data}) == 0);

        // pick a held-out triplet for generation
        sprite::Dataset ds = sprite::load_dataset(data);
        int held = -1;
        for (const auto& t : ds.triplets)
            if (t.split == "held_out") held = t.id;
        REQUIRE(held >= 0);

        CHECK(run_command({"--config", cfg, "train", "--dataset", data, "--mode", "staged",
                           "--out", train_dir}) == 0);
        CHECK(fs::exists(train_dir + "/checkpoints/final/manifest.json"));
        CHECK(fs::exists(train_dir + "/checkpoints/refiner/manifest.json"));
        CHECK(fs::exists(train_dir + "/train_log.ndjson"));

        CHECK(run_command({"--config", cfg, "sample", "--checkpoint",
                           train_dir + "/checkpoints/final", "--dataset", data, "--triplet",
                           std::to_string(held), "--seed", "3", "--out", sample_dir}) == 0);
        CHECK(fs::exists(sample_dir + "/video.json"));
        CHECK(fs::exists(sample_dir + "/frames/00000.png"));

        CHECK(run_command({"--config", cfg, "refine", "--checkpoint",
                           train_dir + "/checkpoints/refiner", "--dataset", data, "--video",
                           sample_dir, "--triplet", std::to_string(held), "--seed", "4",
                           "--out", refined_dir}) == 0);
        nlohmann::json vj = nlohmann::json::parse(read_text_file(refined_dir + "/video.json"));
        CHECK(vj.at("shape").at(0).get<int64_t>() == 13);  // 3*5 - 2

        CHECK(run_command({"--config", cfg, "eval", "--dataset", data, "--run", sample_dir,
                           "--out", dir + "/metrics.json"}) == 0);
        nlohmann::json metrics = nlohmann::json::parse(read_text_file(dir + "/metrics.json"));
        CHECK(metrics.at("per_sample").size() == 1);
        CHECK(metrics.at("aggregate").contains("mean_psnr"));

        CHECK(run_command({"--config", cfg, "judge", "--dataset", data, "--run", sample_dir}) ==
              0);
        CHECK(fs::exists(sample_dir + "/grades.json"));
        nlohmann::json grades = nlohmann::json::parse(read_text_file(sample_dir + "/grades.json"));
        CHECK(grades.at("n").get<int>() == 5);
        CHECK(grades.at("raw").size() == 5);

        CHECK(run_command({"--config", cfg, "report", "--eval", dir + "/metrics.json", "--out",
                           dir + "/report"}) == 0);
        CHECK(fs::exists(dir + "/report/summary.json"));
        CHECK(fs::exists(dir + "/report/per_sample.csv"));
    }

    TEST_CASE("sample runs are reproducible for a fixed seed") {
        std::string dir = scratch_dir("tryon_cli_repro");
        std::string cfg = write_tiny_config(dir);
        std::string data = dir + "/data";
        CHECK(run_command({"--config", cfg, "gen-data", "--out", data}) == 0);
        sprite::Dataset ds = sprite::load_dataset(data);
        int held = -1;
        for (const auto& t : ds.triplets)
            if (t.split == "held_out") held = t.id;

        // steps=0 training gives a valid freshly initialized checkpoint
        CHECK(run_command({"--config", cfg, "--set", "stages.0.steps=0",
                           "--set", "stages.1.steps=0", "--set", "stages.2.steps=0", "train",
                           "--dataset", data, "--mode", "staged", "--out", dir + "/t0"}) == 0);
        for (const char* out : {"/s1", "/s2"})
            CHECK(run_command({"--config", cfg, "sample", "--checkpoint",
                               dir + "/t0/checkpoints/final", "--dataset", data, "--triplet",
                               std::to_string(held), "--seed", "11",
                               "--out", dir + out}) == 0);
        auto m1 = nlohmann::json::parse(read_text_file(dir + "/s1/manifest.json"));
        auto m2 = nlohmann::json::parse(read_text_file(dir + "/s2/manifest.json"));
        CHECK(m1.at("content_hash") == m2.at("content_hash"));
    }
}
