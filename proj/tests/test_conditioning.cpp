#include <doctest.h>

#include <cmath>

#include "tryon/conditioning.hpp"
#include "tryon/util.hpp"

using namespace tryon;

namespace {

ModelConfig tiny_config(int64_t width = 32) {
    ModelConfig cfg;
    cfg.width = width;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.adapter_depth = 1;
    cfg.max_text_len = 16;
    cfg.vocab = builtin_vocabulary();
    return cfg;
}

Image flat_image(int64_t h, int64_t w, float v) {
    Image img({h, w, 3});
    img.fill(v);
    return img;
}

CondBundle demo_bundle(int64_t h = 32, int64_t w = 48) {
    CondBundle b;
    b.text = std::vector<std::string>{"wear", "red", "top"};
    b.user_image = flat_image(h, w, 0.25f);
    b.garments = {flat_image(h, w, 0.5f), flat_image(h, w, 0.75f)};
    VideoTensor motion(9, h, w, 3, 8.0);
    for (int64_t i = 0; i < motion.pixels.numel(); i++)
        motion.pixels.data[size_t(i)] = float((i * 2654435761u % 256)) / 255.0f;
    b.motion_ref = motion;
    return b;
}

}  // namespace

TEST_SUITE("conditioning") {
    TEST_CASE("patch split/join arithmetic and inverse") {
        PatchSpec spec;
        Tensor<float> video({9, 32, 48, 3});
        Rng rng(5);
        rng.fill_normal(video.ptr(), size_t(video.numel()));
        Tensor<float> patches = patch_split(video, spec);
        CHECK(patches.dim(0) == 216);  // 9 * 4 * 6
        CHECK(patches.dim(1) == 192);  // 8*8*3
        Tensor<float> back = patch_join(patches, video.shape, spec);
        CHECK(back.data == video.data);

        PatchSpec bad{2, 8, 8};
        CHECK_THROWS_AS((void)patch_split(video, bad), Error);
        try {
            (void)patch_split(video, bad);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Shape);
        }
    }

    TEST_CASE("factorized position at origin follows the sin/cos pattern") {
        ModelConfig cfg = tiny_config(36);  // pos_dim = 3 * 12
        int64_t pd = cfg.pos_dim();
        std::vector<double> out(static_cast<size_t>(pd));
        factorized_position<double>({0, 0, 0}, pd, out.data());
        for (int64_t i = 0; i < pd; i += 2) {
            CHECK(out[size_t(i)] == doctest::Approx(0.0));      // sin 0
            CHECK(out[size_t(i) + 1] == doctest::Approx(1.0));  // cos 0
        }
        // nonzero coordinates move every axis band
        std::vector<double> moved(static_cast<size_t>(pd));
        factorized_position<double>({3, 2, 1}, pd, moved.data());
        CHECK(moved != out);
    }

    TEST_CASE("embed_tokens purity and modality separation") {
        ModelConfig cfg = tiny_config();
        Rng rng(1);
        CondParams<float> params;
        params.init(cfg, rng);

        Tensor<float> patches({2, cfg.patch.pixels_per_patch()});
        Rng prng(2);
        prng.fill_normal(patches.ptr(), size_t(patches.numel()));
        // identical patch content and position
        for (int64_t c = 0; c < patches.dim(1); c++)
            patches.at({1, c}) = patches.at({0, c});
        std::vector<std::array<int64_t, 3>> pos = {{0, 1, 2}, {0, 1, 2}};

        auto seq = embed_tokens(patches, Modality::User, pos, params, cfg);
        CHECK(seq.length() == 2);
        for (int64_t c = 0; c < cfg.width; c++)
            CHECK(seq.tokens.at({0, c}) == seq.tokens.at({1, c}));

        auto seq2 = embed_tokens(patches, Modality::User, pos, params, cfg);
        CHECK(seq.tokens.data == seq2.tokens.data);  // pure function

        auto seq_g = embed_tokens(patches, Modality::Garment, pos, params, cfg);
        bool differs = false;
        for (int64_t c = 0; c < cfg.width; c++)
            if (seq_g.tokens.at({0, c}) != seq.tokens.at({0, c})) differs = true;
        CHECK(differs);

        CHECK_THROWS_AS((void)embed_tokens(patches, Modality::Text, pos, params, cfg), Error);
    }

    TEST_CASE("encode_text contracts") {
        ModelConfig cfg = tiny_config();
        Rng rng(1);
        CondParams<float> params;
        params.init(cfg, rng);

        auto empty = encode_text({}, params, cfg);
        CHECK(empty.length() == 0);

        auto two = encode_text({"red", "top"}, params, cfg);
        CHECK(two.length() == 2);
        for (auto tag : two.tags) CHECK(tag == Modality::Text);
        CHECK(two.positions[0] == std::array<int64_t, 3>{0, 0, 0});
        CHECK(two.positions[1] == std::array<int64_t, 3>{1, 0, 0});

        try {
            (void)encode_text({"xyzzy"}, params, cfg);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Vocabulary);
            CHECK(std::string(e.what()).find("xyzzy") != std::string::npos);
        }

        std::vector<std::string> too_long(17, "red");
        CHECK_THROWS_AS((void)encode_text(too_long, params, cfg), Error);
    }

    TEST_CASE("encode_bundle token count and layout") {
        ModelConfig cfg = tiny_config();
        Rng rng(3);
        CondParams<float> params;
        params.init(cfg, rng);

        CondBundle b = demo_bundle();
        b.text = std::vector<std::string>(16, "red");
        auto seq = encode_bundle(b, params, cfg);
        // 16 text + 24 user + 24 + 24 garments + 216 motion
        CHECK(seq.length() == 304);
        CHECK(bundle_token_count(b, cfg) == 304);

        // block tag layout
        int64_t i = 0;
        for (; i < 16; i++) CHECK(seq.tags[size_t(i)] == Modality::Text);
        for (; i < 40; i++) CHECK(seq.tags[size_t(i)] == Modality::User);
        for (; i < 88; i++) CHECK(seq.tags[size_t(i)] == Modality::Garment);
        for (; i < 304; i++) CHECK(seq.tags[size_t(i)] == Modality::Motion);

        // garment blocks share identical positions
        for (int64_t k = 0; k < 24; k++)
            CHECK(seq.positions[size_t(40 + k)] == seq.positions[size_t(64 + k)]);

        // purity
        auto seq2 = encode_bundle(b, params, cfg);
        CHECK(seq.tokens.data == seq2.tokens.data);
    }

    TEST_CASE("garment swap exchanges blocks and nothing else") {
        ModelConfig cfg = tiny_config();
        Rng rng(3);
        CondParams<float> params;
        params.init(cfg, rng);

        CondBundle b = demo_bundle();
        auto seq = encode_bundle(b, params, cfg);
        CondBundle swapped = b;
        std::swap(swapped.garments[0], swapped.garments[1]);
        auto seq_sw = encode_bundle(swapped, params, cfg);
        REQUIRE(seq.length() == seq_sw.length());

        int64_t text_len = 3, user_len = 24, gar_len = 24;
        int64_t g1 = text_len + user_len, g2 = g1 + gar_len;
        int64_t d = cfg.width;
        for (int64_t k = 0; k < gar_len; k++)
            for (int64_t c = 0; c < d; c++) {
                CHECK(seq.tokens.at({g1 + k, c}) == seq_sw.tokens.at({g2 + k, c}));
                CHECK(seq.tokens.at({g2 + k, c}) == seq_sw.tokens.at({g1 + k, c}));
            }
        // all other tokens bit-identical
        for (int64_t k = 0; k < seq.length(); k++) {
            if (k >= g1 && k < g2 + gar_len) continue;
            for (int64_t c = 0; c < d; c++)
                CHECK(seq.tokens.at({k, c}) == seq_sw.tokens.at({k, c}));
        }
    }

    TEST_CASE("dropped modalities contribute exactly one null token") {
        ModelConfig cfg = tiny_config();
        Rng rng(3);
        CondParams<float> params;
        params.init(cfg, rng);

        CondBundle b = demo_bundle();
        b.dropped.text = true;
        auto seq = encode_bundle(b, params, cfg);
        CHECK(seq.length() == 1 + 24 + 48 + 216);
        CHECK(seq.tags[0] == Modality::Text);
        for (int64_t c = 0; c < cfg.width; c++)
            CHECK(seq.tokens.at({0, c}) == params.null_text.data[size_t(c)]);

        CondBundle all_dropped = demo_bundle();
        all_dropped.dropped = {true, true, true};
        auto seq2 = encode_bundle(all_dropped, params, cfg);
        CHECK(seq2.length() == 1 + 24 + 1 + 1);  // null, user, null, null

        // empty garment list requires the dropped flag
        CondBundle bad = demo_bundle();
        bad.garments.clear();
        CHECK_THROWS_AS((void)encode_bundle(bad, params, cfg), Error);
    }

    TEST_CASE("dropout_conditions") {
        CondBundle b = demo_bundle();
        Rng rng(11);
        DropoutRates zero;
        CondBundle same = dropout_conditions(b, zero, rng);
        CHECK(!same.dropped.text);
        CHECK(!same.dropped.garment);
        CHECK(!same.dropped.motion);

        DropoutRates all{1.0, 1.0, 1.0};
        CondBundle gone = dropout_conditions(b, all, rng);
        CHECK(gone.dropped.text);
        CHECK(gone.dropped.garment);
        CHECK(gone.dropped.motion);
        // user image is never dropped: the bundle keeps it untouched
        CHECK(gone.user_image.data == b.user_image.data);

        DropoutRates bad{1.5, 0, 0};
        CHECK_THROWS_AS((void)dropout_conditions(b, bad, rng), Error);

        // Monte Carlo: text rate 0.1 over 10000 draws within +-0.01
        DropoutRates tenth{0.1, 0, 0};
        Rng mc(99);
        int dropped = 0;
        for (int i = 0; i < 10000; i++)
            dropped += dropout_conditions(b, tenth, mc).dropped.text ? 1 : 0;
        double freq = double(dropped) / 10000.0;
        CHECK(freq > 0.09);
        CHECK(freq < 0.11);
    }

    TEST_CASE("vocabulary round trip and hash") {
        Vocabulary v = builtin_vocabulary();
        CHECK(v.size() <= 128);
        CHECK(v.id_of("red") >= 0);
        std::string path = "/tmp/tryon_vocab_test.txt";
        v.save(path);
        Vocabulary loaded = Vocabulary::load(path);
        CHECK(loaded.words == v.words);
        CHECK(loaded.content_hash() == v.content_hash());
    }

    TEST_CASE("context frames get the context tag and explicit times") {
        ModelConfig cfg = tiny_config();
        Rng rng(3);
        CondParams<float> params;
        params.init(cfg, rng);
        CondBundle b = demo_bundle();
        b.dropped.motion = true;
        b.motion_ref.reset();
        ContextFrames context;
        context.frames = {flat_image(32, 48, 0.1f), flat_image(32, 48, 0.2f)};
        context.times = {2, 5};
        auto seq = encode_bundle(b, params, cfg, &context);
        int64_t base = 3 + 24 + 48 + 1;
        CHECK(seq.length() == base + 48);
        for (int64_t k = base; k < base + 24; k++) {
            CHECK(seq.tags[size_t(k)] == Modality::Context);
            CHECK(seq.positions[size_t(k)][0] == 2);
        }
        for (int64_t k = base + 24; k < base + 48; k++)
            CHECK(seq.positions[size_t(k)][0] == 5);
    }
}
