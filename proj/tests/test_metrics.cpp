#include <doctest.h>

#include <cmath>

#include "tryon/metrics.hpp"
#include "tryon/util.hpp"

using namespace tryon;
using tryon::sprite::GarmentType;

namespace {

VideoTensor const_video(int64_t t, int64_t h, int64_t w, float v, double fps = 8.0) {
    VideoTensor out(t, h, w, 3, fps);
    out.pixels.fill(v);
    return out;
}

VideoTensor noise_video(int64_t t, int64_t h, int64_t w, uint64_t seed) {
    VideoTensor out(t, h, w, 3, 8.0);
    Rng rng(seed);
    for (auto& v : out.pixels.data) v = float(rng.uniform());
    return out;
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("psnr identities") {
        VideoTensor a = noise_video(2, 16, 16, 3);
        CHECK(psnr(a, a) == 100.0);  // cap

        // MSE 0.01 -> 20 dB
        VideoTensor b = a;
        float delta = 0.1f;
        for (auto& v : b.pixels.data) v += delta;
        CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));

        VideoTensor zeros = const_video(2, 16, 16, 0.0f);
        VideoTensor ones = const_video(2, 16, 16, 1.0f);
        CHECK(psnr(zeros, ones) == doctest::Approx(0.0));

        VideoTensor small = const_video(2, 8, 16, 0.0f);
        CHECK_THROWS_AS((void)psnr(a, small), Error);
    }

    TEST_CASE("psnr strictly decreases with noise amplitude") {
        VideoTensor base = noise_video(2, 16, 16, 7);
        double prev = 1e9;
        for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
            VideoTensor noisy = base;
            Rng rng(uint64_t(amp * 1000));
            for (auto& v : noisy.pixels.data) v += float(amp * rng.normal());
            double p = psnr(base, noisy);
            CHECK(p < prev);
            prev = p;
        }
    }

    TEST_CASE("ssim identities") {
        VideoTensor a = noise_video(2, 16, 16, 9);
        CHECK(ssim(a, a) == doctest::Approx(1.0));

        // constant 0 vs constant 1: formula value C1 / (1 + C1)
        VideoTensor zeros = const_video(1, 16, 16, 0.0f);
        VideoTensor ones = const_video(1, 16, 16, 1.0f);
        double expect = 1e-4 / (1.0 + 1e-4);
        CHECK(ssim(zeros, ones) == doctest::Approx(expect).epsilon(1e-9));

        VideoTensor b = noise_video(2, 16, 16, 10);
        CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)));

        VideoTensor tiny = const_video(1, 6, 6, 0.5f);
        CHECK_THROWS_AS((void)ssim(tiny, tiny), Error);
    }

    TEST_CASE("featurize determinism, dimension, translation sensitivity") {
        VideoTensor a = noise_video(3, 32, 48, 21);
        auto f1 = featurize(a);
        auto f2 = featurize(a);
        REQUIRE(f1.size() == 3);
        CHECK(f1 == f2);
        CHECK(int64_t(f1[0].size()) == feature_dim(32, 48));
        // 32x48: tiles 4*6 + 2*3 + 1*1 = 31, 10 dims each
        CHECK(feature_dim(32, 48) == 310);

        // 4-pixel translation moves the features
        VideoTensor shifted = a;
        for (int64_t t = 0; t < a.frames(); t++)
            for (int64_t y = 0; y < a.height(); y++)
                for (int64_t x = 0; x < a.width(); x++)
                    for (int64_t c = 0; c < 3; c++)
                        shifted.at(t, y, x, c) = a.at(t, y, (x + 4) % a.width(), c);
        auto fs = featurize(shifted);
        double dist = 0;
        for (size_t i = 0; i < f1[0].size(); i++) {
            double d = f1[0][i] - fs[0][i];
            dist += d * d;
        }
        CHECK(dist > 0.0);
    }

    TEST_CASE("fid identities and closed form") {
        Rng rng(31);
        std::vector<std::vector<double>> a;
        for (int i = 0; i < 40; i++) {
            std::vector<double> f(5);
            for (auto& v : f) v = rng.normal();
            a.push_back(f);
        }
        CHECK(fid(a, a) <= 1e-6);

        // equal covariance, shifted mean: fid == |d|^2
        std::vector<double> d = {0.5, -1.0, 0.25, 0.0, 2.0};
        double d2 = 0;
        for (double v : d) d2 += v * v;
        std::vector<std::vector<double>> b = a;
        for (auto& f : b)
            for (size_t i = 0; i < 5; i++) f[i] += d[size_t(i)];
        CHECK(fid(a, b) == doctest::Approx(d2).epsilon(1e-6));
        CHECK(fid(b, a) == doctest::Approx(fid(a, b)).epsilon(1e-9));
        CHECK(fid(a, b) >= 0.0);

        std::vector<std::vector<double>> one = {a[0]};
        CHECK_THROWS_AS((void)fid(one, a), Error);
    }

    TEST_CASE("motion_error on ground truth, translation, and blank input") {
        using namespace tryon::sprite;
        Corpus c = gen_assets(3, {1, 1, 4}, 9);
        std::vector<const GarmentAsset*> gs;
        for (const auto& g : c.garments)
            if (g.garment_type == GarmentType::Top) { gs.push_back(&g); break; }
        SceneRender s = render_scene(c.avatars[0], gs, c.motions[3], 64, 96, 8.0);

        MotionErrorReport gt = motion_error(s.video, s.joints, c.avatars[0].joint_marker_colors);
        CHECK(gt.missed == 0);
        CHECK(gt.mean_pixel_error <= 1.0);

        // translate the video 2 px to the right
        VideoTensor shifted = s.video;
        shifted.pixels.zero();
        for (int64_t t = 0; t < s.video.frames(); t++)
            for (int64_t y = 0; y < 64; y++)
                for (int64_t x = 2; x < 96; x++)
                    for (int64_t ch = 0; ch < 3; ch++)
                        shifted.at(t, y, x, ch) = s.video.at(t, y, x - 2, ch);
        MotionErrorReport tr = motion_error(shifted, s.joints, c.avatars[0].joint_marker_colors);
        CHECK(tr.mean_pixel_error == doctest::Approx(2.0).epsilon(0.25));

        VideoTensor blank = const_video(9, 64, 96, 0.0f);
        try {
            (void)motion_error(blank, s.joints, c.avatars[0].joint_marker_colors);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::DetectionFailure);
        }
    }

    TEST_CASE("garment_fidelity on ground truth and on a wrong color") {
        using namespace tryon::sprite;
        Corpus c = gen_assets(5, {1, 1, 2}, 9);
        std::vector<const GarmentAsset*> gs;
        const GarmentAsset* top = nullptr;
        for (const auto& g : c.garments)
            if (g.garment_type == GarmentType::Top) top = &g;
        gs.push_back(top);
        SceneRender s = render_scene(c.avatars[0], gs, c.motions[0], 64, 96, 8.0);
        const MaskVideo& mask = s.garment_masks[0].second;

        double gt_score = garment_fidelity(s.video, *top, mask);
        CHECK(gt_score >= 0.95);

        VideoTensor wrong = s.video;
        for (int64_t t = 0; t < wrong.frames(); t++)
            for (int64_t y = 0; y < 64; y++)
                for (int64_t x = 0; x < 96; x++)
                    if (mask.at(t, y, x)) {
                        wrong.at(t, y, x, 0) = 0.99f;
                        wrong.at(t, y, x, 1) = 0.01f;
                        wrong.at(t, y, x, 2) = 0.99f;
                    }
        CHECK(garment_fidelity(wrong, *top, mask) <= 0.05);

        MaskVideo empty(s.video.frames(), 64, 96);
        CHECK_THROWS_AS((void)garment_fidelity(s.video, *top, empty), Error);
    }
}
