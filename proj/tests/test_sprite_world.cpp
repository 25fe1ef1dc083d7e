#include <doctest.h>

#include <cmath>
#include <set>
#include <filesystem>

#include "tryon/sprite_world.hpp"
#include "tryon/util.hpp"

using namespace tryon;
using namespace tryon::sprite;

namespace {

std::vector<const GarmentAsset*> set_of(const Corpus& c, std::vector<int> ids) {
    std::vector<const GarmentAsset*> out;
    for (int id : ids)
        for (const auto& g : c.garments)
            if (g.id == id) out.push_back(&g);
    return out;
}

const GarmentAsset* first_of(const Corpus& c, GarmentType t) {
    for (const auto& g : c.garments)
        if (g.garment_type == t) return &g;
    return nullptr;
}

}  // namespace

TEST_SUITE("sprite_world") {
    TEST_CASE("gen_assets count and determinism contracts") {
        Corpus c = gen_assets(7, {2, 2, 3});
        CHECK(c.avatars.size() == 2);
        CHECK(c.garments.size() == 6);  // 2 per type
        CHECK(c.motions.size() == 3);

        Corpus c2 = gen_assets(7, {2, 2, 3});
        for (size_t i = 0; i < c.garments.size(); i++)
            CHECK(c.garments[i].texture.data == c2.garments[i].texture.data);
        for (size_t i = 0; i < c.motions.size(); i++)
            CHECK(c.motions[i].joints.data == c2.motions[i].joints.data);
        for (size_t i = 0; i < c.avatars.size(); i++)
            CHECK(c.avatars[i].segment_lengths == c2.avatars[i].segment_lengths);

        Corpus c3 = gen_assets(8, {2, 2, 3});
        bool any_differs = false;
        for (size_t i = 0; i < c.garments.size(); i++)
            if (c.garments[i].texture.data != c3.garments[i].texture.data) any_differs = true;
        CHECK(any_differs);

        CHECK_THROWS_AS((void)gen_assets(7, {0, 1, 1}), Error);
        CHECK_THROWS_AS((void)gen_assets(7, {1, 1, 0}), Error);
    }

    TEST_CASE("garment invariants: textures have at least two colors") {
        Corpus c = gen_assets(11, {1, 4, 1});
        for (const auto& g : c.garments) {
            for (float v : g.texture.data) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
            }
            std::set<std::array<float, 3>> colors;
            for (int64_t i = 0; i < g.texture.numel(); i += 3)
                colors.insert({g.texture.data[size_t(i)], g.texture.data[size_t(i) + 1],
                               g.texture.data[size_t(i) + 2]});
            CHECK(colors.size() >= 2);
            CHECK(g.caption_words.size() == 3);
        }
    }

    TEST_CASE("motion tracks are rigid and in bounds") {
        Corpus c = gen_assets(3, {1, 1, 8}, 9);
        const auto& bones = skeleton_bones();
        for (const auto& m : c.motions) {
            CHECK(m.frames() >= 1);
            std::array<double, kNumBones> len0{};
            for (int64_t f = 0; f < m.frames(); f++) {
                for (int b = 0; b < kNumBones; b++) {
                    double dx = m.joints.at({f, bones[size_t(b)].child, 0}) -
                                m.joints.at({f, bones[size_t(b)].parent, 0});
                    double dy = m.joints.at({f, bones[size_t(b)].child, 1}) -
                                m.joints.at({f, bones[size_t(b)].parent, 1});
                    double len = std::sqrt(dx * dx + dy * dy);
                    if (f == 0) len0[size_t(b)] = len;
                    CHECK(std::abs(len - len0[size_t(b)]) < 1e-6);
                }
                for (int j = 0; j < kNumJoints; j++) {
                    CHECK(m.joints.at({f, j, 0}) >= 0.0);
                    CHECK(m.joints.at({f, j, 0}) <= 1.0);
                    CHECK(m.joints.at({f, j, 1}) >= 0.0);
                    CHECK(m.joints.at({f, j, 1}) <= 1.0);
                }
            }
        }
        // all four templates appear
        std::set<std::string> names;
        for (const auto& m : c.motions) names.insert(m.name);
        CHECK(names == std::set<std::string>{"idle", "turn", "wave", "dance"});
    }

    TEST_CASE("color tables keep markers separable") {
        // markers pairwise and against garments, skins, black, neutral gray
        const auto& markers = joint_marker_colors();
        for (size_t i = 0; i < markers.size(); i++)
            for (size_t j = i + 1; j < markers.size(); j++)
                CHECK(color_dist(markers[i], markers[j]) >= 0.25f);
        std::vector<Color> others(garment_palette().begin(), garment_palette().end());
        for (const auto& s : skin_palette()) others.push_back(s);
        others.push_back({0, 0, 0});
        others.push_back({0.5f, 0.5f, 0.5f});
        for (const auto& m : markers)
            for (const auto& o : others) CHECK(color_dist(m, o) >= 0.2f);
    }

    TEST_CASE("render_scene shape and range contract") {
        Corpus c = gen_assets(5, {1, 1, 4}, 9);
        auto gs = set_of(c, {first_of(c, GarmentType::Top)->id, first_of(c, GarmentType::Bottom)->id});
        SceneRender s = render_scene(c.avatars[0], gs, c.motions[3], 32, 48, 8.0);
        CHECK(s.video.frames() == 9);
        CHECK(s.video.height() == 32);
        CHECK(s.video.width() == 48);
        CHECK(s.video.channels() == 3);
        for (float v : s.video.pixels.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
        CHECK(s.skeleton_video.frames() == 9);
        CHECK_THROWS_AS((void)render_scene(c.avatars[0], gs, c.motions[0], 30, 48, 8.0), Error);
    }

    TEST_CASE("render_scene garment rules") {
        Corpus c = gen_assets(5, {1, 2, 1});
        const auto* top = first_of(c, GarmentType::Top);
        const auto* bottom = first_of(c, GarmentType::Bottom);
        const auto* op = first_of(c, GarmentType::OnePiece);
        CHECK_THROWS_AS((void)render_scene(c.avatars[0], {top, top}, c.motions[0], 32, 48, 8.0),
                        Error);
        CHECK_THROWS_AS((void)render_scene(c.avatars[0], {op, top}, c.motions[0], 32, 48, 8.0),
                        Error);
        SceneRender sop = render_scene(c.avatars[0], {op}, c.motions[0], 32, 48, 8.0);
        CHECK(sop.garment_ids == std::vector<int>{op->id});
        (void)bottom;
    }

    TEST_CASE("mask coverage fraction and disjointness") {
        Corpus c = gen_assets(9, {2, 2, 4}, 9);
        for (int av = 0; av < 2; av++) {
            auto gs = set_of(c, {first_of(c, GarmentType::Top)->id,
                                 first_of(c, GarmentType::Bottom)->id});
            SceneRender s = render_scene(c.avatars[size_t(av)], gs, c.motions[size_t(av * 2)],
                                         64, 96, 8.0);
            REQUIRE(s.garment_masks.size() == 2);
            const MaskVideo& m0 = s.garment_masks[0].second;
            const MaskVideo& m1 = s.garment_masks[1].second;
            for (int64_t f = 0; f < s.video.frames(); f++) {
                int64_t c0 = 0, c1 = 0;
                for (int64_t y = 0; y < 64; y++)
                    for (int64_t x = 0; x < 96; x++) {
                        c0 += m0.at(f, y, x);
                        c1 += m1.at(f, y, x);
                        CHECK(!(m0.at(f, y, x) && m1.at(f, y, x)));
                    }
                double frac0 = double(c0) / double(64 * 96);
                double frac1 = double(c1) / double(64 * 96);
                CHECK(frac0 > 0.0);
                CHECK(frac0 < 0.6);
                CHECK(frac1 > 0.0);
                CHECK(frac1 < 0.6);
            }
        }
    }

    TEST_CASE("skeleton recoverability within 1 px over random frames") {
        Corpus c = gen_assets(21, {3, 2, 6}, 9);
        Rng pick(123);
        int checked = 0;
        double worst_skel = 0, worst_body = 0;
        for (int trial = 0; trial < 12; trial++) {
            const auto& avatar = c.avatars[pick.below(c.avatars.size())];
            const auto& motion = c.motions[pick.below(c.motions.size())];
            auto gs = set_of(c, {first_of(c, GarmentType::Top)->id,
                                 first_of(c, GarmentType::Bottom)->id});
            SceneRender s = render_scene(avatar, gs, motion, 64, 96, 8.0);
            for (int64_t f = 0; f < s.video.frames(); f++) {
                auto det_skel = detect_joints(s.skeleton_video.frame(f), avatar.joint_marker_colors);
                auto det_body = detect_joints(s.video.frame(f), avatar.joint_marker_colors);
                for (int j = 0; j < kNumJoints; j++) {
                    double gx = s.joints.at({f, j, 0}) * 95.0;
                    double gy = s.joints.at({f, j, 1}) * 63.0;
                    REQUIRE(det_skel[size_t(j)].found);
                    double es = std::hypot(det_skel[size_t(j)].x - gx, det_skel[size_t(j)].y - gy);
                    worst_skel = std::max(worst_skel, es);
                    REQUIRE(det_body[size_t(j)].found);
                    double eb = std::hypot(det_body[size_t(j)].x - gx, det_body[size_t(j)].y - gy);
                    worst_body = std::max(worst_body, eb);
                    checked++;
                }
            }
        }
        CHECK(checked >= 100 * kNumJoints);
        CHECK(worst_skel <= 1.0);
        CHECK(worst_body <= 1.0);
    }

    TEST_CASE("build_triplets pair enumeration") {
        Corpus c = gen_assets(13, {1, 2, 2}, 5);
        std::vector<SceneRender> renders;
        int id = 0;
        // three garment sets for one avatar
        std::vector<std::vector<int>> sets = {
            {first_of(c, GarmentType::Top)->id, first_of(c, GarmentType::Bottom)->id},
            {first_of(c, GarmentType::OnePiece)->id},
            {c.garments[1].id, first_of(c, GarmentType::Bottom)->id},
        };
        for (const auto& ids : sets) {
            SceneRender s = render_scene(c.avatars[0], set_of(c, ids), c.motions[0], 32, 48, 8.0);
            s.id = id++;
            renders.push_back(std::move(s));
        }
        auto triplets = build_triplets(renders, c, false);
        CHECK(triplets.size() == 6);  // ordered pairs of 3 sets
        for (const auto& t : triplets) {
            CHECK(t.avatar_id == 0);
            CHECK(!t.reconstruction);
            CHECK(t.user_scene != t.target_scene);
        }
        auto with_recon = build_triplets(renders, c, true);
        CHECK(with_recon.size() == 9);

        // single garment set, no reconstruction: zero triplets, not an error
        std::vector<SceneRender> one;
        SceneRender s = render_scene(c.avatars[0], set_of(c, sets[0]), c.motions[0], 32, 48, 8.0);
        s.id = 0;
        one.push_back(std::move(s));
        CHECK(build_triplets(one, c, false).empty());
    }

    TEST_CASE("triplet count law: brute-force oracle over avatars") {
        Corpus c = gen_assets(17, {3, 2, 2}, 5);
        std::vector<SceneRender> renders;
        int id = 0;
        std::vector<int> sets_per_avatar = {2, 3, 1};
        std::vector<std::vector<std::vector<int>>> avatar_sets = {
            {{0}, {2}},           // avatar 0: two one-garment sets (use top ids)
            {{0}, {2}, {4}},      // avatar 1
            {{0}},                // avatar 2
        };
        // map indices to actual top/bottom/one_piece ids
        std::vector<int> tops, bottoms, ops;
        for (const auto& g : c.garments) {
            if (g.garment_type == GarmentType::Top) tops.push_back(g.id);
            if (g.garment_type == GarmentType::Bottom) bottoms.push_back(g.id);
            if (g.garment_type == GarmentType::OnePiece) ops.push_back(g.id);
        }
        std::vector<std::vector<std::vector<int>>> real_sets = {
            {{tops[0]}, {bottoms[0]}},
            {{tops[0]}, {bottoms[0]}, {ops[0]}},
            {{tops[1]}},
        };
        int64_t expected = 0;
        for (size_t av = 0; av < real_sets.size(); av++) {
            int64_t s = int64_t(real_sets[av].size());
            expected += s * (s - 1);
            for (const auto& ids : real_sets[av]) {
                SceneRender r = render_scene(c.avatars[av], set_of(c, ids), c.motions[0], 32, 48,
                                             8.0);
                r.id = id++;
                renders.push_back(std::move(r));
            }
        }
        auto triplets = build_triplets(renders, c, false);
        CHECK(int64_t(triplets.size()) == expected);  // 2 + 6 + 0
        for (const auto& t : triplets) {
            const SceneRender* user = nullptr;
            const SceneRender* target = nullptr;
            for (const auto& r : renders) {
                if (r.id == t.user_scene) user = &r;
                if (r.id == t.target_scene) target = &r;
            }
            REQUIRE(user != nullptr);
            REQUIRE(target != nullptr);
            CHECK(user->avatar_id == t.avatar_id);
            CHECK(target->avatar_id == t.avatar_id);
        }
    }

    TEST_CASE("captions are pure functions of garment set and motion") {
        Corpus c = gen_assets(19, {1, 1, 4}, 5);
        auto gs = set_of(c, {first_of(c, GarmentType::Top)->id, first_of(c, GarmentType::Bottom)->id});
        auto c1 = caption_for(gs, c.motions[2]);
        auto c2 = caption_for(gs, c.motions[2]);
        CHECK(c1 == c2);
        CHECK(c1.front() == "wear");
        CHECK(c1.back() == c.motions[2].name);
        CHECK(c1.size() <= 16);
    }

    TEST_CASE("extract_garment") {
        Corpus c = gen_assets(23, {1, 1, 1});
        const auto& tex = c.garments[0].texture;
        // full-true mask over a flat garment: identity up to resize
        MaskVideo full(1, tex.dim(0), tex.dim(1));
        std::fill(full.data.begin(), full.data.end(), 1);
        Image out = extract_garment(tex, full);
        CHECK(out.dim(0) == kGarmentTexH);
        CHECK(out.dim(1) == kGarmentTexW);
        CHECK(out.data == tex.data);  // same resolution, nearest resize is identity

        // ground-truth render mask: output pixels equal source pixels where
        // the nearest-neighbor source is masked, gray elsewhere
        auto gs = set_of(c, {c.garments[0].id});
        SceneRender s = render_scene(c.avatars[0], gs, c.motions[0], 64, 96, 8.0);
        const MaskVideo& mask = s.garment_masks[0].second;
        REQUIRE(mask.count() > 0);
        Image frame = s.video.frame(0);
        Image cond = extract_garment(frame, mask, 0);
        // reconstruct the crop box
        int64_t y0 = mask.height, y1 = -1, x0 = mask.width, x1 = -1;
        for (int64_t y = 0; y < mask.height; y++)
            for (int64_t x = 0; x < mask.width; x++)
                if (mask.at(0, y, x)) {
                    y0 = std::min(y0, y); y1 = std::max(y1, y);
                    x0 = std::min(x0, x); x1 = std::max(x1, x);
                }
        int64_t ch = y1 - y0 + 1, cw = x1 - x0 + 1;
        for (int64_t y = 0; y < kGarmentTexH; y++)
            for (int64_t x = 0; x < kGarmentTexW; x++) {
                int64_t sy = y0 + std::min(ch - 1, y * ch / kGarmentTexH);
                int64_t sx = x0 + std::min(cw - 1, x * cw / kGarmentTexW);
                if (mask.at(0, sy, sx)) {
                    for (int64_t cc = 0; cc < 3; cc++)
                        CHECK(cond.at({y, x, cc}) == frame.at({sy, sx, cc}));
                } else {
                    CHECK(cond.at({y, x, 0}) == 0.5f);
                }
            }

        MaskVideo empty(1, tex.dim(0), tex.dim(1));
        CHECK_THROWS_AS((void)extract_garment(tex, empty), Error);
        try {
            (void)extract_garment(tex, empty);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::EmptySegmentation);
        }
    }

    TEST_CASE("highfps render follows the 3F-2 law") {
        Corpus c = gen_assets(29, {1, 1, 1}, 5);
        auto gs = set_of(c, {first_of(c, GarmentType::OnePiece)->id});
        SceneRender lo = render_scene(c.avatars[0], gs, c.motions[0], 32, 48, 8.0);
        SceneRender hi = render_scene_highfps(c.avatars[0], gs, c.motions[0], 32, 48);
        CHECK(hi.video.frames() == 3 * lo.video.frames() - 2);
        CHECK(hi.video.fps == doctest::Approx(24.0));
        // keyframes of the upsampled track coincide with the original
        for (int64_t f = 0; f < lo.video.frames(); f++)
            for (int j = 0; j < kNumJoints; j++) {
                CHECK(hi.joints.at({3 * f, j, 0}) == lo.joints.at({f, j, 0}));
                CHECK(hi.joints.at({3 * f, j, 1}) == lo.joints.at({f, j, 1}));
            }
    }

    TEST_CASE("dataset write/load round trip is bit-exact") {
        Corpus c = gen_assets(31, {1, 1, 2}, 5);
        Dataset ds;
        ds.version = kDatasetVersion;
        ds.seed = 31;
        ds.height = 32;
        ds.width = 48;
        ds.fps = 8.0;
        ds.corpus = c;
        std::vector<std::vector<int>> sets = {
            {first_of(c, GarmentType::Top)->id, first_of(c, GarmentType::Bottom)->id},
            {first_of(c, GarmentType::OnePiece)->id},
        };
        int id = 0;
        for (const auto& ids : sets)
            for (int m = 0; m < 2; m++) {
                SceneEntry e;
                e.render = render_scene(c.avatars[0], set_of(c, ids), c.motions[size_t(m)], 32,
                                        48, 8.0);
                e.render.id = id++;
                ds.scenes.push_back(std::move(e));
            }
        {
            std::vector<SceneRender> renders;
            for (const auto& e : ds.scenes) renders.push_back(e.render);
            ds.triplets = build_triplets(renders, c, true);
        }

        std::string dir = std::filesystem::temp_directory_path() / "tryon_ds_roundtrip";
        std::filesystem::remove_all(dir);
        write_dataset(ds, dir);
        Dataset back = load_dataset(dir);

        CHECK(back.height == ds.height);
        CHECK(back.fps == ds.fps);
        REQUIRE(back.scenes.size() == ds.scenes.size());
        for (size_t i = 0; i < ds.scenes.size(); i++) {
            CHECK(back.scenes[i].render.video.pixels.data ==
                  ds.scenes[i].render.video.pixels.data);
            CHECK(back.scenes[i].render.skeleton_video.pixels.data ==
                  ds.scenes[i].render.skeleton_video.pixels.data);
            CHECK(back.scenes[i].render.joints.data == ds.scenes[i].render.joints.data);
            REQUIRE(back.scenes[i].render.garment_masks.size() ==
                    ds.scenes[i].render.garment_masks.size());
            for (size_t g = 0; g < ds.scenes[i].render.garment_masks.size(); g++)
                CHECK(back.scenes[i].render.garment_masks[g].second.data ==
                      ds.scenes[i].render.garment_masks[g].second.data);
        }
        for (size_t i = 0; i < ds.corpus.garments.size(); i++)
            CHECK(back.corpus.garments[i].texture.data == ds.corpus.garments[i].texture.data);
        for (size_t i = 0; i < ds.corpus.motions.size(); i++)
            CHECK(back.corpus.motions[i].joints.data == ds.corpus.motions[i].joints.data);
        REQUIRE(back.triplets.size() == ds.triplets.size());
        for (size_t i = 0; i < ds.triplets.size(); i++) {
            CHECK(back.triplets[i].caption == ds.triplets[i].caption);
            CHECK(back.triplets[i].user_scene == ds.triplets[i].user_scene);
            CHECK(back.triplets[i].target_scene == ds.triplets[i].target_scene);
        }

        // a second write produces the identical content hash
        std::string dir2 = std::filesystem::temp_directory_path() / "tryon_ds_roundtrip2";
        std::filesystem::remove_all(dir2);
        write_dataset(back, dir2);
        CHECK(dataset_content_hash(dir) == dataset_content_hash(dir2));

        // error contracts
        std::filesystem::remove(std::filesystem::path(dir2) / "manifest.json");
        try {
            (void)load_dataset(dir2);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Format);
        }
        // version mismatch
        std::string manifest = read_text_file(std::string(dir) + "/manifest.json");
        auto pos = manifest.find("\"version\": \"1\"");
        REQUIRE(pos != std::string::npos);
        manifest.replace(pos, 14, "\"version\": \"999\"");
        write_text_file(std::string(dir) + "/manifest.json", manifest);
        try {
            (void)load_dataset(dir);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Version);
        }
    }

    TEST_CASE("materialize_triplet wiring") {
        Corpus c = gen_assets(37, {1, 1, 2}, 5);
        Dataset ds;
        ds.version = kDatasetVersion;
        ds.height = 32;
        ds.width = 48;
        ds.fps = 8.0;
        ds.corpus = c;
        std::vector<std::vector<int>> sets = {
            {first_of(c, GarmentType::Top)->id, first_of(c, GarmentType::Bottom)->id},
            {first_of(c, GarmentType::OnePiece)->id},
        };
        int id = 0;
        for (const auto& ids : sets) {
            SceneEntry e;
            e.render = render_scene(c.avatars[0], set_of(c, ids), c.motions[size_t(id % 2)], 32,
                                    48, 8.0);
            e.render.id = id++;
            ds.scenes.push_back(std::move(e));
        }
        std::vector<SceneRender> renders;
        for (const auto& e : ds.scenes) renders.push_back(e.render);
        ds.triplets = build_triplets(renders, c, false);
        REQUIRE(ds.triplets.size() == 2);
        TripletSample s = materialize_triplet(ds, ds.triplets[0]);
        CHECK(s.avatar_id == 0);
        CHECK(s.target_video.frames() == s.motion_ref.frames());
        CHECK(s.user_image.dim(0) == 32);
        CHECK(s.garments.size() == ds.triplets[0].garment_ids.size());
        CHECK(!s.caption.empty());
    }
}
