#include "tryon/sprite_world.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include <json.hpp>

#include "tryon/image_io.hpp"
#include "tryon/util.hpp"

namespace tryon::sprite {

using nlohmann::json;
namespace fs = std::filesystem;

const char* kDatasetVersion = "1";

const std::array<Bone, kNumBones>& skeleton_bones() {
    // order defines segment_lengths indexing
    static const std::array<Bone, kNumBones> bones = {{
        {kNeck, kHead},
        {kNeck, kLSho},
        {kNeck, kRSho},
        {kLSho, kLElb},
        {kRSho, kRElb},
        {kNeck, kLHip},
        {kNeck, kRHip},
        {kLHip, kLKnee},
        {kRHip, kRKnee},
    }};
    return bones;
}

const std::array<Color, 16>& garment_palette() {
    static const std::array<Color, 16> p = {{
        {0.8125f, 0.0625f, 0.0625f},  // red
        {0.0625f, 0.8125f, 0.0625f},  // green
        {0.0625f, 0.0625f, 0.8125f},  // blue
        {0.8125f, 0.8125f, 0.0625f},  // yellow
        {0.8125f, 0.0625f, 0.8125f},  // magenta
        {0.0625f, 0.8125f, 0.8125f},  // cyan
        {0.8125f, 0.5625f, 0.0625f},  // orange
        {0.5625f, 0.0625f, 0.8125f},  // purple
        {0.0625f, 0.5625f, 0.5625f},  // teal
        {0.5625f, 0.5625f, 0.0625f},  // olive
        {0.5625f, 0.0625f, 0.0625f},  // maroon
        {0.0625f, 0.0625f, 0.5625f},  // navy
        {0.9375f, 0.5625f, 0.5625f},  // pink
        {0.3125f, 0.8125f, 0.0625f},  // lime
        {0.5625f, 0.5625f, 0.5625f},  // gray
        {0.5625f, 0.3125f, 0.0625f},  // brown
    }};
    return p;
}

const std::array<std::string, 16>& garment_color_names() {
    static const std::array<std::string, 16> n = {
        "red",  "green",  "blue",   "yellow", "magenta", "cyan", "orange", "purple",
        "teal", "olive",  "maroon", "navy",   "pink",    "lime", "gray",   "brown"};
    return n;
}

const std::array<Color, kNumJoints>& joint_marker_colors() {
    static const std::array<Color, kNumJoints> m = {{
        {1.0f, 0.0f, 0.5f},  // head
        {0.0f, 1.0f, 0.5f},  // neck
        {0.3125f, 0.0f, 1.0f},  // l shoulder
        {1.0f, 1.0f, 0.5f},  // r shoulder
        {0.5f, 1.0f, 1.0f},  // l elbow
        {1.0f, 0.5f, 1.0f},  // r elbow
        {1.0f, 1.0f, 1.0f},  // l hip
        {0.0f, 0.5f, 1.0f},  // r hip
        {0.5f, 0.5f, 1.0f},  // l knee
        {0.5f, 1.0f, 0.5f},  // r knee
    }};
    return m;
}

const std::array<Color, 6>& skin_palette() {
    static const std::array<Color, 6> s = {{
        {0.94f, 0.78f, 0.63f},
        {0.82f, 0.63f, 0.44f},
        {0.69f, 0.50f, 0.31f},
        {0.56f, 0.38f, 0.19f},
        {0.44f, 0.25f, 0.13f},
        {0.31f, 0.19f, 0.06f},
    }};
    return s;
}

const char* garment_type_name(GarmentType t) {
    switch (t) {
        case GarmentType::Top: return "top";
        case GarmentType::Bottom: return "bottom";
        case GarmentType::OnePiece: return "onepiece";
    }
    return "?";
}

GarmentType garment_type_from_name(const std::string& name) {
    if (name == "top") return GarmentType::Top;
    if (name == "bottom") return GarmentType::Bottom;
    if (name == "onepiece") return GarmentType::OnePiece;
    fail(ErrorKind::Format, "unknown garment type: " + name);
}

namespace {

// canonical skeleton (motion tracks are baked with these lengths; avatars
// get mildly scaled copies)
constexpr double kBaseLengths[kNumBones] = {
    0.055,  // neck-head
    0.075, 0.075,  // shoulders
    0.190, 0.190,  // upper arms (long enough that elbows clear the hips)
    0.160, 0.160,  // torso sides to hips
    0.140, 0.140,  // thighs
};
constexpr double kBaseAngles[kNumBones] = {
    // measured from +y (down); dir = (sin a, cos a)
    3.14159265358979,   // head: straight up
    -1.3208, 1.3208,    // shoulders out, slightly down
    -0.35, 0.35,        // arms hang
    -0.38, 0.38,        // hips
    -0.08, 0.08,        // thighs
};
constexpr double kRootX = 0.5, kRootY = 0.36;

struct MotionParams {
    int template_id = 0;  // 0 idle, 1 turn, 2 wave, 3 dance
    double amp = 1.0, phase = 0.0, freq = 1.0;
    std::array<double, kNumBones> bone_jitter{};
};

const char* kTemplateNames[4] = {"idle", "turn", "wave", "dance"};

Tensor<double> bake_motion(const MotionParams& mp, int64_t frames) {
    Tensor<double> joints({frames, kNumJoints, 2});
    for (int64_t f = 0; f < frames; f++) {
        double ph = 2.0 * M_PI * mp.freq * double(f) / double(frames) + mp.phase;
        double angles[kNumBones];
        for (int b = 0; b < kNumBones; b++) angles[b] = kBaseAngles[b] + mp.bone_jitter[size_t(b)];
        double rx = kRootX, ry = kRootY;
        double s = std::sin(ph);
        switch (mp.template_id) {
            case 0:  // idle: gentle sway
                rx += 0.012 * mp.amp * s;
                angles[3] += 0.08 * mp.amp * s;
                angles[4] += 0.08 * mp.amp * s;
                angles[0] += 0.05 * mp.amp * s;
                break;
            case 1:  // turn: arms sweep across, shoulders counter hips
                angles[3] += 0.50 * mp.amp * s;
                angles[4] += 0.50 * mp.amp * s;
                angles[1] += 0.10 * mp.amp * s;
                angles[2] += 0.10 * mp.amp * s;
                angles[5] -= 0.08 * mp.amp * s;
                angles[6] -= 0.08 * mp.amp * s;
                rx += 0.02 * mp.amp * s;
                break;
            case 2:  // wave: right arm raised and waving
                angles[4] = M_PI - 0.55 + 0.45 * mp.amp * std::sin(2.0 * ph);
                angles[2] += 0.12 * mp.amp * std::sin(2.0 * ph);
                angles[3] += 0.06 * mp.amp * s;
                break;
            case 3:  // dance: everything moves
                rx += 0.05 * mp.amp * s;
                ry += 0.018 * mp.amp * (1.0 - std::cos(2.0 * ph)) * 0.5;
                angles[3] += 0.60 * mp.amp * s;
                angles[4] -= 0.60 * mp.amp * s;
                angles[5] += 0.16 * mp.amp * s;
                angles[6] += 0.16 * mp.amp * s;
                angles[7] += 0.20 * mp.amp * std::sin(ph + M_PI / 2);
                angles[8] -= 0.20 * mp.amp * std::sin(ph + M_PI / 2);
                break;
        }
        double px[kNumJoints], py[kNumJoints];
        px[kNeck] = rx;
        py[kNeck] = ry;
        const auto& bones = skeleton_bones();
        for (int b = 0; b < kNumBones; b++) {
            const Bone& bone = bones[size_t(b)];
            px[bone.child] = px[bone.parent] + kBaseLengths[b] * std::sin(angles[b]);
            py[bone.child] = py[bone.parent] + kBaseLengths[b] * std::cos(angles[b]);
        }
        for (int j = 0; j < kNumJoints; j++) {
            joints.at({f, j, 0}) = px[j];
            joints.at({f, j, 1}) = py[j];
        }
    }
    return joints;
}

Image make_garment_texture(Rng& rng, const std::array<Color, 16>& palette, int& color0,
                           std::string& pattern_word) {
    int c0 = int(rng.below(16));
    int c1 = int(rng.below(15));
    if (c1 >= c0) c1++;  // distinct
    int pattern = int(rng.below(4));
    int stripe = 8 + 4 * int(rng.below(3));  // 8, 12, 16
    Image tex({kGarmentTexH, kGarmentTexW, 3});
    const Color& a = palette[size_t(c0)];
    const Color& b = palette[size_t(c1)];
    for (int64_t y = 0; y < kGarmentTexH; y++)
        for (int64_t x = 0; x < kGarmentTexW; x++) {
            bool alt = false;
            switch (pattern) {
                case 0: alt = (y / stripe) % 2 == 1; break;                    // striped
                case 1: alt = (x / stripe) % 2 == 1; break;                    // banded
                case 2: alt = ((x / stripe) + (y / stripe)) % 2 == 1; break;   // checkered
                case 3: alt = y >= 20 && y < 28; break;                        // solid + band
            }
            const Color& c = alt ? b : a;
            tex.at({y, x, 0}) = c.r;
            tex.at({y, x, 1}) = c.g;
            tex.at({y, x, 2}) = c.b;
        }
    quantize_u8_inplace(tex);
    static const char* pattern_words[4] = {"striped", "banded", "checkered", "solid"};
    pattern_word = pattern_words[pattern];
    color0 = c0;
    return tex;
}

struct Vec2 {
    double x = 0, y = 0;
};

void paint_disc(Image& img, double cx, double cy, double r, const Color& c,
                std::vector<int8_t>* owner = nullptr, int8_t tag = -1) {
    int64_t h = img.dim(0), w = img.dim(1);
    int64_t x0 = std::max<int64_t>(0, int64_t(std::floor(cx - r)));
    int64_t x1 = std::min(w - 1, int64_t(std::ceil(cx + r)));
    int64_t y0 = std::max<int64_t>(0, int64_t(std::floor(cy - r)));
    int64_t y1 = std::min(h - 1, int64_t(std::ceil(cy + r)));
    for (int64_t y = y0; y <= y1; y++)
        for (int64_t x = x0; x <= x1; x++) {
            double dx = double(x) - cx, dy = double(y) - cy;
            if (dx * dx + dy * dy > r * r) continue;
            img.at({y, x, 0}) = c.r;
            img.at({y, x, 1}) = c.g;
            img.at({y, x, 2}) = c.b;
            if (owner) (*owner)[size_t(y * w + x)] = tag;
        }
}

void paint_capsule(Image& img, Vec2 p0, Vec2 p1, double r, const Color& c) {
    int64_t h = img.dim(0), w = img.dim(1);
    double minx = std::min(p0.x, p1.x) - r, maxx = std::max(p0.x, p1.x) + r;
    double miny = std::min(p0.y, p1.y) - r, maxy = std::max(p0.y, p1.y) + r;
    int64_t x0 = std::max<int64_t>(0, int64_t(std::floor(minx)));
    int64_t x1 = std::min(w - 1, int64_t(std::ceil(maxx)));
    int64_t y0 = std::max<int64_t>(0, int64_t(std::floor(miny)));
    int64_t y1 = std::min(h - 1, int64_t(std::ceil(maxy)));
    double vx = p1.x - p0.x, vy = p1.y - p0.y;
    double len2 = vx * vx + vy * vy;
    for (int64_t y = y0; y <= y1; y++)
        for (int64_t x = x0; x <= x1; x++) {
            double pxx = double(x) - p0.x, pyy = double(y) - p0.y;
            double t = len2 > 0 ? std::clamp((pxx * vx + pyy * vy) / len2, 0.0, 1.0) : 0.0;
            double dx = pxx - t * vx, dy = pyy - t * vy;
            if (dx * dx + dy * dy > r * r) continue;
            img.at({y, x, 0}) = c.r;
            img.at({y, x, 1}) = c.g;
            img.at({y, x, 2}) = c.b;
        }
}

// textured triangle with barycentric uv interpolation; records ownership
void paint_tri_textured(Image& img, std::vector<int8_t>& owner, int8_t tag, Vec2 a,
                        Vec2 b, Vec2 c, Vec2 uva, Vec2 uvb, Vec2 uvc,
                        const Image* tex, const Color* flat) {
    int64_t h = img.dim(0), w = img.dim(1);
    double minx = std::min({a.x, b.x, c.x}), maxx = std::max({a.x, b.x, c.x});
    double miny = std::min({a.y, b.y, c.y}), maxy = std::max({a.y, b.y, c.y});
    int64_t x0 = std::max<int64_t>(0, int64_t(std::floor(minx)));
    int64_t x1 = std::min(w - 1, int64_t(std::ceil(maxx)));
    int64_t y0 = std::max<int64_t>(0, int64_t(std::floor(miny)));
    int64_t y1 = std::min(h - 1, int64_t(std::ceil(maxy)));
    double d = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if (std::abs(d) < 1e-12) return;
    for (int64_t y = y0; y <= y1; y++)
        for (int64_t x = x0; x <= x1; x++) {
            double l1 = ((double(x) - a.x) * (c.y - a.y) - (c.x - a.x) * (double(y) - a.y)) / d;
            double l2 = ((b.x - a.x) * (double(y) - a.y) - (double(x) - a.x) * (b.y - a.y)) / d;
            double l0 = 1.0 - l1 - l2;
            if (l0 < -1e-9 || l1 < -1e-9 || l2 < -1e-9) continue;
            Color col;
            if (tex) {
                double u = l0 * uva.x + l1 * uvb.x + l2 * uvc.x;
                double v = l0 * uva.y + l1 * uvb.y + l2 * uvc.y;
                int64_t tx = std::clamp<int64_t>(int64_t(std::lround(u * double(tex->dim(1) - 1))), 0, tex->dim(1) - 1);
                int64_t ty = std::clamp<int64_t>(int64_t(std::lround(v * double(tex->dim(0) - 1))), 0, tex->dim(0) - 1);
                col = {tex->at({ty, tx, 0}), tex->at({ty, tx, 1}), tex->at({ty, tx, 2})};
            } else {
                col = *flat;
            }
            img.at({y, x, 0}) = col.r;
            img.at({y, x, 1}) = col.g;
            img.at({y, x, 2}) = col.b;
            if (tag >= 0) owner[size_t(y * w + x)] = tag;
        }
}

void paint_quad_textured(Image& img, std::vector<int8_t>& owner, int8_t tag, Vec2 tl,
                         Vec2 tr, Vec2 bl, Vec2 br, const Image* tex, const Color* flat) {
    paint_tri_textured(img, owner, tag, tl, tr, bl, {0, 0}, {1, 0}, {0, 1}, tex, flat);
    paint_tri_textured(img, owner, tag, tr, br, bl, {1, 0}, {1, 1}, {0, 1}, tex, flat);
}

Vec2 normalized(Vec2 v) {
    double n = std::sqrt(v.x * v.x + v.y * v.y);
    if (n < 1e-12) return {0, 0};
    return {v.x / n, v.y / n};
}

}  // namespace

Corpus gen_assets(uint64_t seed, const GenCounts& counts, int64_t motion_frames,
                  double fps) {
    if (counts.avatars < 1 || counts.garments_per_type < 1 || counts.motions < 1)
        fail(ErrorKind::InvalidArgument, "gen_assets: all counts must be >= 1");
    if (motion_frames < 1) fail(ErrorKind::InvalidArgument, "gen_assets: frames must be >= 1");
    Corpus corpus;

    Rng av_rng(derive_seed(seed, "avatars"));
    for (int i = 0; i < counts.avatars; i++) {
        AvatarSpec a;
        a.id = i;
        double scale = av_rng.uniform(0.97, 1.03);
        for (int b = 0; b < kNumBones; b++)
            a.segment_lengths[size_t(b)] = float(kBaseLengths[b] * scale);
        // keep left/right pairs symmetric
        double arm_j = av_rng.uniform(0.99, 1.01), leg_j = av_rng.uniform(0.99, 1.01);
        a.segment_lengths[3] = float(a.segment_lengths[3] * arm_j);
        a.segment_lengths[4] = a.segment_lengths[3];
        a.segment_lengths[7] = float(a.segment_lengths[7] * leg_j);
        a.segment_lengths[8] = a.segment_lengths[7];
        a.skin_color = skin_palette()[size_t(i) % skin_palette().size()];
        a.joint_marker_colors = joint_marker_colors();
        corpus.avatars.push_back(std::move(a));
    }

    Rng g_rng(derive_seed(seed, "garments"));
    int gid = 0;
    for (GarmentType type : {GarmentType::Top, GarmentType::Bottom, GarmentType::OnePiece}) {
        for (int i = 0; i < counts.garments_per_type; i++) {
            GarmentAsset g;
            g.id = gid++;
            g.garment_type = type;
            int color0;
            std::string pattern_word;
            g.texture = make_garment_texture(g_rng, garment_palette(), color0, pattern_word);
            g.caption_words = {pattern_word, garment_color_names()[size_t(color0)],
                               garment_type_name(type)};
            corpus.garments.push_back(std::move(g));
        }
    }

    Rng m_rng(derive_seed(seed, "motions"));
    for (int i = 0; i < counts.motions; i++) {
        MotionParams mp;
        mp.template_id = i % 4;
        mp.amp = m_rng.uniform(0.75, 1.25);
        mp.phase = m_rng.uniform(0.0, 2.0 * M_PI);
        mp.freq = (1.0 + double(m_rng.below(2))) * m_rng.uniform(0.9, 1.1);
        for (auto& j : mp.bone_jitter) j = m_rng.uniform(-0.06, 0.06);
        mp.bone_jitter[0] = 0.0;  // head stays up
        MotionTrack t;
        t.id = i;
        t.fps = fps;
        t.name = kTemplateNames[mp.template_id];
        t.joints = bake_motion(mp, motion_frames);
        corpus.motions.push_back(std::move(t));
    }
    return corpus;
}

std::vector<std::string> caption_for(const std::vector<const GarmentAsset*>& garment_set,
                                     const MotionTrack& motion) {
    std::vector<std::string> words = {"wear"};
    for (size_t i = 0; i < garment_set.size(); i++) {
        if (i > 0) words.push_back("and");
        for (const auto& w : garment_set[i]->caption_words) words.push_back(w);
    }
    words.push_back("doing");
    words.push_back(motion.name);
    return words;
}

Tensor<double> upsample_joints_3x(const Tensor<double>& joints) {
    int64_t f_low = joints.dim(0), j = joints.dim(1);
    if (f_low < 1) fail(ErrorKind::InvalidArgument, "upsample_joints_3x: empty track");
    int64_t f_high = 3 * f_low - 2;
    Tensor<double> out({f_high, j, 2});
    for (int64_t f = 0; f < f_high; f++) {
        int64_t base = f / 3;
        int64_t rem = f % 3;
        for (int64_t jj = 0; jj < j; jj++)
            for (int64_t c = 0; c < 2; c++) {
                if (rem == 0) {
                    out.at({f, jj, c}) = joints.at({base, jj, c});
                } else {
                    double w = double(rem) / 3.0;
                    out.at({f, jj, c}) = (1.0 - w) * joints.at({base, jj, c}) +
                                         w * joints.at({base + 1, jj, c});
                }
            }
    }
    return out;
}

namespace {

SceneRender render_from_joints(const AvatarSpec& avatar,
                               const std::vector<const GarmentAsset*>& garment_set,
                               const Tensor<double>& track_joints, int motion_id,
                               int64_t height, int64_t width, double fps) {
    if (height % 8 != 0 || width % 8 != 0)
        fail(ErrorKind::InvalidArgument, "render_scene: resolution must be a multiple of 8");
    int tops = 0, bottoms = 0, onepieces = 0;
    for (const auto* g : garment_set) {
        if (g->garment_type == GarmentType::Top) tops++;
        if (g->garment_type == GarmentType::Bottom) bottoms++;
        if (g->garment_type == GarmentType::OnePiece) onepieces++;
    }
    if (tops > 1 || bottoms > 1 || onepieces > 1)
        fail(ErrorKind::InvalidArgument, "render_scene: duplicate garment type");
    if (onepieces > 0 && (tops > 0 || bottoms > 0))
        fail(ErrorKind::InvalidArgument, "render_scene: one_piece cannot combine with top/bottom");

    // draw order: bottom, then top (top wins overlap), one_piece alone
    std::vector<const GarmentAsset*> draw_order;
    for (const auto* g : garment_set)
        if (g->garment_type == GarmentType::Bottom) draw_order.push_back(g);
    for (const auto* g : garment_set)
        if (g->garment_type == GarmentType::Top) draw_order.push_back(g);
    for (const auto* g : garment_set)
        if (g->garment_type == GarmentType::OnePiece) draw_order.push_back(g);

    int64_t frames = track_joints.dim(0);
    SceneRender scene;
    scene.avatar_id = avatar.id;
    scene.motion_id = motion_id;
    scene.joints = track_joints;
    scene.video = VideoTensor(frames, height, width, 3, fps);
    scene.skeleton_video = VideoTensor(frames, height, width, 3, fps);
    // output order: top, bottom, one_piece
    std::vector<const GarmentAsset*> mask_order;
    for (const auto* g : garment_set)
        if (g->garment_type == GarmentType::Top) mask_order.push_back(g);
    for (const auto* g : garment_set)
        if (g->garment_type == GarmentType::Bottom) mask_order.push_back(g);
    for (const auto* g : garment_set)
        if (g->garment_type == GarmentType::OnePiece) mask_order.push_back(g);
    for (const auto* g : mask_order) {
        scene.garment_ids.push_back(g->id);
        scene.garment_masks.emplace_back(g->id, MaskVideo(frames, height, width));
    }

    const auto& bones = skeleton_bones();
    double sx = double(width - 1), sy = double(height - 1);

    for (int64_t f = 0; f < frames; f++) {
        Image img({height, width, 3});
        Image skel({height, width, 3});
        std::vector<int8_t> owner(size_t(height * width), -1);

        // retarget the canonical track onto the avatar's segment lengths:
        // same bone directions, avatar lengths, root pinned to the track
        Vec2 track[kNumJoints], body[kNumJoints];
        for (int j = 0; j < kNumJoints; j++)
            track[j] = {track_joints.at({f, j, 0}) * sx, track_joints.at({f, j, 1}) * sy};
        body[kNeck] = track[kNeck];
        for (int b = 0; b < kNumBones; b++) {
            const Bone& bone = bones[size_t(b)];
            Vec2 d = {track_joints.at({f, bone.child, 0}) - track_joints.at({f, bone.parent, 0}),
                      track_joints.at({f, bone.child, 1}) - track_joints.at({f, bone.parent, 1})};
            double norm = std::sqrt(d.x * d.x + d.y * d.y);
            double len = double(avatar.segment_lengths[size_t(b)]);
            Vec2 dir = norm > 1e-12 ? Vec2{d.x / norm, d.y / norm} : Vec2{0, 1};
            // parent already retargeted (bones listed parent-first)
            body[bone.child] = {body[bone.parent].x + dir.x * len * sx,
                                body[bone.parent].y + dir.y * len * sy};
        }

        // body: limbs, head, torso
        for (int b = 0; b < kNumBones; b++)
            paint_capsule(img, body[bones[size_t(b)].parent], body[bones[size_t(b)].child], 1.6,
                          avatar.skin_color);
        paint_disc(img, body[kHead].x, body[kHead].y, 2.6, avatar.skin_color);
        {
            std::vector<int8_t> scratch(owner.size(), -1);
            paint_quad_textured(img, scratch, -1, body[kLSho], body[kRSho], body[kLHip],
                                body[kRHip], nullptr, &avatar.skin_color);
        }

        // garments as texture-mapped quads
        for (const auto* g : draw_order) {
            int8_t tag = -1;
            for (size_t i = 0; i < mask_order.size(); i++)
                if (mask_order[i]->id == g->id) tag = int8_t(i);
            Vec2 sho_dir = normalized({body[kLSho].x - body[kRSho].x, body[kLSho].y - body[kRSho].y});
            Vec2 hip_dir = normalized({body[kLHip].x - body[kRHip].x, body[kLHip].y - body[kRHip].y});
            Vec2 knee_dir = normalized({body[kLKnee].x - body[kRKnee].x, body[kLKnee].y - body[kRKnee].y});
            double pad_sho = 0.022 * sx, pad_hip = 0.030 * sx, pad_knee = 0.022 * sx;
            Vec2 sl = {body[kLSho].x + sho_dir.x * pad_sho, body[kLSho].y + sho_dir.y * pad_sho};
            Vec2 sr = {body[kRSho].x - sho_dir.x * pad_sho, body[kRSho].y - sho_dir.y * pad_sho};
            Vec2 hl = {body[kLHip].x + hip_dir.x * pad_hip, body[kLHip].y + hip_dir.y * pad_hip};
            Vec2 hr = {body[kRHip].x - hip_dir.x * pad_hip, body[kRHip].y - hip_dir.y * pad_hip};
            Vec2 kl = {body[kLKnee].x + knee_dir.x * pad_knee, body[kLKnee].y + knee_dir.y * pad_knee};
            Vec2 kr = {body[kRKnee].x - knee_dir.x * pad_knee, body[kRKnee].y - knee_dir.y * pad_knee};
            switch (g->garment_type) {
                case GarmentType::Top:
                    paint_quad_textured(img, owner, tag, sl, sr, hl, hr, &g->texture, nullptr);
                    break;
                case GarmentType::Bottom:
                    paint_quad_textured(img, owner, tag, hl, hr, kl, kr, &g->texture, nullptr);
                    break;
                case GarmentType::OnePiece:
                    paint_quad_textured(img, owner, tag, sl, sr, kl, kr, &g->texture, nullptr);
                    break;
            }
        }

        // joint markers drawn last so every joint stays detectable; marker
        // pixels are not garment texture, so they leave the masks
        for (int j = 0; j < kNumJoints; j++)
            paint_disc(img, body[j].x, body[j].y, 1.5, avatar.joint_marker_colors[size_t(j)],
                       &owner, -1);
        for (int j = 0; j < kNumJoints; j++)
            paint_disc(skel, track[j].x, track[j].y, 1.5, avatar.joint_marker_colors[size_t(j)]);

        for (int64_t y = 0; y < height; y++)
            for (int64_t x = 0; x < width; x++) {
                int8_t o = owner[size_t(y * width + x)];
                if (o >= 0) scene.garment_masks[size_t(o)].second.at(f, y, x) = 1;
            }
        scene.video.set_frame(f, img);
        scene.skeleton_video.set_frame(f, skel);
    }
    quantize_u8_inplace(scene.video);
    quantize_u8_inplace(scene.skeleton_video);
    return scene;
}

}  // namespace

SceneRender render_scene(const AvatarSpec& avatar,
                         const std::vector<const GarmentAsset*>& garment_set,
                         const MotionTrack& motion, int64_t height, int64_t width,
                         double fps) {
    return render_from_joints(avatar, garment_set, motion.joints, motion.id, height, width, fps);
}

SceneRender render_scene_highfps(const AvatarSpec& avatar,
                                 const std::vector<const GarmentAsset*>& garment_set,
                                 const MotionTrack& motion, int64_t height, int64_t width) {
    Tensor<double> hi = upsample_joints_3x(motion.joints);
    return render_from_joints(avatar, garment_set, hi, motion.id, height, width, motion.fps * 3.0);
}

const MaskVideo* SceneRender::mask_for(int garment_id) const {
    for (const auto& [id, m] : garment_masks)
        if (id == garment_id) return &m;
    return nullptr;
}

std::vector<TripletRef> build_triplets(const std::vector<SceneRender>& renders,
                                       const Corpus& corpus, bool include_reconstruction) {
    for (const auto& r : renders)
        if (r.video.frames() < 1)
            fail(ErrorKind::InvalidArgument, "build_triplets: render with no frames");

    // group by avatar, then by garment-set key, keyed deterministically
    std::map<int, std::map<std::string, std::vector<size_t>>> by_avatar;
    for (size_t i = 0; i < renders.size(); i++) {
        std::vector<int> ids = renders[i].garment_ids;
        std::sort(ids.begin(), ids.end());
        std::string key;
        for (int id : ids) key += std::to_string(id) + ",";
        by_avatar[renders[i].avatar_id][key].push_back(i);
    }

    auto garment_by_id = [&](int id) -> const GarmentAsset& {
        for (const auto& g : corpus.garments)
            if (g.id == id) return g;
        fail(ErrorKind::InvalidArgument, "build_triplets: unknown garment id");
    };
    auto motion_by_id = [&](int id) -> const MotionTrack& {
        for (const auto& m : corpus.motions)
            if (m.id == id) return m;
        fail(ErrorKind::InvalidArgument, "build_triplets: unknown motion id");
    };

    std::vector<TripletRef> out;
    for (auto& [avatar_id, sets] : by_avatar) {
        // stable set order: by smallest scene id in the group
        std::vector<std::pair<std::string, std::vector<size_t>>> ordered(sets.begin(), sets.end());
        for (auto& [key, group] : ordered) std::sort(group.begin(), group.end());
        std::sort(ordered.begin(), ordered.end(),
                  [&](const auto& a, const auto& b) { return a.second[0] < b.second[0]; });

        for (size_t ia = 0; ia < ordered.size(); ia++) {
            for (size_t ib = 0; ib < ordered.size(); ib++) {
                if (ia == ib && !include_reconstruction) continue;
                const auto& group_a = ordered[ia].second;
                const auto& group_b = ordered[ib].second;
                size_t user_idx = group_a[0];
                size_t pick = group_b[derive_seed(0x7219, uint64_t(avatar_id), ia, ib) % group_b.size()];
                const SceneRender& target = renders[pick];
                TripletRef ref;
                ref.id = int(out.size());
                ref.avatar_id = avatar_id;
                ref.user_scene = renders[user_idx].id;
                ref.target_scene = target.id;
                ref.garment_ids = target.garment_ids;
                ref.reconstruction = (ia == ib);
                std::vector<const GarmentAsset*> gs;
                for (int id : ref.garment_ids) gs.push_back(&garment_by_id(id));
                ref.caption = caption_for(gs, motion_by_id(target.motion_id));
                out.push_back(std::move(ref));
            }
        }
    }
    return out;
}

TripletSample materialize_triplet(const Dataset& ds, const TripletRef& ref) {
    const SceneEntry& user = ds.scene(ref.user_scene);
    const SceneEntry& target = ds.scene(ref.target_scene);
    TripletSample s;
    s.user_image = user.render.video.frame(0);
    for (int id : ref.garment_ids) s.garments.push_back(ds.garment(id).texture);
    s.motion_ref = target.render.skeleton_video;
    s.target_video = target.render.video;
    s.caption = ref.caption;
    s.garment_masks = target.render.garment_masks;
    s.avatar_id = ref.avatar_id;
    s.garment_ids = ref.garment_ids;
    s.motion_id = target.render.motion_id;
    return s;
}

Image extract_garment(const Image& image, const MaskVideo& mask, int64_t frame) {
    if (mask.height != image.dim(0) || mask.width != image.dim(1))
        fail(ErrorKind::Shape, "extract_garment: mask shape mismatch");
    int64_t y0 = mask.height, y1 = -1, x0 = mask.width, x1 = -1;
    for (int64_t y = 0; y < mask.height; y++)
        for (int64_t x = 0; x < mask.width; x++)
            if (mask.at(frame, y, x)) {
                y0 = std::min(y0, y); y1 = std::max(y1, y);
                x0 = std::min(x0, x); x1 = std::max(x1, x);
            }
    if (y1 < 0) fail(ErrorKind::EmptySegmentation, "extract_garment: mask is empty");
    Image crop({y1 - y0 + 1, x1 - x0 + 1, 3});
    for (int64_t y = 0; y < crop.dim(0); y++)
        for (int64_t x = 0; x < crop.dim(1); x++) {
            bool on = mask.at(frame, y0 + y, x0 + x);
            for (int64_t c = 0; c < 3; c++)
                crop.at({y, x, c}) = on ? image.at({y0 + y, x0 + x, c}) : 0.5f;
        }
    return resize_nearest(crop, kGarmentTexH, kGarmentTexW);
}

std::vector<JointDetection> detect_joints(const Image& frame,
                                          const std::array<Color, kNumJoints>& colors,
                                          float tolerance) {
    int64_t h = frame.dim(0), w = frame.dim(1);
    std::vector<JointDetection> out(kNumJoints);
    std::array<double, kNumJoints> sx{}, sy{};
    std::array<int64_t, kNumJoints> n{};
    for (int64_t y = 0; y < h; y++)
        for (int64_t x = 0; x < w; x++) {
            Color px = {frame.at({y, x, 0}), frame.at({y, x, 1}), frame.at({y, x, 2})};
            for (int j = 0; j < kNumJoints; j++) {
                if (color_dist(px, colors[size_t(j)]) <= tolerance) {
                    sx[size_t(j)] += double(x);
                    sy[size_t(j)] += double(y);
                    n[size_t(j)]++;
                }
            }
        }
    for (int j = 0; j < kNumJoints; j++) {
        if (n[size_t(j)] > 0) {
            out[size_t(j)].found = true;
            out[size_t(j)].x = sx[size_t(j)] / double(n[size_t(j)]);
            out[size_t(j)].y = sy[size_t(j)] / double(n[size_t(j)]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// dataset io

namespace {

json color_to_json(const Color& c) { return json::array({c.r, c.g, c.b}); }
Color color_from_json(const json& j) {
    return {j.at(0).get<float>(), j.at(1).get<float>(), j.at(2).get<float>()};
}

json joints_to_json(const Tensor<double>& joints) {
    json frames = json::array();
    for (int64_t f = 0; f < joints.dim(0); f++) {
        json fj = json::array();
        for (int64_t j = 0; j < joints.dim(1); j++)
            fj.push_back(json::array({joints.at({f, j, 0}), joints.at({f, j, 1})}));
        frames.push_back(std::move(fj));
    }
    return frames;
}

Tensor<double> joints_from_json(const json& j) {
    int64_t f = int64_t(j.size());
    int64_t nj = f > 0 ? int64_t(j.at(0).size()) : 0;
    Tensor<double> out({f, nj, 2});
    for (int64_t fi = 0; fi < f; fi++)
        for (int64_t ji = 0; ji < nj; ji++) {
            out.at({fi, ji, 0}) = j.at(size_t(fi)).at(size_t(ji)).at(0).get<double>();
            out.at({fi, ji, 1}) = j.at(size_t(fi)).at(size_t(ji)).at(1).get<double>();
        }
    return out;
}

std::string scene_dir(const std::string& root, int id) {
    return root + "/scenes/" + std::to_string(id);
}

std::string frame_name(int64_t i) {
    char buf[32];
    snprintf(buf, sizeof(buf), "%05d.png", int(i));
    return buf;
}

}  // namespace

const SceneEntry& Dataset::scene(int id) const {
    for (const auto& s : scenes)
        if (s.render.id == id) return s;
    fail(ErrorKind::InvalidArgument, "dataset: unknown scene id " + std::to_string(id));
}

const GarmentAsset& Dataset::garment(int id) const {
    for (const auto& g : corpus.garments)
        if (g.id == id) return g;
    fail(ErrorKind::InvalidArgument, "dataset: unknown garment id " + std::to_string(id));
}

const AvatarSpec& Dataset::avatar(int id) const {
    for (const auto& a : corpus.avatars)
        if (a.id == id) return a;
    fail(ErrorKind::InvalidArgument, "dataset: unknown avatar id " + std::to_string(id));
}

const MotionTrack& Dataset::motion(int id) const {
    for (const auto& m : corpus.motions)
        if (m.id == id) return m;
    fail(ErrorKind::InvalidArgument, "dataset: unknown motion id " + std::to_string(id));
}

const SceneEntry* Dataset::highfps_twin(int lowfps_scene_id) const {
    for (const auto& s : scenes)
        if (s.highfps && s.lowfps_scene == lowfps_scene_id) return &s;
    return nullptr;
}

void write_dataset(const Dataset& ds, const std::string& path) {
    fs::create_directories(path);

    json manifest;
    manifest["version"] = ds.version.empty() ? kDatasetVersion : ds.version;
    manifest["seed"] = ds.seed;
    manifest["resolution"] = {ds.height, ds.width};
    manifest["fps"] = ds.fps;
    manifest["counts"] = {{"avatars", ds.corpus.avatars.size()},
                          {"garments", ds.corpus.garments.size()},
                          {"motions", ds.corpus.motions.size()},
                          {"scenes", ds.scenes.size()},
                          {"triplets", ds.triplets.size()}};
    json palette = json::array();
    for (const auto& c : garment_palette()) palette.push_back(color_to_json(c));
    manifest["palette"] = palette;

    json avatars = json::array();
    for (const auto& a : ds.corpus.avatars) {
        json aj;
        aj["id"] = a.id;
        aj["segment_lengths"] = a.segment_lengths;
        aj["skin_color"] = color_to_json(a.skin_color);
        json mk = json::array();
        for (const auto& c : a.joint_marker_colors) mk.push_back(color_to_json(c));
        aj["joint_marker_colors"] = mk;
        avatars.push_back(std::move(aj));
    }
    manifest["avatars"] = avatars;

    json garments = json::array();
    for (const auto& g : ds.corpus.garments) {
        garments.push_back({{"id", g.id},
                            {"type", garment_type_name(g.garment_type)},
                            {"caption_words", g.caption_words}});
        write_png_rgb(path + "/garments/" + std::to_string(g.id) + ".png", g.texture);
    }
    manifest["garments"] = garments;

    json motions = json::array();
    for (const auto& m : ds.corpus.motions)
        motions.push_back({{"id", m.id}, {"name", m.name}, {"fps", m.fps},
                           {"joints", joints_to_json(m.joints)}});
    manifest["motions"] = motions;

    json scenes = json::array();
    for (const auto& entry : ds.scenes) {
        const SceneRender& s = entry.render;
        scenes.push_back({{"id", s.id},
                          {"avatar", s.avatar_id},
                          {"garments", s.garment_ids},
                          {"motion", s.motion_id},
                          {"frames", s.video.frames()},
                          {"fps", s.video.fps},
                          {"highfps", entry.highfps},
                          {"lowfps_scene", entry.lowfps_scene}});
        std::string dir = scene_dir(path, s.id);
        for (int64_t f = 0; f < s.video.frames(); f++)
            write_png_rgb(dir + "/frames/" + frame_name(f), s.video.frame(f));
        for (const auto& [gid, mask] : s.garment_masks)
            for (int64_t f = 0; f < mask.frames; f++)
                write_png_mask(dir + "/masks/" + std::to_string(gid) + "/" + frame_name(f),
                               mask, f);
        json skel;
        skel["fps"] = s.video.fps;
        skel["motion"] = s.motion_id;
        skel["joints"] = joints_to_json(s.joints);
        write_text_file(dir + "/skeleton.json", skel.dump(2) + "\n");
        // skeleton condition video frames
        for (int64_t f = 0; f < s.skeleton_video.frames(); f++)
            write_png_rgb(dir + "/skeleton_frames/" + frame_name(f), s.skeleton_video.frame(f));
    }
    manifest["scenes"] = scenes;
    write_text_file(path + "/manifest.json", manifest.dump(2) + "\n");

    json triplets;
    json arr = json::array();
    for (const auto& t : ds.triplets)
        arr.push_back({{"id", t.id},
                       {"avatar", t.avatar_id},
                       {"user_scene", t.user_scene},
                       {"target_scene", t.target_scene},
                       {"garments", t.garment_ids},
                       {"caption", t.caption},
                       {"reconstruction", t.reconstruction},
                       {"split", t.split}});
    triplets["triplets"] = arr;
    write_text_file(path + "/triplets.json", triplets.dump(2) + "\n");
}

Dataset load_dataset(const std::string& path) {
    if (!fs::exists(path + "/manifest.json"))
        fail(ErrorKind::Format, "dataset manifest not found: " + path + "/manifest.json");
    json manifest;
    try {
        manifest = json::parse(read_text_file(path + "/manifest.json"));
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("bad manifest json: ") + e.what());
    }
    std::string version = manifest.at("version").get<std::string>();
    if (version != kDatasetVersion)
        fail(ErrorKind::Version, "dataset version mismatch: got " + version + ", expected " +
                                     kDatasetVersion);

    Dataset ds;
    ds.version = version;
    ds.seed = manifest.at("seed").get<uint64_t>();
    ds.height = manifest.at("resolution").at(0).get<int64_t>();
    ds.width = manifest.at("resolution").at(1).get<int64_t>();
    ds.fps = manifest.at("fps").get<double>();

    for (const auto& aj : manifest.at("avatars")) {
        AvatarSpec a;
        a.id = aj.at("id").get<int>();
        auto lens = aj.at("segment_lengths");
        for (int b = 0; b < kNumBones; b++) a.segment_lengths[size_t(b)] = lens.at(size_t(b)).get<float>();
        a.skin_color = color_from_json(aj.at("skin_color"));
        for (int j = 0; j < kNumJoints; j++)
            a.joint_marker_colors[size_t(j)] = color_from_json(aj.at("joint_marker_colors").at(size_t(j)));
        ds.corpus.avatars.push_back(std::move(a));
    }
    for (const auto& gj : manifest.at("garments")) {
        GarmentAsset g;
        g.id = gj.at("id").get<int>();
        g.garment_type = garment_type_from_name(gj.at("type").get<std::string>());
        g.caption_words = gj.at("caption_words").get<std::vector<std::string>>();
        g.texture = read_png_rgb(path + "/garments/" + std::to_string(g.id) + ".png");
        ds.corpus.garments.push_back(std::move(g));
    }
    for (const auto& mj : manifest.at("motions")) {
        MotionTrack m;
        m.id = mj.at("id").get<int>();
        m.name = mj.at("name").get<std::string>();
        m.fps = mj.at("fps").get<double>();
        m.joints = joints_from_json(mj.at("joints"));
        ds.corpus.motions.push_back(std::move(m));
    }

    for (const auto& sj : manifest.at("scenes")) {
        SceneEntry entry;
        SceneRender& s = entry.render;
        s.id = sj.at("id").get<int>();
        s.avatar_id = sj.at("avatar").get<int>();
        s.garment_ids = sj.at("garments").get<std::vector<int>>();
        s.motion_id = sj.at("motion").get<int>();
        entry.highfps = sj.at("highfps").get<bool>();
        entry.lowfps_scene = sj.at("lowfps_scene").get<int>();
        int64_t frames = sj.at("frames").get<int64_t>();
        double fps = sj.at("fps").get<double>();
        std::string dir = scene_dir(path, s.id);
        std::vector<Image> video_frames, skel_frames;
        for (int64_t f = 0; f < frames; f++) {
            video_frames.push_back(read_png_rgb(dir + "/frames/" + frame_name(f)));
            skel_frames.push_back(read_png_rgb(dir + "/skeleton_frames/" + frame_name(f)));
        }
        s.video = video_from_frames(video_frames, fps);
        s.skeleton_video = video_from_frames(skel_frames, fps);
        for (int gid : s.garment_ids) {
            MaskVideo m(frames, ds.height, ds.width);
            for (int64_t f = 0; f < frames; f++)
                read_png_mask(dir + "/masks/" + std::to_string(gid) + "/" + frame_name(f), m, f);
            s.garment_masks.emplace_back(gid, std::move(m));
        }
        json skel = json::parse(read_text_file(dir + "/skeleton.json"));
        s.joints = joints_from_json(skel.at("joints"));
        ds.scenes.push_back(std::move(entry));
    }

    json triplets = json::parse(read_text_file(path + "/triplets.json"));
    for (const auto& tj : triplets.at("triplets")) {
        TripletRef t;
        t.id = tj.at("id").get<int>();
        t.avatar_id = tj.at("avatar").get<int>();
        t.user_scene = tj.at("user_scene").get<int>();
        t.target_scene = tj.at("target_scene").get<int>();
        t.garment_ids = tj.at("garments").get<std::vector<int>>();
        t.caption = tj.at("caption").get<std::vector<std::string>>();
        t.reconstruction = tj.at("reconstruction").get<bool>();
        t.split = tj.at("split").get<std::string>();
        ds.triplets.push_back(std::move(t));
    }
    return ds;
}

std::string dataset_content_hash(const std::string& path) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(path))
        if (e.is_regular_file())
            files.push_back(fs::relative(e.path(), path).generic_string());
    std::sort(files.begin(), files.end());
    Sha256 h;
    for (const auto& rel : files) {
        h.update(rel);
        auto bytes = read_binary_file(path + "/" + rel);
        h.update(bytes.data(), bytes.size());
    }
    return h.hex_digest();
}

}  // namespace tryon::sprite
