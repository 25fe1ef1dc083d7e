#ifndef TRYON_SPRITE_WORLD_HPP
#define TRYON_SPRITE_WORLD_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tryon/rng.hpp"
#include "tryon/video.hpp"

namespace tryon::sprite {

// Articulated 2D avatar: 10 joints, 9 bones, tree rooted at the neck.
constexpr int kNumJoints = 10;
constexpr int kNumBones = 9;

enum Joint {
    kHead = 0, kNeck, kLSho, kRSho, kLElb, kRElb, kLHip, kRHip, kLKnee, kRKnee
};

struct Bone {
    int parent, child;
};
const std::array<Bone, kNumBones>& skeleton_bones();

struct Color {
    float r = 0, g = 0, b = 0;
};
inline float color_dist(const Color& a, const Color& b) {
    return std::max({std::abs(a.r - b.r), std::abs(a.g - b.g), std::abs(a.b - b.b)});
}

// Fixed 16-color garment palette, kept well separated (max-norm >= 0.25)
// from the joint marker colors so color-keyed joint detection cannot
// confuse garments with markers.
const std::array<Color, 16>& garment_palette();
const std::array<std::string, 16>& garment_color_names();
const std::array<Color, kNumJoints>& joint_marker_colors();
const std::array<Color, 6>& skin_palette();

enum class GarmentType { Top, Bottom, OnePiece };
const char* garment_type_name(GarmentType t);
GarmentType garment_type_from_name(const std::string& name);

// Flat garment texture resolution (H, W); divisible by the patch size.
constexpr int64_t kGarmentTexH = 48;
constexpr int64_t kGarmentTexW = 32;

struct AvatarSpec {
    int id = 0;
    std::array<float, kNumBones> segment_lengths{};  // normalized scene units
    Color skin_color;
    std::array<Color, kNumJoints> joint_marker_colors{};
};

struct GarmentAsset {
    int id = 0;
    GarmentType garment_type = GarmentType::Top;
    Image texture;  // (kGarmentTexH, kGarmentTexW, 3)
    std::vector<std::string> caption_words;
};

struct MotionTrack {
    double fps = 8.0;
    Tensor<double> joints;  // (F, J, 2), (x, y) in normalized [0,1] coords
    std::string name;
    int id = 0;

    int64_t frames() const { return joints.rank() == 3 ? joints.dim(0) : 0; }
};

struct SceneRender {
    VideoTensor video;
    std::vector<std::pair<int, MaskVideo>> garment_masks;  // per worn garment id
    VideoTensor skeleton_video;
    Tensor<double> joints;  // the track actually rendered, (F, J, 2)
    int avatar_id = 0;
    std::vector<int> garment_ids;
    int motion_id = 0;
    int id = 0;

    const MaskVideo* mask_for(int garment_id) const;
};

struct TripletSample {
    Image user_image;               // frame 0 of a render wearing set A
    std::vector<Image> garments;    // ordered set-B condition images
    VideoTensor motion_ref;         // skeleton video of the target
    VideoTensor target_video;
    std::vector<std::string> caption;
    std::vector<std::pair<int, MaskVideo>> garment_masks;  // of the target
    int avatar_id = 0;
    std::vector<int> garment_ids;   // set B
    int motion_id = 0;
};

// Lightweight reference form of a triplet; pixel payloads stay in the
// scene store until materialized.
struct TripletRef {
    int id = 0;
    int avatar_id = 0;
    int user_scene = 0;
    int target_scene = 0;
    std::vector<int> garment_ids;  // set B
    std::vector<std::string> caption;
    bool reconstruction = false;
    std::string split = "train";   // "train" | "held_out"
};

struct Corpus {
    std::vector<AvatarSpec> avatars;
    std::vector<GarmentAsset> garments;
    std::vector<MotionTrack> motions;
};

struct GenCounts {
    int avatars = 1;
    int garments_per_type = 1;
    int motions = 1;
};

// Deterministic corpus generation. Motions cycle the idle/turn/wave/dance
// templates with per-instance procedural noise.
Corpus gen_assets(uint64_t seed, const GenCounts& counts, int64_t motion_frames = 9,
                  double fps = 8.0);

std::vector<std::string> caption_for(const std::vector<const GarmentAsset*>& garment_set,
                                     const MotionTrack& motion);

SceneRender render_scene(const AvatarSpec& avatar,
                         const std::vector<const GarmentAsset*>& garment_set,
                         const MotionTrack& motion, int64_t height, int64_t width,
                         double fps);

// Same scene at 3x frame rate: joints upsampled by linear interpolation to
// 3F-2 frames before rasterization.
SceneRender render_scene_highfps(const AvatarSpec& avatar,
                                 const std::vector<const GarmentAsset*>& garment_set,
                                 const MotionTrack& motion, int64_t height,
                                 int64_t width);

Tensor<double> upsample_joints_3x(const Tensor<double>& joints);

// Cross-matches renders of the same avatar: one triplet per ordered pair of
// distinct garment sets, plus optional (B, B) self-pairs. The corpus
// supplies garment captions and motion names.
std::vector<TripletRef> build_triplets(const std::vector<SceneRender>& renders,
                                       const Corpus& corpus, bool include_reconstruction);

struct Dataset;
TripletSample materialize_triplet(const Dataset& ds, const TripletRef& ref);

// On-disk dataset. manifest.json + scenes/<id>/... + garments/<id>.png +
// triplets.json; all pixel data 8-bit PNG.
extern const char* kDatasetVersion;

struct SceneEntry {
    SceneRender render;
    bool highfps = false;
    int lowfps_scene = -1;  // for highfps scenes: id of the 8-FPS sibling
};

struct Dataset {
    std::string version;
    int64_t height = 0, width = 0;
    double fps = 8.0;
    uint64_t seed = 0;
    Corpus corpus;
    std::vector<SceneEntry> scenes;
    std::vector<TripletRef> triplets;

    const SceneEntry& scene(int id) const;
    const GarmentAsset& garment(int id) const;
    const AvatarSpec& avatar(int id) const;
    const MotionTrack& motion(int id) const;
    // highfps sibling of a low-fps scene, or nullptr
    const SceneEntry* highfps_twin(int lowfps_scene_id) const;
};

void write_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);
std::string dataset_content_hash(const std::string& path);

// Garment transfer: crops the mask bounding box, copies masked pixels onto
// neutral gray, resizes (nearest) to the garment condition resolution.
Image extract_garment(const Image& image, const MaskVideo& mask, int64_t frame = 0);

// Color-keyed joint detection: per joint, centroid of pixels within
// max-norm tolerance of the marker color. Returns per-joint pixel
// positions; misses flagged with found=false.
struct JointDetection {
    bool found = false;
    double x = 0, y = 0;
};
std::vector<JointDetection> detect_joints(const Image& frame,
                                          const std::array<Color, kNumJoints>& colors,
                                          float tolerance = 0.1f);

}  // namespace tryon::sprite

#endif
