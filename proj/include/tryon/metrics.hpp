#ifndef TRYON_METRICS_HPP
#define TRYON_METRICS_HPP

#include "tryon/sprite_world.hpp"
#include "tryon/video.hpp"

namespace tryon {

// 10*log10(1/MSE) on [0,1] video pairs, capped at 100 dB for MSE < 1e-10.
double psnr(const VideoTensor& a, const VideoTensor& b);

// Grayscale (channel mean), 7x7 uniform window, per frame then averaged;
// C1 = 1e-4, C2 = 9e-4 on unit range.
double ssim(const VideoTensor& a, const VideoTensor& b);

// Deterministic hand-rolled featurizer standing in for pretrained
// perceptual nets: per frame a 3-level Gaussian pyramid, per level 8x8
// pixel tiles, per tile channel means/variances plus a 4-bin
// gradient-orientation histogram. Returns one feature vector per frame.
std::vector<std::vector<double>> featurize(const VideoTensor& video);
int64_t feature_dim(int64_t height, int64_t width);

// Frechet distance between Gaussian fits; matrix square roots via
// symmetric eigendecomposition with negative eigenvalues clamped to zero.
double fid(const std::vector<std::vector<double>>& features_a,
           const std::vector<std::vector<double>>& features_b);

struct MotionErrorReport {
    double mean_pixel_error = 0.0;
    int64_t detected = 0;
    int64_t missed = 0;
};

// Color-keyed joint detection against the track ground truth; joints with
// no matching pixel are counted as misses. Fails with detection-failure
// when joints are missing in more than half of the frames.
MotionErrorReport motion_error(const VideoTensor& video, const Tensor<double>& track_joints,
                               const std::array<sprite::Color, sprite::kNumJoints>& joint_colors);

// Histogram intersection (8 bins per channel, joint 512-bin histogram) of
// masked video pixels against the garment texture, averaged over frames
// with nonempty masks.
double garment_fidelity(const VideoTensor& video, const sprite::GarmentAsset& garment,
                        const MaskVideo& masks);

}  // namespace tryon

#endif
