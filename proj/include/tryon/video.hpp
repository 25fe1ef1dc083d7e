#ifndef TRYON_VIDEO_HPP
#define TRYON_VIDEO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tryon/tensor.hpp"

namespace tryon {

// Single RGB frame, H x W x 3 floats in [0,1].
using Image = Tensor<float>;

// Boolean mask per frame stack: F x H x W.
struct MaskVideo {
    int64_t frames = 0, height = 0, width = 0;
    std::vector<uint8_t> data;  // 0/1

    MaskVideo() = default;
    MaskVideo(int64_t f, int64_t h, int64_t w)
        : frames(f), height(h), width(w), data(size_t(f * h * w), 0) {}
    uint8_t& at(int64_t f, int64_t y, int64_t x) {
        return data[size_t((f * height + y) * width + x)];
    }
    uint8_t at(int64_t f, int64_t y, int64_t x) const {
        return data[size_t((f * height + y) * width + x)];
    }
    int64_t count() const {
        int64_t n = 0;
        for (uint8_t v : data) n += v;
        return n;
    }
};

// Dense T x H x W x C pixel container in [0,1] with frame-rate metadata.
struct VideoTensor {
    Tensor<float> pixels;  // (T,H,W,C)
    double fps = 0.0;

    VideoTensor() = default;
    VideoTensor(int64_t t, int64_t h, int64_t w, int64_t c, double fps_ = 0.0)
        : pixels({t, h, w, c}), fps(fps_) {}

    int64_t frames() const { return pixels.rank() == 4 ? pixels.dim(0) : 0; }
    int64_t height() const { return pixels.rank() == 4 ? pixels.dim(1) : 0; }
    int64_t width() const { return pixels.rank() == 4 ? pixels.dim(2) : 0; }
    int64_t channels() const { return pixels.rank() == 4 ? pixels.dim(3) : 0; }

    float& at(int64_t t, int64_t y, int64_t x, int64_t c) {
        return pixels.at({t, y, x, c});
    }
    float at(int64_t t, int64_t y, int64_t x, int64_t c) const {
        return pixels.at({t, y, x, c});
    }

    Image frame(int64_t t) const;
    void set_frame(int64_t t, const Image& img);
};

VideoTensor video_from_frames(const std::vector<Image>& frames, double fps);

// Exact box-filter downscale by integer factors; factors must divide the
// input dimensions.
Image downscale_area(const Image& img, int64_t fy, int64_t fx);
VideoTensor downscale_area(const VideoTensor& v, int64_t fy, int64_t fx);
MaskVideo downscale_any(const MaskVideo& m, int64_t fy, int64_t fx);

Image resize_nearest(const Image& img, int64_t out_h, int64_t out_w);

// Snap every value to the 8-bit grid n/255 so that PNG round trips are
// bit-exact. Renderers call this as their final step.
void quantize_u8_inplace(Image& img);
void quantize_u8_inplace(VideoTensor& v);

double mse(const Tensor<float>& a, const Tensor<float>& b);

}  // namespace tryon

#endif
