#include "tryon/video.hpp"

#include <cmath>

namespace tryon {

Image VideoTensor::frame(int64_t t) const {
    Image img({height(), width(), channels()});
    const float* src = pixels.ptr() + t * height() * width() * channels();
    std::copy(src, src + img.numel(), img.ptr());
    return img;
}

void VideoTensor::set_frame(int64_t t, const Image& img) {
    if (img.dim(0) != height() || img.dim(1) != width() || img.dim(2) != channels())
        fail(ErrorKind::Shape, "set_frame: frame shape mismatch");
    float* dst = pixels.ptr() + t * height() * width() * channels();
    std::copy(img.ptr(), img.ptr() + img.numel(), dst);
}

VideoTensor video_from_frames(const std::vector<Image>& frames, double fps) {
    if (frames.empty()) fail(ErrorKind::InvalidArgument, "video_from_frames: no frames");
    VideoTensor v(int64_t(frames.size()), frames[0].dim(0), frames[0].dim(1),
                  frames[0].dim(2), fps);
    for (size_t t = 0; t < frames.size(); t++) v.set_frame(int64_t(t), frames[t]);
    return v;
}

Image downscale_area(const Image& img, int64_t fy, int64_t fx) {
    int64_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    if (h % fy != 0 || w % fx != 0)
        fail(ErrorKind::Shape, "downscale_area: factors must divide dimensions");
    Image out({h / fy, w / fx, c});
    float inv = 1.0f / float(fy * fx);
    for (int64_t y = 0; y < h / fy; y++)
        for (int64_t x = 0; x < w / fx; x++)
            for (int64_t ch = 0; ch < c; ch++) {
                float s = 0.f;
                for (int64_t dy = 0; dy < fy; dy++)
                    for (int64_t dx = 0; dx < fx; dx++)
                        s += img.at({y * fy + dy, x * fx + dx, ch});
                out.at({y, x, ch}) = s * inv;
            }
    return out;
}

VideoTensor downscale_area(const VideoTensor& v, int64_t fy, int64_t fx) {
    VideoTensor out(v.frames(), v.height() / fy, v.width() / fx, v.channels(), v.fps);
    for (int64_t t = 0; t < v.frames(); t++) out.set_frame(t, downscale_area(v.frame(t), fy, fx));
    return out;
}

MaskVideo downscale_any(const MaskVideo& m, int64_t fy, int64_t fx) {
    if (m.height % fy != 0 || m.width % fx != 0)
        fail(ErrorKind::Shape, "downscale_any: factors must divide dimensions");
    MaskVideo out(m.frames, m.height / fy, m.width / fx);
    for (int64_t f = 0; f < m.frames; f++)
        for (int64_t y = 0; y < out.height; y++)
            for (int64_t x = 0; x < out.width; x++) {
                uint8_t any = 0;
                for (int64_t dy = 0; dy < fy && !any; dy++)
                    for (int64_t dx = 0; dx < fx && !any; dx++)
                        any = m.at(f, y * fy + dy, x * fx + dx);
                out.at(f, y, x) = any;
            }
    return out;
}

Image resize_nearest(const Image& img, int64_t out_h, int64_t out_w) {
    int64_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Image out({out_h, out_w, c});
    for (int64_t y = 0; y < out_h; y++) {
        int64_t sy = std::min(h - 1, int64_t(y * h / out_h));
        for (int64_t x = 0; x < out_w; x++) {
            int64_t sx = std::min(w - 1, int64_t(x * w / out_w));
            for (int64_t ch = 0; ch < c; ch++)
                out.at({y, x, ch}) = img.at({sy, sx, ch});
        }
    }
    return out;
}

void quantize_u8_inplace(Image& img) {
    for (auto& v : img.data) {
        float clamped = std::min(1.0f, std::max(0.0f, v));
        v = float(std::lround(clamped * 255.0f)) / 255.0f;
    }
}

void quantize_u8_inplace(VideoTensor& v) {
    for (auto& p : v.pixels.data) {
        float clamped = std::min(1.0f, std::max(0.0f, p));
        p = float(std::lround(clamped * 255.0f)) / 255.0f;
    }
}

double mse(const Tensor<float>& a, const Tensor<float>& b) {
    if (!a.same_shape(b)) fail(ErrorKind::Shape, "mse: shape mismatch");
    if (a.numel() == 0) fail(ErrorKind::InvalidArgument, "mse: empty tensors");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); i++) {
        double d = double(a.data[size_t(i)]) - double(b.data[size_t(i)]);
        s += d * d;
    }
    return s / double(a.numel());
}

}  // namespace tryon
