#include "tryon/metrics.hpp"

#include <lapacke.h>

#include <cmath>

#include "tryon/util.hpp"

namespace tryon {

double psnr(const VideoTensor& a, const VideoTensor& b) {
    double m = mse(a.pixels, b.pixels);
    if (m < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / m);
}

namespace {

Tensor<float> grayscale(const Image& img) {
    int64_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Tensor<float> g({h, w});
    for (int64_t y = 0; y < h; y++)
        for (int64_t x = 0; x < w; x++) {
            float s = 0;
            for (int64_t ch = 0; ch < c; ch++) s += img.at({y, x, ch});
            g.at({y, x}) = s / float(c);
        }
    return g;
}

}  // namespace

double ssim(const VideoTensor& a, const VideoTensor& b) {
    if (!a.pixels.same_shape(b.pixels)) fail(ErrorKind::Shape, "ssim: shape mismatch");
    constexpr int64_t kWin = 7;
    constexpr double c1 = 1e-4, c2 = 9e-4;
    if (a.height() < kWin || a.width() < kWin)
        fail(ErrorKind::InvalidArgument, "ssim: frames smaller than the 7x7 window");
    double total = 0.0;
    int64_t windows = 0;
    for (int64_t f = 0; f < a.frames(); f++) {
        Tensor<float> ga = grayscale(a.frame(f)), gb = grayscale(b.frame(f));
        for (int64_t y = 0; y + kWin <= a.height(); y++)
            for (int64_t x = 0; x + kWin <= a.width(); x++) {
                double ma = 0, mb = 0;
                for (int64_t dy = 0; dy < kWin; dy++)
                    for (int64_t dx = 0; dx < kWin; dx++) {
                        ma += ga.at({y + dy, x + dx});
                        mb += gb.at({y + dy, x + dx});
                    }
                constexpr double n = double(kWin * kWin);
                ma /= n;
                mb /= n;
                double va = 0, vb = 0, cov = 0;
                for (int64_t dy = 0; dy < kWin; dy++)
                    for (int64_t dx = 0; dx < kWin; dx++) {
                        double da = ga.at({y + dy, x + dx}) - ma;
                        double db = gb.at({y + dy, x + dx}) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                va /= n;
                vb /= n;
                cov /= n;
                double s = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                           ((ma * ma + mb * mb + c1) * (va + vb + c2));
                total += s;
                windows++;
            }
    }
    return total / double(windows);
}

namespace {

// 5-tap binomial blur + 2x decimation, clamped borders
Image pyramid_down(const Image& img) {
    static const float k[5] = {1.f / 16, 4.f / 16, 6.f / 16, 4.f / 16, 1.f / 16};
    int64_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Image tmp({h, w, c});
    for (int64_t y = 0; y < h; y++)
        for (int64_t x = 0; x < w; x++)
            for (int64_t ch = 0; ch < c; ch++) {
                float s = 0;
                for (int i = -2; i <= 2; i++) {
                    int64_t xx = std::clamp<int64_t>(x + i, 0, w - 1);
                    s += k[i + 2] * img.at({y, xx, ch});
                }
                tmp.at({y, x, ch}) = s;
            }
    int64_t oh = h / 2, ow = w / 2;
    Image out({oh, ow, c});
    for (int64_t y = 0; y < oh; y++)
        for (int64_t x = 0; x < ow; x++)
            for (int64_t ch = 0; ch < c; ch++) {
                float s = 0;
                for (int i = -2; i <= 2; i++) {
                    int64_t yy = std::clamp<int64_t>(2 * y + i, 0, h - 1);
                    s += k[i + 2] * tmp.at({yy, 2 * x, ch});
                }
                out.at({y, x, ch}) = s;
            }
    return out;
}

void tile_features(const Image& img, std::vector<double>& out) {
    int64_t h = img.dim(0), w = img.dim(1);
    int64_t th = h / 8, tw = w / 8;
    Tensor<float> gray = grayscale(img);
    for (int64_t ty = 0; ty < th; ty++)
        for (int64_t tx = 0; tx < tw; tx++) {
            // channel means and variances
            for (int64_t ch = 0; ch < 3; ch++) {
                double m = 0;
                for (int64_t dy = 0; dy < 8; dy++)
                    for (int64_t dx = 0; dx < 8; dx++)
                        m += img.at({ty * 8 + dy, tx * 8 + dx, ch});
                m /= 64.0;
                double v = 0;
                for (int64_t dy = 0; dy < 8; dy++)
                    for (int64_t dx = 0; dx < 8; dx++) {
                        double d = img.at({ty * 8 + dy, tx * 8 + dx, ch}) - m;
                        v += d * d;
                    }
                out.push_back(m);
                out.push_back(v / 64.0);
            }
            // 4-bin gradient-orientation histogram, magnitude weighted
            double hist[4] = {0, 0, 0, 0};
            for (int64_t dy = 0; dy < 8; dy++)
                for (int64_t dx = 0; dx < 8; dx++) {
                    int64_t y = ty * 8 + dy, x = tx * 8 + dx;
                    int64_t xm = std::max<int64_t>(0, x - 1), xp = std::min(w - 1, x + 1);
                    int64_t ym = std::max<int64_t>(0, y - 1), yp = std::min(h - 1, y + 1);
                    double gx = 0.5 * (double(gray.at({y, xp})) - double(gray.at({y, xm})));
                    double gy = 0.5 * (double(gray.at({yp, x})) - double(gray.at({ym, x})));
                    double mag = std::sqrt(gx * gx + gy * gy);
                    if (mag < 1e-12) continue;
                    double ang = std::atan2(gy, gx);  // [-pi, pi)
                    int bin = std::clamp(int((ang + M_PI) / (M_PI / 2.0)), 0, 3);
                    hist[bin] += mag;
                }
            for (double hv : hist) out.push_back(hv / 64.0);
        }
}

}  // namespace

int64_t feature_dim(int64_t height, int64_t width) {
    int64_t dim = 0;
    int64_t h = height, w = width;
    for (int level = 0; level < 3; level++) {
        dim += (h / 8) * (w / 8) * 10;
        h /= 2;
        w /= 2;
    }
    return dim;
}

std::vector<std::vector<double>> featurize(const VideoTensor& video) {
    std::vector<std::vector<double>> features;
    for (int64_t f = 0; f < video.frames(); f++) {
        std::vector<double> feat;
        Image level = video.frame(f);
        for (int l = 0; l < 3; l++) {
            tile_features(level, feat);
            if (l < 2) level = pyramid_down(level);
        }
        features.push_back(std::move(feat));
    }
    return features;
}

namespace {

// symmetric psd square root via eigendecomposition, negative eigenvalues
// clamped to zero
std::vector<double> sqrtm_psd(std::vector<double> m, int64_t n) {
    std::vector<double> eig(static_cast<size_t>(n));
    int info = LAPACKE_dsyevd(LAPACK_ROW_MAJOR, 'V', 'U', int(n), m.data(), int(n), eig.data());
    if (info != 0) fail(ErrorKind::Numeric, "eigendecomposition failed in fid");
    // m now holds eigenvectors (rows of V^T in row-major: columns are vectors)
    std::vector<double> out(size_t(n * n), 0.0);
    for (int64_t k = 0; k < n; k++) {
        double lam = eig[size_t(k)];
        double s = lam > 0 ? std::sqrt(lam) : 0.0;
        if (s == 0.0) continue;
        for (int64_t i = 0; i < n; i++)
            for (int64_t j = 0; j < n; j++)
                out[size_t(i * n + j)] += s * m[size_t(i * n + k)] * m[size_t(j * n + k)];
    }
    return out;
}

void mean_cov(const std::vector<std::vector<double>>& feats, std::vector<double>& mean,
              std::vector<double>& cov) {
    int64_t n = int64_t(feats.size());
    int64_t d = int64_t(feats[0].size());
    mean.assign(size_t(d), 0.0);
    for (const auto& f : feats)
        for (int64_t i = 0; i < d; i++) mean[size_t(i)] += f[size_t(i)];
    for (auto& m : mean) m /= double(n);
    cov.assign(size_t(d * d), 0.0);
    for (const auto& f : feats)
        for (int64_t i = 0; i < d; i++) {
            double di = f[size_t(i)] - mean[size_t(i)];
            for (int64_t j = i; j < d; j++)
                cov[size_t(i * d + j)] += di * (f[size_t(j)] - mean[size_t(j)]);
        }
    double denom = double(n - 1);
    for (int64_t i = 0; i < d; i++)
        for (int64_t j = i; j < d; j++) {
            cov[size_t(i * d + j)] /= denom;
            cov[size_t(j * d + i)] = cov[size_t(i * d + j)];
        }
}

}  // namespace

double fid(const std::vector<std::vector<double>>& features_a,
           const std::vector<std::vector<double>>& features_b) {
    if (features_a.size() < 2 || features_b.size() < 2)
        fail(ErrorKind::InvalidArgument, "fid: need at least 2 samples per side");
    int64_t d = int64_t(features_a[0].size());
    if (int64_t(features_b[0].size()) != d) fail(ErrorKind::Shape, "fid: feature dim mismatch");

    std::vector<double> mu_a, mu_b, sig_a, sig_b;
    mean_cov(features_a, mu_a, sig_a);
    mean_cov(features_b, mu_b, sig_b);

    double mean_term = 0.0;
    for (int64_t i = 0; i < d; i++) {
        double diff = mu_a[size_t(i)] - mu_b[size_t(i)];
        mean_term += diff * diff;
    }

    // Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2)
    std::vector<double> root_a = sqrtm_psd(sig_a, d);
    std::vector<double> inner(size_t(d * d), 0.0), tmp(size_t(d * d), 0.0);
    gemm(false, false, d, d, d, 1.0, root_a.data(), d, sig_b.data(), d, 0.0, tmp.data(), d);
    gemm(false, false, d, d, d, 1.0, tmp.data(), d, root_a.data(), d, 0.0, inner.data(), d);
    // symmetrize against fp drift before the eigensolve
    for (int64_t i = 0; i < d; i++)
        for (int64_t j = i + 1; j < d; j++) {
            double s = 0.5 * (inner[size_t(i * d + j)] + inner[size_t(j * d + i)]);
            inner[size_t(i * d + j)] = s;
            inner[size_t(j * d + i)] = s;
        }
    std::vector<double> root_inner = sqrtm_psd(inner, d);

    double trace = 0.0;
    for (int64_t i = 0; i < d; i++)
        trace += sig_a[size_t(i * d + i)] + sig_b[size_t(i * d + i)] -
                 2.0 * root_inner[size_t(i * d + i)];
    double result = mean_term + trace;
    return result > 0.0 ? result : 0.0;
}

MotionErrorReport motion_error(const VideoTensor& video, const Tensor<double>& track_joints,
                               const std::array<sprite::Color, sprite::kNumJoints>& joint_colors) {
    int64_t f_track = track_joints.dim(0);
    if (video.frames() < f_track)
        fail(ErrorKind::InvalidArgument, "motion_error: video has fewer frames than the track");
    int64_t h = video.height(), w = video.width();
    MotionErrorReport report;
    double total = 0.0;
    int64_t joint_slots = 0, missing = 0;
    for (int64_t f = 0; f < f_track; f++) {
        auto det = sprite::detect_joints(video.frame(f), joint_colors, 0.1f);
        for (int j = 0; j < sprite::kNumJoints; j++) {
            joint_slots++;
            if (!det[size_t(j)].found) {
                missing++;
                continue;
            }
            double gx = track_joints.at({f, j, 0}) * double(w - 1);
            double gy = track_joints.at({f, j, 1}) * double(h - 1);
            double dx = det[size_t(j)].x - gx, dy = det[size_t(j)].y - gy;
            total += std::sqrt(dx * dx + dy * dy);
            report.detected++;
        }
    }
    report.missed = missing;
    if (missing * 2 > joint_slots)
        fail(ErrorKind::DetectionFailure,
             "motion_error: joints missing in more than half of the frame slots");
    report.mean_pixel_error = report.detected > 0 ? total / double(report.detected) : 0.0;
    return report;
}

double garment_fidelity(const VideoTensor& video, const sprite::GarmentAsset& garment,
                        const MaskVideo& masks) {
    if (masks.frames != video.frames() || masks.height != video.height() ||
        masks.width != video.width())
        fail(ErrorKind::Shape, "garment_fidelity: mask/video shape mismatch");

    auto bin_of = [](float v) { return std::min(7, int(v * 8.0f)); };
    std::vector<double> tex_hist(512, 0.0);
    int64_t tex_n = garment.texture.dim(0) * garment.texture.dim(1);
    for (int64_t y = 0; y < garment.texture.dim(0); y++)
        for (int64_t x = 0; x < garment.texture.dim(1); x++) {
            int b = bin_of(garment.texture.at({y, x, 0})) * 64 +
                    bin_of(garment.texture.at({y, x, 1})) * 8 +
                    bin_of(garment.texture.at({y, x, 2}));
            tex_hist[size_t(b)] += 1.0;
        }
    for (auto& v : tex_hist) v /= double(tex_n);

    double total = 0.0;
    int64_t frames_used = 0;
    for (int64_t f = 0; f < video.frames(); f++) {
        std::vector<double> hist(512, 0.0);
        int64_t n = 0;
        for (int64_t y = 0; y < video.height(); y++)
            for (int64_t x = 0; x < video.width(); x++) {
                if (!masks.at(f, y, x)) continue;
                int b = bin_of(video.at(f, y, x, 0)) * 64 + bin_of(video.at(f, y, x, 1)) * 8 +
                        bin_of(video.at(f, y, x, 2));
                hist[size_t(b)] += 1.0;
                n++;
            }
        if (n == 0) continue;
        double inter = 0.0;
        for (int i = 0; i < 512; i++) inter += std::min(hist[size_t(i)] / double(n), tex_hist[size_t(i)]);
        total += inter;
        frames_used++;
    }
    if (frames_used == 0)
        fail(ErrorKind::InvalidArgument, "garment_fidelity: masks are empty in every frame");
    return total / double(frames_used);
}

}  // namespace tryon
