#ifndef TRYON_JUDGE_HPP
#define TRYON_JUDGE_HPP

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "tryon/conditioning.hpp"
#include "tryon/video.hpp"

namespace tryon {

constexpr int kNumAspects = 5;
extern const std::array<const char*, kNumAspects> kAspectNames;  // TryOn..Overall

struct Rubric {
    std::array<std::string, kNumAspects> instructions;
    std::array<std::string, kNumAspects> anchors;  // 0-100 scoring anchors
    int frame_grid = 8;                            // K frames tiled per request

    void validate() const;  // five aspects present, K >= 4
    std::string prompt_text() const;
    std::string content_hash() const;

    static Rubric load(const std::string& path);
    static Rubric builtin();
};

// One grading reply: exactly five "<Aspect>: <score>" lines.
struct AspectScores {
    std::array<double, kNumAspects> scores{};
};

// Strict reply grammar; duplicates, omissions, unknown lines and
// out-of-range values are parse errors naming the defect.
AspectScores parse_grade(const std::string& text);

struct GradeReport {
    std::array<double, kNumAspects> mean{};
    std::array<double, kNumAspects> stddev{};
    int64_t n = 0;
    std::vector<AspectScores> raw;  // ordered by request index
    std::string rubric_hash;
    std::string model;

    std::string to_json() const;
};

// Provider-agnostic text+image client. send() receives the prompt and the
// base64 PNG images and returns the model's reply text.
class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    virtual std::string send(const std::string& prompt,
                             const std::vector<std::string>& images_b64,
                             int request_index) = 0;
    virtual std::string model_id() const = 0;
};

// Offline deterministic stub: scores are a keyed hash of (prompt, images,
// request index), so reports are bit-reproducible.
class StubJudgeClient : public JudgeClient {
public:
    explicit StubJudgeClient(uint64_t key = 0) : key_(key) {}
    std::string send(const std::string& prompt, const std::vector<std::string>& images_b64,
                     int request_index) override;
    std::string model_id() const override { return "stub"; }

private:
    uint64_t key_;
};

// Fixed-reply stub used in tests.
class ConstantJudgeClient : public JudgeClient {
public:
    explicit ConstantJudgeClient(double score) : score_(score) {}
    ConstantJudgeClient(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    std::string send(const std::string&, const std::vector<std::string>&, int idx) override;
    std::string model_id() const override { return "constant"; }

private:
    double score_ = 70.0;
    std::vector<std::string> replies_;
};

struct HttpJudgeConfig {
    std::string endpoint_url;            // e.g. http://host:port/v1/grade
    std::string model = "judge";
    std::string api_key_env = "JUDGE_API_KEY";
    int timeout_seconds = 60;
};

// POSTs {model, prompt, images: [base64 png]} as JSON; expects a JSON reply
// with a "text" field holding the grading lines.
class HttpJudgeClient : public JudgeClient {
public:
    explicit HttpJudgeClient(HttpJudgeConfig cfg) : cfg_(std::move(cfg)) {}
    std::string send(const std::string& prompt, const std::vector<std::string>& images_b64,
                     int request_index) override;
    std::string model_id() const override { return cfg_.model; }

private:
    HttpJudgeConfig cfg_;
};

struct GradeRequestContext {
    Image user_image;
    std::vector<Image> garments;
    std::vector<std::string> caption;
};

// Tiles K uniformly spaced frames into a grid, sends grid + condition
// images + rubric prompt, parses replies, repeats n times and aggregates.
// Up to 3 retries per request on malformed replies before failing.
GradeReport grade_video(const VideoTensor& video, const GradeRequestContext& ctx,
                        const Rubric& rubric, int n, JudgeClient& client);

Image tile_frame_grid(const VideoTensor& video, int k);

}  // namespace tryon

#endif
