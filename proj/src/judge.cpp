#include "tryon/judge.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "tryon/image_io.hpp"
#include "tryon/rng.hpp"
#include "tryon/util.hpp"

namespace tryon {

using nlohmann::json;

const std::array<const char*, kNumAspects> kAspectNames = {"TryOn", "User", "Motion",
                                                           "Visual", "Overall"};

void Rubric::validate() const {
    for (int i = 0; i < kNumAspects; i++)
        if (instructions[size_t(i)].empty())
            fail(ErrorKind::Config, std::string("rubric is missing the ") + kAspectNames[size_t(i)] +
                                        " aspect");
    if (frame_grid < 4) fail(ErrorKind::Config, "rubric frame grid must be >= 4");
}

std::string Rubric::prompt_text() const {
    std::ostringstream ss;
    ss << "You are grading a generated try-on video. The first image tiles " << frame_grid
       << " uniformly spaced frames; the remaining images are the user photo and the "
          "garment conditions.\n";
    ss << "Grade each aspect from 0 to 100 and reply with exactly five lines, one per "
          "aspect, formatted '<Aspect>: <score>'.\n\n";
    for (int i = 0; i < kNumAspects; i++) {
        ss << kAspectNames[size_t(i)] << ": " << instructions[size_t(i)] << "\n";
        if (!anchors[size_t(i)].empty()) ss << "  anchors: " << anchors[size_t(i)] << "\n";
    }
    return ss.str();
}

std::string Rubric::content_hash() const {
    Sha256 h;
    h.update(prompt_text());
    return h.hex_digest();
}

Rubric Rubric::builtin() {
    Rubric r;
    r.instructions = {
        "Garment fidelity: does the worn garment match the provided garment images in "
        "color, pattern and coverage?",
        "User fidelity: does the person keep the identity and body appearance of the "
        "user photo?",
        "Motion quality: is the body motion smooth, plausible and consistent across "
        "frames?",
        "Visual quality: sharpness, absence of artifacts and stable colors.",
        "Overall quality considering all aspects above.",
    };
    r.anchors = {
        "0 wrong garment, 50 right colors wrong placement, 100 faithful try-on",
        "0 different person, 50 similar, 100 same person",
        "0 frozen or erratic, 50 jittery, 100 smooth and faithful",
        "0 unreadable, 50 visible artifacts, 100 clean",
        "holistic 0-100",
    };
    r.frame_grid = 8;
    return r;
}

Rubric Rubric::load(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("bad rubric json: ") + e.what());
    }
    Rubric r;
    for (int i = 0; i < kNumAspects; i++) {
        const auto& aj = j.at("aspects").at(kAspectNames[size_t(i)]);
        r.instructions[size_t(i)] = aj.at("instruction").get<std::string>();
        r.anchors[size_t(i)] = aj.value("anchors", "");
    }
    r.frame_grid = j.value("frame_grid", 8);
    r.validate();
    return r;
}

AspectScores parse_grade(const std::string& text) {
    AspectScores out;
    std::array<bool, kNumAspects> seen{};
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        size_t start = line.find_first_not_of(' ');
        if (start == std::string::npos) continue;
        line = line.substr(start);
        if (line.empty()) continue;
        size_t colon = line.find(':');
        if (colon == std::string::npos)
            fail(ErrorKind::Parse, "grade line without ':': \"" + line + "\"");
        std::string aspect = line.substr(0, colon);
        int idx = -1;
        for (int i = 0; i < kNumAspects; i++)
            if (aspect == kAspectNames[size_t(i)]) idx = i;
        if (idx < 0) fail(ErrorKind::Parse, "unknown aspect: \"" + aspect + "\"");
        if (seen[size_t(idx)]) fail(ErrorKind::Parse, "duplicate aspect: \"" + aspect + "\"");
        std::string num = line.substr(colon + 1);
        size_t pos = 0;
        double v;
        try {
            v = std::stod(num, &pos);
        } catch (const std::exception&) {
            fail(ErrorKind::Parse, "bad score for aspect " + aspect + ": \"" + num + "\"");
        }
        while (pos < num.size() && num[pos] == ' ') pos++;
        if (pos != num.size())
            fail(ErrorKind::Parse, "trailing junk after score for " + aspect);
        if (v < 0.0 || v > 100.0)
            fail(ErrorKind::Parse,
                 "score out of [0,100] for " + aspect + ": " + std::to_string(v));
        seen[size_t(idx)] = true;
        out.scores[size_t(idx)] = v;
    }
    for (int i = 0; i < kNumAspects; i++)
        if (!seen[size_t(i)])
            fail(ErrorKind::Parse, std::string("missing aspect line: ") + kAspectNames[size_t(i)]);
    return out;
}

std::string StubJudgeClient::send(const std::string& prompt,
                                  const std::vector<std::string>& images_b64,
                                  int request_index) {
    Sha256 h;
    h.update(prompt);
    for (const auto& img : images_b64) h.update(img);
    h.update(std::to_string(key_));
    h.update(std::to_string(request_index));
    std::string digest = h.hex_digest();
    std::ostringstream ss;
    for (int i = 0; i < kNumAspects; i++) {
        // 12 hex chars per aspect -> [0, 100]
        uint64_t v = std::stoull(digest.substr(size_t(12 * i), 12), nullptr, 16);
        double score = double(v % 10001) / 100.0;
        ss << kAspectNames[size_t(i)] << ": " << score << "\n";
    }
    return ss.str();
}

std::string ConstantJudgeClient::send(const std::string&, const std::vector<std::string>&,
                                      int idx) {
    if (!replies_.empty()) return replies_[size_t(idx) % replies_.size()];
    std::ostringstream ss;
    for (int i = 0; i < kNumAspects; i++) ss << kAspectNames[size_t(i)] << ": " << score_ << "\n";
    return ss.str();
}

std::string HttpJudgeClient::send(const std::string& prompt,
                                  const std::vector<std::string>& images_b64, int) {
    // split endpoint into host and path
    std::string url = cfg_.endpoint_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        fail(ErrorKind::Config, "judge endpoint must be an http(s) url");
    auto path_start = url.find('/', scheme_end + 3);
    std::string host = url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    json body;
    body["model"] = cfg_.model;
    body["prompt"] = prompt;
    body["images"] = images_b64;

    httplib::Client client(host);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()))
        headers.emplace("Authorization", std::string("Bearer ") + key);
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) fail(ErrorKind::Grading, "judge endpoint unreachable: " + cfg_.endpoint_url);
    if (res->status != 200)
        fail(ErrorKind::Grading, "judge endpoint returned status " + std::to_string(res->status));
    try {
        json reply = json::parse(res->body);
        return reply.at("text").get<std::string>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("judge reply is not {\"text\": ...} json: ") + e.what());
    }
}

Image tile_frame_grid(const VideoTensor& video, int k) {
    if (k < 1) fail(ErrorKind::InvalidArgument, "frame grid must be >= 1");
    int64_t t = video.frames();
    int cols = int(std::ceil(std::sqrt(double(k))));
    int rows = int((k + cols - 1) / cols);
    int64_t h = video.height(), w = video.width();
    Image grid({rows * h, cols * w, 3});
    for (int i = 0; i < k; i++) {
        int64_t src = t > 1 ? int64_t(std::llround(double(i) * double(t - 1) / double(k - 1)))
                            : 0;
        src = std::clamp<int64_t>(src, 0, t - 1);
        Image f = video.frame(src);
        int64_t oy = (i / cols) * h, ox = (i % cols) * w;
        for (int64_t y = 0; y < h; y++)
            for (int64_t x = 0; x < w; x++)
                for (int64_t c = 0; c < 3; c++)
                    grid.at({oy + y, ox + x, c}) = f.at({y, x, c});
    }
    return grid;
}

GradeReport grade_video(const VideoTensor& video, const GradeRequestContext& ctx,
                        const Rubric& rubric, int n, JudgeClient& client) {
    if (n < 1) fail(ErrorKind::InvalidArgument, "grade_video: n must be >= 1");
    rubric.validate();

    std::vector<std::string> images;
    images.push_back(base64_encode(encode_png_rgb(tile_frame_grid(video, rubric.frame_grid))));
    images.push_back(base64_encode(encode_png_rgb(ctx.user_image)));
    for (const auto& g : ctx.garments) images.push_back(base64_encode(encode_png_rgb(g)));

    std::string prompt = rubric.prompt_text();
    if (!ctx.caption.empty()) {
        prompt += "\nRequest caption:";
        for (const auto& w : ctx.caption) prompt += " " + w;
        prompt += "\n";
    }

    GradeReport report;
    report.rubric_hash = rubric.content_hash();
    report.model = client.model_id();
    report.n = n;
    for (int i = 0; i < n; i++) {
        AspectScores scores;
        int attempts = 0;
        for (;;) {
            attempts++;
            try {
                scores = parse_grade(client.send(prompt, images, i));
                break;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Parse) throw;
                if (attempts >= 3)
                    fail(ErrorKind::Grading,
                         std::string("grading failed after 3 malformed replies: ") + e.what());
            }
        }
        report.raw.push_back(scores);
    }
    for (int a = 0; a < kNumAspects; a++) {
        double m = 0;
        for (const auto& s : report.raw) m += s.scores[size_t(a)];
        m /= double(n);
        double var = 0;
        for (const auto& s : report.raw) {
            double d = s.scores[size_t(a)] - m;
            var += d * d;
        }
        report.mean[size_t(a)] = m;
        report.stddev[size_t(a)] = std::sqrt(var / double(n));  // population
    }
    return report;
}

std::string GradeReport::to_json() const {
    json j;
    j["model"] = model;
    j["rubric_hash"] = rubric_hash;
    j["n"] = n;
    json aspects;
    for (int a = 0; a < kNumAspects; a++)
        aspects[kAspectNames[size_t(a)]] = {{"mean", mean[size_t(a)]},
                                            {"std", stddev[size_t(a)]}};
    j["aspects"] = aspects;
    json raw = json::array();
    for (const auto& s : this->raw) {
        json row;
        for (int a = 0; a < kNumAspects; a++) row[kAspectNames[size_t(a)]] = s.scores[size_t(a)];
        raw.push_back(row);
    }
    j["raw"] = raw;
    return j.dump(2);
}

}  // namespace tryon
