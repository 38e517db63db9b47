#include "vmc/corpus.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "vmc/rng.hpp"

namespace vmc {

namespace {

// Conservative half-extent used for every shape when picking a start
// position, so the feasible box does not depend on appearance.
constexpr double kShapeReach = 3.0;
constexpr double kBorderMargin = 0.25;
constexpr double kTextureAmp = 0.045;

const double kIntensityCenters[] = {0.65, 0.75, 0.85, 0.95};
const double kLevelBases[] = {0.08, 0.17, 0.26, 0.35};

struct Kinematics {
    // Relative trajectory; the clip center is added afterwards.
    // Evaluated at keyframe time units (fine frames use fractional t).
    int motion = 0;
    double speed = 1.0;       // translations, px per keyframe
    double amplitude = 2.5;   // oscillators
    double period = 8.0;      // keyframes
    double phase = 0.0;
    int chirality = 1;        // circle orientation

    Eigen::Vector2d rel(double t) const {
        const double w = 2.0 * M_PI / period;
        switch (motion) {
            case 0: return {speed * t, 0.0};                    // right
            case 1: return {-speed * t, 0.0};                   // left
            case 2: return {0.0, -speed * t};                   // up
            case 3: return {0.0, speed * t};                    // down
            case 4: return {amplitude * std::sin(w * t + phase), 0.0};  // bounce_x
            case 5: return {0.0, amplitude * std::sin(w * t + phase)};  // bounce_y
            case 6:                                             // circle
                return {amplitude * std::cos(w * t + phase),
                        chirality * amplitude * std::sin(w * t + phase)};
            case 7:                                             // zigzag
                return {amplitude * std::sin(w * t + phase),
                        0.8 * amplitude * std::sin(2.0 * w * t + phase)};
        }
        throw ConfigError("unknown motion class id " + std::to_string(motion));
    }
};

Kinematics sample_kinematics(int motion, Rng& rng) {
    Kinematics k;
    k.motion = motion;
    k.speed = rng.uniform(0.7, 1.05);
    k.amplitude = rng.uniform(2.2, 3.0);
    // Periods short enough that 8 keyframes always see a clear reversal;
    // this keeps the classes separable within a single clip.
    if (motion == 6)
        k.period = 8.0;
    else if (motion == 7)
        k.period = rng.uniform(6.0, 8.0);
    else
        k.period = rng.uniform(5.0, 8.0);
    k.phase = rng.uniform(0.0, 2.0 * M_PI);
    k.chirality = rng.uniform() < 0.5 ? 1 : -1;
    return k;
}

// Signed distance-free coverage test: is the (lo-res) point inside the shape
// centered at the origin?
bool inside_shape(int shape, double dx, double dy) {
    const double ax = std::abs(dx), ay = std::abs(dy);
    switch (shape) {
        case 0: return dx * dx + dy * dy <= 2.4 * 2.4;                 // disc
        case 1: return ax <= 2.1 && ay <= 2.1;                         // square
        case 2: return ax + ay <= 2.9;                                 // diamond
        case 3: {                                                      // ring
            const double r2 = dx * dx + dy * dy;
            return r2 >= 1.35 * 1.35 && r2 <= 2.5 * 2.5;
        }
        case 4:                                                        // plus
            return (ax <= 0.9 && ay <= 2.7) || (ay <= 0.9 && ax <= 2.7);
        case 5:                                                        // cross
            return std::abs(ax - ay) <= 1.0 && ax <= 2.6 && ay <= 2.6;
        case 6: return ay <= 1.0 && ax <= 2.9;                         // hbar
        case 7: return ax <= 1.0 && ay <= 2.9;                         // vbar
    }
    throw ConfigError("unknown shape id " + std::to_string(shape));
}

double background_at(int texture, double base, double x, double y) {
    switch (texture) {
        case 0: return base;                                           // flat
        case 1: return base + kTextureAmp * std::sin(2.0 * M_PI * y / 4.0);
        case 2: return base + kTextureAmp * std::sin(2.0 * M_PI * x / 4.0);
        case 3:
            return base + kTextureAmp * std::sin(2.0 * M_PI * x / 4.0) *
                              std::sin(2.0 * M_PI * y / 4.0);
    }
    throw ConfigError("unknown texture id " + std::to_string(texture));
}

}  // namespace

StructuredPrompt ClipSpec::prompt() const {
    StructuredPrompt p;
    p.motion = motion;
    p.shape = shape;
    p.intensity = intensity;
    p.texture = texture;
    p.level = level;
    return p;
}

nlohmann::json ClipSpec::to_json() const {
    return {{"motion", motion},   {"shape", shape},
            {"intensity", intensity}, {"texture", texture},
            {"level", level},     {"n_keyframes", n_keyframes},
            {"height", height},   {"width", width},
            {"seed", seed}};
}

ClipSpec ClipSpec::from_json(const nlohmann::json& j) {
    ClipSpec s;
    s.motion = j.at("motion").get<int>();
    s.shape = j.at("shape").get<int>();
    s.intensity = j.at("intensity").get<int>();
    s.texture = j.at("texture").get<int>();
    s.level = j.at("level").get<int>();
    s.n_keyframes = j.at("n_keyframes").get<int>();
    s.height = j.at("height").get<int>();
    s.width = j.at("width").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

RenderedClip render_clip(const ClipSpec& spec) {
    require_config(spec.n_keyframes >= 2, "render_clip: need N >= 2");
    require_config(spec.motion >= 0 && spec.motion < vocab::kMotionCount &&
                       spec.shape >= 0 && spec.shape < vocab::kShapeCount &&
                       spec.intensity >= 0 &&
                       spec.intensity < vocab::kIntensityCount &&
                       spec.texture >= 0 && spec.texture < vocab::kTextureCount &&
                       spec.level >= 0 && spec.level < vocab::kLevelCount,
                   "render_clip: factor id out of vocabulary bounds");

    // Independent streams: appearance draws never perturb the trajectory.
    Rng motion_rng(mix_seed(spec.seed, 0x10));
    Rng app_rng(mix_seed(spec.seed, 0x20));

    const Kinematics kin = sample_kinematics(spec.motion, motion_rng);
    const int n_fine = 4 * (spec.n_keyframes - 1) + 1;

    // Trajectory extent on the fine timeline decides the feasible center.
    double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
    for (int f = 0; f < n_fine; ++f) {
        const Eigen::Vector2d r = kin.rel(f / 4.0);
        min_x = std::min(min_x, r.x());
        max_x = std::max(max_x, r.x());
        min_y = std::min(min_y, r.y());
        max_y = std::max(max_y, r.y());
    }
    const double lo_x = kShapeReach + kBorderMargin - min_x;
    const double hi_x = (spec.width - 1) - kShapeReach - kBorderMargin - max_x;
    const double lo_y = kShapeReach + kBorderMargin - min_y;
    const double hi_y = (spec.height - 1) - kShapeReach - kBorderMargin - max_y;
    require_config(lo_x <= hi_x && lo_y <= hi_y,
                   "render_clip: trajectory does not fit inside the frame");
    // midpoint of the feasible box: placement is a function of the
    // trajectory alone, so instance variety lives in phase/speed/period
    const Eigen::Vector2d center(0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y));

    const double band = kIntensityCenters[spec.intensity];
    const double fg = band + app_rng.uniform(-0.04, 0.04);
    const double base = kLevelBases[spec.level];

    const int hi_h = 2 * spec.height, hi_w = 2 * spec.width;
    RenderedClip out;
    out.prompt = spec.prompt();
    out.fine_hi = make_video(n_fine, hi_h, hi_w);
    out.track_fine.resize(n_fine, 2);

    for (int f = 0; f < n_fine; ++f) {
        const Eigen::Vector2d pos = center + kin.rel(f / 4.0);
        out.track_fine.row(f) = pos.transpose();
        for (int r = 0; r < hi_h; ++r)
            for (int c = 0; c < hi_w; ++c) {
                // 2x2 supersampling per high-res pixel, in low-res units;
                // integer coordinates sit at pixel centers (a bright pixel at
                // index (r,c) has its centroid at exactly (r,c))
                int hits = 0;
                for (int sy = 0; sy < 2; ++sy)
                    for (int sx = 0; sx < 2; ++sx) {
                        const double x = (c + 0.25 + 0.5 * sx) / 2.0 - 0.5;
                        const double y = (r + 0.25 + 0.5 * sy) / 2.0 - 0.5;
                        if (inside_shape(spec.shape, x - pos.x(), y - pos.y()))
                            ++hits;
                    }
                const double x_lo = (c + 0.5) / 2.0 - 0.5;
                const double y_lo = (r + 0.5) / 2.0 - 0.5;
                const double bg = background_at(spec.texture, base, x_lo, y_lo);
                const double cov = hits / 4.0;
                out.fine_hi.pixel(f, r, c) = bg + cov * (fg - bg);
            }
    }

    // Low-res frames are exact 2x2 averages of the high-res render.
    out.fine = make_video(n_fine, spec.height, spec.width);
    for (int f = 0; f < n_fine; ++f)
        for (int r = 0; r < spec.height; ++r)
            for (int c = 0; c < spec.width; ++c)
                out.fine.pixel(f, r, c) =
                    0.25 * (out.fine_hi.pixel(f, 2 * r, 2 * c) +
                            out.fine_hi.pixel(f, 2 * r, 2 * c + 1) +
                            out.fine_hi.pixel(f, 2 * r + 1, 2 * c) +
                            out.fine_hi.pixel(f, 2 * r + 1, 2 * c + 1));

    out.keyframes = make_video(spec.n_keyframes, spec.height, spec.width);
    out.keyframes_hi = make_video(spec.n_keyframes, hi_h, hi_w);
    out.track_keyframes.resize(spec.n_keyframes, 2);
    for (int k = 0; k < spec.n_keyframes; ++k) {
        out.keyframes.frames.row(k) = out.fine.frames.row(4 * k);
        out.keyframes_hi.frames.row(k) = out.fine_hi.frames.row(4 * k);
        out.track_keyframes.row(k) = out.track_fine.row(4 * k);
    }
    return out;
}

std::pair<VideoTensor, StructuredPrompt> generate_clip(const ClipSpec& spec) {
    RenderedClip r = render_clip(spec);
    return {std::move(r.keyframes), r.prompt};
}

VideoTensor reverse_clip(const VideoTensor& v) {
    VideoTensor out = v;
    out.frames = v.frames.colwise().reverse();
    return out;
}

CentroidTrack extract_centroid_track(const VideoTensor& v, double threshold) {
    const int n = v.frame_count();
    CentroidTrack track;
    track.pos.resize(n, 2);
    track.empty.assign(static_cast<std::size_t>(n), 0);
    for (int f = 0; f < n; ++f) {
        double wsum = 0.0, xsum = 0.0, ysum = 0.0;
        for (int r = 0; r < v.height; ++r)
            for (int c = 0; c < v.width; ++c) {
                const double p = v.pixel(f, r, c);
                if (p > threshold) {
                    // excess over the threshold, so partially covered edge
                    // pixels contribute in proportion to their coverage
                    const double w = p - threshold;
                    wsum += w;
                    xsum += w * c;
                    ysum += w * r;
                }
            }
        if (wsum > 0.0) {
            track.pos(f, 0) = xsum / wsum;
            track.pos(f, 1) = ysum / wsum;
            track.any_valid = true;
        } else {
            track.empty[static_cast<std::size_t>(f)] = 1;
            track.pos.row(f) = (f > 0) ? track.pos.row(f - 1)
                                       : Eigen::RowVector2d(v.width / 2.0,
                                                            v.height / 2.0);
        }
    }
    // Backfill leading empty frames from the first valid one.
    int first_valid = -1;
    for (int f = 0; f < n; ++f)
        if (!track.empty[static_cast<std::size_t>(f)]) {
            first_valid = f;
            break;
        }
    for (int f = 0; f < first_valid; ++f) track.pos.row(f) = track.pos.row(first_valid);
    return track;
}

int motion_class_from_track(const Eigen::MatrixX2d& track) {
    const long n = track.rows();
    require_config(n >= 3, "motion_class_from_track: track too short");
    Eigen::MatrixX2d d(n - 1, 2);
    for (long i = 0; i + 1 < n; ++i) d.row(i) = track.row(i + 1) - track.row(i);

    // an axis oscillates when it takes large steps in both directions
    auto reverses = [&](int axis) {
        return d.col(axis).maxCoeff() > 0.25 && d.col(axis).minCoeff() < -0.25;
    };
    const double range_x = track.col(0).maxCoeff() - track.col(0).minCoeff();
    const double range_y = track.col(1).maxCoeff() - track.col(1).minCoeff();
    const bool osc_x = reverses(0) && range_x > 1.0;
    const bool osc_y = reverses(1) && range_y > 1.0;

    if (!osc_x && !osc_y) {
        const Eigen::RowVector2d net = track.row(n - 1) - track.row(0);
        if (std::abs(net.x()) >= std::abs(net.y()))
            return net.x() >= 0.0 ? 0 : 1;  // right : left
        return net.y() >= 0.0 ? 3 : 2;      // down : up
    }
    if (osc_x && !osc_y) return 4;  // bounce_x
    if (osc_y && !osc_x) return 5;  // bounce_y

    // circle vs zigzag: constant-rate circular motion has near-uniform step
    // lengths and a consistent turning direction; the figure-eight has
    // neither
    Eigen::VectorXd lens(d.rows());
    for (long i = 0; i < d.rows(); ++i) lens[i] = d.row(i).norm();
    const double mean_len = lens.mean();
    const double cv =
        std::sqrt((lens.array() - mean_len).square().mean()) / mean_len;
    double cross_sum = 0.0, cross_abs = 0.0;
    for (long i = 0; i + 1 < d.rows(); ++i) {
        const double cr = d(i, 0) * d(i + 1, 1) - d(i, 1) * d(i + 1, 0);
        cross_sum += cr;
        cross_abs += std::abs(cr);
    }
    const bool uniform_turning =
        cross_abs > 0 && std::abs(cross_sum) > 0.8 * cross_abs;
    return (cv < 0.25 && uniform_turning) ? 6 : 7;  // circle : zigzag
}

nlohmann::json CorpusConfig::to_json() const {
    nlohmann::json j;
    j["n_train"] = n_train;
    j["n_keyframes"] = n_keyframes;
    j["height"] = height;
    j["width"] = width;
    j["seed"] = seed;
    j["holdout_pairs"] = nlohmann::json::array();
    for (const auto& [m, s] : holdout_pairs)
        j["holdout_pairs"].push_back({{"motion", m}, {"shape", s}});
    return j;
}

CorpusConfig CorpusConfig::from_json(const nlohmann::json& j) {
    CorpusConfig c;
    c.n_train = j.value("n_train", c.n_train);
    c.n_keyframes = j.value("n_keyframes", c.n_keyframes);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.seed = j.value("seed", static_cast<std::uint64_t>(0));
    if (j.contains("holdout_pairs"))
        for (const auto& hp : j.at("holdout_pairs"))
            c.holdout_pairs.emplace_back(hp.at("motion").get<int>(),
                                         hp.at("shape").get<int>());
    return c;
}

std::vector<CorpusEntry> build_corpus(const CorpusConfig& cfg) {
    require_config(cfg.n_train >= 1, "build_corpus: n_train must be positive");
    std::vector<std::pair<int, int>> pairs;
    for (int m = 0; m < vocab::kMotionCount; ++m)
        for (int s = 0; s < vocab::kShapeCount; ++s) {
            bool held = false;
            for (const auto& [hm, hs] : cfg.holdout_pairs)
                if (hm == m && hs == s) held = true;
            if (!held) pairs.emplace_back(m, s);
        }
    require_config(!pairs.empty(), "build_corpus: every pair held out");

    Rng rng(mix_seed(cfg.seed, 0xC0));
    std::vector<CorpusEntry> out;
    out.reserve(static_cast<std::size_t>(cfg.n_train));
    for (int i = 0; i < cfg.n_train; ++i) {
        const auto& [m, s] = pairs[static_cast<std::size_t>(i) % pairs.size()];
        ClipSpec spec;
        spec.motion = m;
        spec.shape = s;
        spec.intensity =
            static_cast<int>(rng.uniform_int(0, vocab::kIntensityCount - 1));
        spec.texture =
            static_cast<int>(rng.uniform_int(0, vocab::kTextureCount - 1));
        spec.level = static_cast<int>(rng.uniform_int(0, vocab::kLevelCount - 1));
        spec.n_keyframes = cfg.n_keyframes;
        spec.height = cfg.height;
        spec.width = cfg.width;
        spec.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i) + 1000);
        out.push_back({spec, "train"});
    }
    return out;
}

void save_corpus_index(const std::string& path,
                       const std::vector<CorpusEntry>& entries) {
    std::ofstream os(path);
    if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
    for (const auto& e : entries) {
        nlohmann::json j = e.spec.to_json();
        j["split"] = e.split;
        j["prompt"] = nlohmann::json::parse(prompt_to_json(e.spec.prompt()));
        os << j.dump() << "\n";
    }
}

std::vector<CorpusEntry> load_corpus_index(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw CheckpointError("cannot open corpus index '" + path + "'");
    std::vector<CorpusEntry> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw CheckpointError("bad corpus index line: " + std::string(e.what()));
        }
        out.push_back({ClipSpec::from_json(j), j.value("split", "train")});
    }
    return out;
}

std::vector<std::pair<VideoTensor, StructuredPrompt>> render_corpus(
    const std::vector<CorpusEntry>& entries) {
    std::vector<std::pair<VideoTensor, StructuredPrompt>> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(generate_clip(e.spec));
    return out;
}

}  // namespace vmc
