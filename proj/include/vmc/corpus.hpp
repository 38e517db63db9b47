#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "vmc/conditioning.hpp"
#include "vmc/video.hpp"

namespace vmc {

/// Compact, fully regenerable description of one synthetic clip. All
/// kinematic parameters (speed, phase, start position, exact foreground
/// intensity) are derived deterministically from the seed, with independent
/// streams for motion and appearance so that changing appearance attributes
/// at a fixed (motion, seed) leaves the trajectory unchanged exactly.
struct ClipSpec {
    int motion = 0;     // vocab::motions index
    int shape = 0;      // vocab::shapes index
    int intensity = 2;  // vocab::intensities index
    int texture = 0;    // vocab::textures index
    int level = 1;      // vocab::levels index
    int n_keyframes = 8;
    int height = 16;
    int width = 16;
    std::uint64_t seed = 0;

    StructuredPrompt prompt() const;
    nlohmann::json to_json() const;
    static ClipSpec from_json(const nlohmann::json& j);
};

/// Keyframes plus the 4x-time fine timeline and 2x-resolution renders the
/// cascade stages train on, and the generator's ground-truth centroid track.
/// Low-res frames are average-pooled from the high-res render, so pooling
/// the high-res ground truth recovers the low-res frames exactly.
struct RenderedClip {
    VideoTensor keyframes;      // N x (h*w)
    VideoTensor keyframes_hi;   // N x (2h*2w)
    VideoTensor fine;           // (4(N-1)+1) x (h*w)
    VideoTensor fine_hi;
    Eigen::MatrixX2d track_keyframes;  // ground-truth centroid (x, y), low-res px
    Eigen::MatrixX2d track_fine;
    StructuredPrompt prompt;
};

RenderedClip render_clip(const ClipSpec& spec);

/// The public generation contract: low-res keyframe clip plus its prompt.
std::pair<VideoTensor, StructuredPrompt> generate_clip(const ClipSpec& spec);

VideoTensor reverse_clip(const VideoTensor& v);

/// Intensity-weighted centroid of above-threshold pixels, per frame.
/// Frames with no foreground are flagged and carry the previous position
/// forward (leading empties are backfilled from the first valid frame).
struct CentroidTrack {
    Eigen::MatrixX2d pos;             // (x, y), pixel units
    std::vector<std::uint8_t> empty;  // 1 where no pixel crossed the threshold
    bool any_valid = false;
};

CentroidTrack extract_centroid_track(const VideoTensor& v, double threshold = 0.5);

/// Rule-based re-derivation of the motion class from a clean centroid
/// track; the generator-side consistency oracle.
int motion_class_from_track(const Eigen::MatrixX2d& track);

struct CorpusConfig {
    int n_train = 512;
    int n_keyframes = 8;
    int height = 16;
    int width = 16;
    std::vector<std::pair<int, int>> holdout_pairs;  // (motion, shape)
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static CorpusConfig from_json(const nlohmann::json& j);
};

struct CorpusEntry {
    ClipSpec spec;
    std::string split;  // "train"
};

/// Balanced round-robin over all (motion, shape) pairs not held out, with
/// per-clip sampled intensity/texture/level and a derived per-clip seed.
std::vector<CorpusEntry> build_corpus(const CorpusConfig& cfg);

/// JSON-lines corpus index, one ClipSpec + split per line.
void save_corpus_index(const std::string& path,
                       const std::vector<CorpusEntry>& entries);
std::vector<CorpusEntry> load_corpus_index(const std::string& path);

/// Renders just the keyframe clips (training set for the base model).
std::vector<std::pair<VideoTensor, StructuredPrompt>> render_corpus(
    const std::vector<CorpusEntry>& entries);

}  // namespace vmc
