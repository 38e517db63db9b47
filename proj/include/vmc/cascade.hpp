#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vmc/corpus.hpp"
#include "vmc/diffusion.hpp"

namespace vmc {

/// Trained regression upscaler, 2x per axis (d -> 4d pixels). One hidden
/// GELU layer, trained on paired low/high-resolution renders.
struct SRConfig {
    int height = 16;
    int width = 16;
    int hidden = 384;

    int in_dim() const { return height * width; }
    int out_dim() const { return 4 * height * width; }
    nlohmann::json to_json() const;
    static SRConfig from_json(const nlohmann::json& j);
};

struct SRModel {
    SRConfig cfg;
    NamedTensors params;
};

SRModel init_sr(const SRConfig& cfg, std::uint64_t seed);

struct SRTrainConfig {
    int steps = 1200;
    int batch = 32;
    AdamWConfig opt = {.lr = 2e-3, .weight_decay = 0.01};
    std::uint64_t seed = 0;
};

/// Trains on (low-res frame, high-res frame) rows.
std::vector<double> train_sr(SRModel& m, const Eigen::MatrixXd& lo,
                             const Eigen::MatrixXd& hi, const SRTrainConfig& cfg);

/// Upscales every frame; errors if the input resolution does not match the
/// training resolution.
VideoTensor super_resolve(const VideoTensor& v, const SRModel& m);

/// 2x2 average pooling, the left inverse the upscaler is trained against.
VideoTensor downsample2x(const VideoTensor& v);

// ---------------------------------------------------------------------
// Frame interpolation: a small conditional diffusion model over 5-frame
// windows (2 clean keyframes bracketing 3 generated frames). Keyframe slots
// are clamped to the inputs at every sampling step.
// ---------------------------------------------------------------------

struct InterpTrainConfig {
    int steps = 1500;
    int batch = 4;
    double static_window_fraction = 0.1;  // identical-frame windows mixed in
    AdamWConfig opt = {.lr = 3e-4, .weight_decay = 0.01};
    std::uint64_t seed = 0;
};

DenoiserModel init_interp(const DenoiserConfig& cfg, std::uint64_t seed);

/// Trains the window denoiser on the corpus' fine (4x time) renders.
std::vector<double> train_interp(DenoiserModel& m,
                                 const std::vector<CorpusEntry>& entries,
                                 const NoiseSchedule& s,
                                 const InterpTrainConfig& cfg);

struct InterpSampleConfig {
    int steps = 25;
    std::uint64_t seed = 0;
};

/// 8 keyframes -> 29 frames: 3 generated frames in each of the 7 gaps;
/// the keyframes land unchanged at output indexes 0,4,...,28 (1-based
/// 1,5,...,29).
VideoTensor interpolate_frames(const VideoTensor& keyframes,
                               const DenoiserModel& interp,
                               const NoiseSchedule& s,
                               const InterpSampleConfig& cfg);

// ---------------------------------------------------------------------
// Cascade bundle and the end-to-end pipeline
// ---------------------------------------------------------------------

/// Keyframe generator (adaptable) plus frozen interpolation and
/// super-resolution stages. The frozen-stage hashes are recorded when the
/// bundle is created and re-verified around every run.
struct CascadeBundle {
    DenoiserModel keyframe;
    DenoiserModel interp;
    SRModel sr;
    NoiseSchedule sched_keyframe;
    NoiseSchedule sched_interp;
    std::string interp_hash;
    std::string sr_hash;
};

CascadeBundle make_bundle(DenoiserModel keyframe, DenoiserModel interp, SRModel sr,
                          NoiseSchedule sched_keyframe, NoiseSchedule sched_interp);

/// Throws CheckpointError if a frozen stage changed since bundle creation.
void verify_frozen(const CascadeBundle& bundle);

struct PipelineConfig {
    int invert_steps = 50;
    int sample_steps = 50;
    double eta = 0.0;
    int interp_steps = 25;
    std::uint64_t seed = 0;
    bool invert_with_source_prompt = false;  // default: appearance-invariant
};

struct PipelineResult {
    VideoTensor inverted_latent;
    VideoTensor keyframes;     // clamped to [0,1]
    VideoTensor interpolated;  // 29 frames
    VideoTensor final_video;   // 29 frames at 2x resolution
};

/// DDIM-invert the source under appearance-invariant conditioning, sample
/// keyframes from the inverted latents under the target prompt, then run the
/// frozen interpolation and super-resolution stages.
PipelineResult vmc_pipeline(const VideoTensor& source,
                            const StructuredPrompt& source_prompt,
                            const StructuredPrompt& target_prompt,
                            const CascadeBundle& bundle,
                            const PipelineConfig& cfg);

}  // namespace vmc
