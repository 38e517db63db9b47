#pragma once

#include <json.hpp>
#include <string>

#include "vmc/tensors.hpp"
#include "vmc/video.hpp"

namespace vmc {

/// Clip container: magic, length-prefixed JSON header, then frame data as
/// row-major 32-bit floats. Header carries {N, d, height, width, prompt,
/// seed, generator_version} plus a free-form "kind" tag (clean | latent).
struct ClipFile {
    VideoTensor video;
    nlohmann::json header;
};

void save_clip(const std::string& path, const VideoTensor& v,
               const nlohmann::json& header_extra = {});
ClipFile load_clip(const std::string& path);

/// Checkpoint container: named 32-bit-float tensors plus a JSON manifest
/// holding shapes, partition labels, an arbitrary config block, an optional
/// provenance block, and a content hash over the payload bytes. The hash is
/// verified on load.
struct CheckpointFile {
    NamedTensors tensors;
    nlohmann::json config;
    nlohmann::json provenance;
    std::string payload_hash;
};

void save_checkpoint(const std::string& path, const NamedTensors& tensors,
                     const nlohmann::json& config,
                     const nlohmann::json& provenance = nlohmann::json::object());
CheckpointFile load_checkpoint(const std::string& path);

/// Content hash of a tensor set, computed over the same 32-bit payload the
/// checkpoint format writes. Used for frozen-stage and provenance records.
std::string tensors_hash(const NamedTensors& tensors);

std::string video_hash(const VideoTensor& v);

/// Noise schedule persistence: JSON object {"T": int, "beta": [..]};
/// derived tables are recomputed on load, never stored.
nlohmann::json schedule_to_json(const struct NoiseSchedule& s);
struct NoiseSchedule schedule_from_json(const nlohmann::json& j);

/// 8-bit binary PGM, input values clamped to [0,1].
void write_pgm(const std::string& path, const Eigen::MatrixXd& image);

/// Lays the frames of a video out left to right with a 1px separator,
/// suitable for write_pgm.
Eigen::MatrixXd frame_strip(const VideoTensor& v);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace vmc
