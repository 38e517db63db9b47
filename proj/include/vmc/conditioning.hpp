#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "vmc/errors.hpp"

namespace vmc {

/// Fixed categorical vocabularies for the structured prompt factors.
/// The conditioning embedding is block one-hot over these, in order:
/// [motion | shape | intensity | texture | level].
namespace vocab {

inline const std::vector<std::string>& motions() {
    static const std::vector<std::string> v = {"right",    "left",     "up",
                                               "down",     "bounce_x", "bounce_y",
                                               "circle",   "zigzag"};
    return v;
}
inline const std::vector<std::string>& shapes() {
    static const std::vector<std::string> v = {"disc", "square", "diamond", "ring",
                                               "plus", "cross",  "hbar",    "vbar"};
    return v;
}
inline const std::vector<std::string>& intensities() {
    static const std::vector<std::string> v = {"dim", "soft", "bright", "peak"};
    return v;
}
inline const std::vector<std::string>& textures() {
    static const std::vector<std::string> v = {"flat", "hstripes", "vstripes",
                                               "checker"};
    return v;
}
inline const std::vector<std::string>& levels() {
    static const std::vector<std::string> v = {"dark", "dusk", "mid", "lit"};
    return v;
}

inline constexpr int kMotionCount = 8;
inline constexpr int kShapeCount = 8;
inline constexpr int kIntensityCount = 4;
inline constexpr int kTextureCount = 4;
inline constexpr int kLevelCount = 4;
inline constexpr int kEmbedDim =
    kMotionCount + kShapeCount + kIntensityCount + kTextureCount + kLevelCount;

int lookup(const std::vector<std::string>& table, const std::string& name,
           const char* factor);

}  // namespace vocab

/// Factored stand-in for a text prompt: a motion class plus optional
/// appearance (shape, intensity band) and background (texture, level)
/// attributes. Absent attributes encode as zero blocks.
struct StructuredPrompt {
    int motion = 0;
    std::optional<int> shape;
    std::optional<int> intensity;
    std::optional<int> texture;
    std::optional<int> level;

    bool operator==(const StructuredPrompt&) const = default;
};

/// The conditioning vector fed to the denoiser. Encoding is deterministic:
/// the same prompt always produces the identical embedding.
struct Conditioning {
    Eigen::VectorXd embedding;  // vocab::kEmbedDim
};

Conditioning encode_prompt(const StructuredPrompt& p);

/// Strips appearance and background attributes, keeping only the motion
/// class. Idempotent.
StructuredPrompt appearance_invariant(const StructuredPrompt& p);

bool is_appearance_invariant(const StructuredPrompt& p);

/// JSON wire format: {"motion": str, "appearance": [str], "background": [str]}.
std::string prompt_to_json(const StructuredPrompt& p);
StructuredPrompt prompt_from_json(const std::string& text);

/// Human-readable one-liner for logs and manifests.
std::string prompt_to_string(const StructuredPrompt& p);

/// Embedding block layout, exposed for tests and the ablation label set.
struct EmbedBlocks {
    static constexpr int motion_begin = 0;
    static constexpr int shape_begin = vocab::kMotionCount;
    static constexpr int intensity_begin = shape_begin + vocab::kShapeCount;
    static constexpr int texture_begin = intensity_begin + vocab::kIntensityCount;
    static constexpr int level_begin = texture_begin + vocab::kTextureCount;
    static constexpr int end = level_begin + vocab::kLevelCount;
};

}  // namespace vmc
