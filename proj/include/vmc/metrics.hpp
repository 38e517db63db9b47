#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <vector>

#include "vmc/conditioning.hpp"
#include "vmc/corpus.hpp"
#include "vmc/tensors.hpp"
#include "vmc/video.hpp"

namespace vmc {

/// Trajectory-correlation stand-in for the motion-preservation score:
/// correlation of the per-frame displacement vectors of the two centroid
/// tracks, averaged over the x/y components. Displacements are correlated
/// about the origin (zero displacement is the reference), which keeps
/// constant-velocity tracks well defined; a component that is still in
/// either track is skipped, and a fully degenerate track yields NaN. When
/// the generated video is a 4x temporal expansion, its track is subsampled
/// at the keyframe indexes.
double motion_preservation(const VideoTensor& source, const VideoTensor& generated);

/// Raw-frame cosine consistency: mean pairwise cosine similarity of
/// mean-subtracted flattened frames, mapped to [0,1] via (1+cos)/2.
/// Pairs with a zero-centered frame are skipped (and counted); a video with
/// no valid pair yields NaN.
double frame_consistency(const VideoTensor& v, int* skipped_pairs = nullptr);

/// Small multinomial-logistic classifier over the corpus factors
/// (shape/intensity/texture/level per frame, motion from the centroid
/// track). Stand-in for CLIP-based prompt alignment.
struct FactorClassifier {
    NamedTensors params;
    nlohmann::json meta;  // held-out accuracies per head

    double min_heldout_accuracy() const;
};

struct ClassifierTrainConfig {
    int epochs = 400;
    double lr = 0.05;
    double heldout_fraction = 0.2;
    std::uint64_t seed = 0;
};

FactorClassifier train_factor_classifier(
    const std::vector<std::pair<VideoTensor, StructuredPrompt>>& corpus,
    const ClassifierTrainConfig& cfg);

/// Mean predicted probability of the prompt's motion class and whichever
/// appearance attributes the prompt carries. Requires the classifier to have
/// passed its 95% held-out accuracy gate.
double prompt_alignment(const VideoTensor& v, const StructuredPrompt& p,
                        const FactorClassifier& clf);

/// Per-head class probabilities for reports.
struct FactorProbs {
    Eigen::VectorXd motion, shape, intensity, texture, level;
};
FactorProbs classify_factors(const VideoTensor& v, const FactorClassifier& clf);

void save_classifier(const std::string& path, const FactorClassifier& clf);
FactorClassifier load_classifier(const std::string& path);

}  // namespace vmc
