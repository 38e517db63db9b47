#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vmc/denoiser.hpp"
#include "vmc/schedule.hpp"
#include "vmc/video.hpp"

namespace vmc {

/// Consecutive-frame residuals of an N-frame tensor at a given noise level.
/// Row n holds source[n + stride] - source[n].
struct MotionVectors {
    Eigen::MatrixXd deltas;  // (N - stride) x d
    int stride = 1;
    int timestep = 0;  // 0 for clean tensors

    int rows() const { return static_cast<int>(deltas.rows()); }
};

MotionVectors motion_vectors(const Eigen::MatrixXd& frames, int stride,
                             int timestep = 0);

inline MotionVectors motion_vectors(const VideoTensor& x, int stride,
                                    int timestep = 0) {
    return motion_vectors(x.frames, stride, timestep);
}

/// Residuals of a noise-prediction tensor; same definition as
/// motion_vectors applied to the prediction.
MotionVectors predicted_epsilon_residuals(const Eigen::MatrixXd& eps_pred,
                                          int stride);

/// delta_v0_hat = (delta_v_t - sqrt(1 - abar_t) * delta_eps_pred) / sqrt(abar_t)
MotionVectors denoised_motion_estimate(const MotionVectors& dv_t,
                                       const MotionVectors& d_eps_pred, int t,
                                       const NoiseSchedule& s);

/// ((1 - abar_t) / abar_t) * ||delta_eps_true - delta_eps_pred||^2, averaged
/// over residual rows. Equals the squared distance between the clean motion
/// vector and its denoised estimate.
double loss_l2_align(const MotionVectors& d_eps_true,
                     const MotionVectors& d_eps_pred, int t,
                     const NoiseSchedule& s);

/// Mean over rows of 1 - cos(delta_eps_true, delta_eps_pred), with an
/// epsilon-guarded denominator for zero-norm rows.
double loss_cos(const MotionVectors& d_eps_true, const MotionVectors& d_eps_pred);

enum class DistillLoss { kCos, kL2 };

/// Distillation loss for one iteration, with its gradient with respect to
/// the full prediction tensor (the residual map is folded in).
double distill_loss_and_grad(const MotionVectors& d_eps_true,
                             const Eigen::MatrixXd& eps_pred, int stride,
                             DistillLoss which, int t, const NoiseSchedule& s,
                             Eigen::MatrixXd& d_eps_pred_grad);

/// Which parameter subset a fine-tuning run updates.
enum class AdaptTargets { kTemporalAttention, kSpatialAndConditioning };

std::vector<int> adapt_target_indices(const NamedTensors& params,
                                      AdaptTargets targets);

struct AdaptConfig {
    int steps = 400;
    DistillLoss loss = DistillLoss::kCos;
    AdaptTargets targets = AdaptTargets::kTemporalAttention;
    int stride = 1;
    AdamWConfig opt = {.lr = 1e-4, .weight_decay = 0.01};
    bool allow_non_invariant = false;
};

struct AdaptResult {
    std::vector<double> loss_trace;
};

/// One-shot motion distillation (temporal attention adaptation by default).
/// Each iteration draws a uniform timestep and fresh noise, forms the noisy
/// video, and aligns predicted and ground-truth epsilon residuals; only the
/// selected tensors are updated, every other tensor stays bit-identical.
/// Deterministic given the seed.
AdaptResult adapt_temporal_attention(DenoiserModel& m, const VideoTensor& video,
                                     const StructuredPrompt& prompt_inv,
                                     const AdaptConfig& cfg,
                                     const NoiseSchedule& s, std::uint64_t seed);

}  // namespace vmc
