#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "vmc/denoiser.hpp"
#include "vmc/schedule.hpp"
#include "vmc/video.hpp"

namespace vmc {

/// eta in [0,1] controls DDIM stochasticity; steps is the uniform-stride
/// sampling/inversion grid size over [1, T].
struct SamplerConfig {
    double eta = 0.0;
    int steps = 50;
    std::uint64_t seed = 0;
};

/// Mean squared error between the noise prediction and the drawn noise,
/// averaged over all frames and coordinates.
double epsilon_matching_loss(const DenoiserModel& m, const VideoTensor& v0, int t,
                             const Eigen::MatrixXd& eps, const Conditioning& c,
                             const NoiseSchedule& s);

/// Same loss, also accumulating parameter gradients.
double epsilon_matching_loss_grad(const DenoiserModel& m, const VideoTensor& v0,
                                  int t, const Eigen::MatrixXd& eps,
                                  const Conditioning& c, const NoiseSchedule& s,
                                  GradientBuffers& grads);

struct TrainConfig {
    int steps = 2000;
    int batch = 4;
    AdamWConfig opt = {.lr = 1e-4, .weight_decay = 0.01};
    double final_lr_fraction = 1.0;  // cosine decay floor; 1.0 = constant lr
    std::uint64_t seed = 0;
};

struct TrainResult {
    std::vector<double> loss_trace;  // one entry per step
};

/// Minibatch epsilon-matching training of all parameters with decoupled
/// weight decay. Deterministic given the seed.
TrainResult train_base(DenoiserModel& m,
                       const std::vector<std::pair<VideoTensor, StructuredPrompt>>& corpus,
                       const NoiseSchedule& s, const TrainConfig& cfg);

/// x0_hat = (v_t - sqrt(1 - abar_t) eps_pred) / sqrt(abar_t)
Eigen::MatrixXd tweedie_video(const Eigen::MatrixXd& v_t,
                              const Eigen::MatrixXd& eps_pred, int t,
                              const NoiseSchedule& s);

/// One ancestral reverse step; noise is ignored where the posterior term
/// vanishes (t = 1).
Eigen::MatrixXd ddpm_step(const Eigen::MatrixXd& v_t,
                          const Eigen::MatrixXd& eps_pred, int t,
                          const NoiseSchedule& s, const Eigen::MatrixXd& noise);

/// One DDIM step from t to t_prev < t.
Eigen::MatrixXd ddim_step(const Eigen::MatrixXd& v_t,
                          const Eigen::MatrixXd& eps_pred, int t, int t_prev,
                          const NoiseSchedule& s, double eta,
                          const Eigen::MatrixXd& noise);

/// Ascending uniform-stride timestep grid ending at T, e.g. {2,4,...,100}.
std::vector<int> sampling_grid(int T, int steps);

struct InversionResult {
    VideoTensor terminal;                    // latent at the deepest step
    std::vector<VideoTensor> intermediates;  // one per grid step, ascending
    std::vector<int> grid;
};

/// Deterministic (eta = 0) DDIM recursion run in reverse, mapping a clean
/// video to its deepest-step latent.
InversionResult ddim_invert(const VideoTensor& video, const DenoiserModel& m,
                            const Conditioning& c, int steps,
                            const NoiseSchedule& s);

/// Runs the reverse step grid down to t = 0. Starts from init_latent when
/// given, otherwise from a standard normal draw seeded by cfg.seed.
VideoTensor sample(const DenoiserModel& m, const Conditioning& c,
                   const SamplerConfig& cfg, const NoiseSchedule& s,
                   const std::optional<VideoTensor>& init_latent, int n_frames);

}  // namespace vmc
