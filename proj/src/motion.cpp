#include "vmc/motion.hpp"

#include <cmath>

#include "vmc/conditioning.hpp"
#include "vmc/rng.hpp"

namespace vmc {

namespace {
constexpr double kCosGuard = 1e-8;
}

MotionVectors motion_vectors(const Eigen::MatrixXd& frames, int stride,
                             int timestep) {
    const int n = static_cast<int>(frames.rows());
    require_config(stride >= 1 && stride <= n - 1,
                   "motion_vectors: stride outside [1, N-1]");
    MotionVectors mv;
    mv.stride = stride;
    mv.timestep = timestep;
    mv.deltas = frames.bottomRows(n - stride) - frames.topRows(n - stride);
    return mv;
}

MotionVectors predicted_epsilon_residuals(const Eigen::MatrixXd& eps_pred,
                                          int stride) {
    return motion_vectors(eps_pred, stride);
}

MotionVectors denoised_motion_estimate(const MotionVectors& dv_t,
                                       const MotionVectors& d_eps_pred, int t,
                                       const NoiseSchedule& s) {
    require_shape(dv_t.deltas.rows() == d_eps_pred.deltas.rows() &&
                      dv_t.deltas.cols() == d_eps_pred.deltas.cols(),
                  "denoised_motion_estimate: shape mismatch");
    require_config(dv_t.stride == d_eps_pred.stride,
                   "denoised_motion_estimate: stride mismatch");
    s.check_t(t);
    const double ab = s.alpha_bar_at(t);
    MotionVectors out;
    out.stride = dv_t.stride;
    out.timestep = 0;
    out.deltas =
        (dv_t.deltas - std::sqrt(1.0 - ab) * d_eps_pred.deltas) / std::sqrt(ab);
    return out;
}

double loss_l2_align(const MotionVectors& d_eps_true,
                     const MotionVectors& d_eps_pred, int t,
                     const NoiseSchedule& s) {
    require_shape(d_eps_true.deltas.rows() == d_eps_pred.deltas.rows() &&
                      d_eps_true.deltas.cols() == d_eps_pred.deltas.cols(),
                  "loss_l2_align: shape mismatch");
    s.check_t(t);
    const double ab = s.alpha_bar_at(t);
    const double scale = (1.0 - ab) / ab;
    return scale * (d_eps_true.deltas - d_eps_pred.deltas).squaredNorm() /
           static_cast<double>(d_eps_true.deltas.rows());
}

double loss_cos(const MotionVectors& d_eps_true, const MotionVectors& d_eps_pred) {
    require_shape(d_eps_true.deltas.rows() == d_eps_pred.deltas.rows() &&
                      d_eps_true.deltas.cols() == d_eps_pred.deltas.cols(),
                  "loss_cos: shape mismatch");
    const long rows = d_eps_true.deltas.rows();
    double total = 0.0;
    for (long r = 0; r < rows; ++r) {
        const double na = d_eps_true.deltas.row(r).norm();
        const double nb = d_eps_pred.deltas.row(r).norm();
        const double dot = d_eps_true.deltas.row(r).dot(d_eps_pred.deltas.row(r));
        total += 1.0 - dot / (na * nb + kCosGuard);
    }
    return total / static_cast<double>(rows);
}

double distill_loss_and_grad(const MotionVectors& d_eps_true,
                             const Eigen::MatrixXd& eps_pred, int stride,
                             DistillLoss which, int t, const NoiseSchedule& s,
                             Eigen::MatrixXd& d_eps_pred_grad) {
    const MotionVectors pred = predicted_epsilon_residuals(eps_pred, stride);
    require_shape(pred.deltas.rows() == d_eps_true.deltas.rows() &&
                      pred.deltas.cols() == d_eps_true.deltas.cols(),
                  "distill loss: residual shape mismatch");
    const long rows = pred.deltas.rows();
    const double inv_rows = 1.0 / static_cast<double>(rows);

    // Gradient with respect to each residual row, then scattered onto the
    // prediction tensor through delta[n] = pred[n+stride] - pred[n].
    Eigen::MatrixXd d_rows(rows, pred.deltas.cols());
    double loss = 0.0;

    if (which == DistillLoss::kL2) {
        const double scale = (1.0 - s.alpha_bar_at(t)) / s.alpha_bar_at(t);
        s.check_t(t);
        const Eigen::MatrixXd diff = pred.deltas - d_eps_true.deltas;
        loss = scale * diff.squaredNorm() * inv_rows;
        d_rows = (2.0 * scale * inv_rows) * diff;
    } else {
        for (long r = 0; r < rows; ++r) {
            const Eigen::RowVectorXd a = d_eps_true.deltas.row(r);
            const Eigen::RowVectorXd b = pred.deltas.row(r);
            const double na = a.norm();
            const double nb = b.norm();
            const double denom = na * nb + kCosGuard;
            const double dot = a.dot(b);
            loss += 1.0 - dot / denom;
            // d/db [ -dot/denom ], denom treated exactly
            Eigen::RowVectorXd grad = -a / denom;
            if (nb > 0.0) grad += (dot * na / (denom * denom)) * (b / nb);
            d_rows.row(r) = inv_rows * grad;
        }
        loss *= inv_rows;
    }

    d_eps_pred_grad = Eigen::MatrixXd::Zero(eps_pred.rows(), eps_pred.cols());
    for (long r = 0; r < rows; ++r) {
        d_eps_pred_grad.row(r + stride) += d_rows.row(r);
        d_eps_pred_grad.row(r) -= d_rows.row(r);
    }
    return loss;
}

std::vector<int> adapt_target_indices(const NamedTensors& params,
                                      AdaptTargets targets) {
    if (targets == AdaptTargets::kTemporalAttention)
        return params.indices_with_label(ParamLabel::kTemporalAttention);
    std::vector<int> out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = params.items[i].name;
        const bool spatial_qkv = name.find("sa.wq") != std::string::npos ||
                                 name.find("sa.wk") != std::string::npos ||
                                 name.find("sa.wv") != std::string::npos;
        const bool cond = name.rfind("cond_proj.", 0) == 0;
        if (spatial_qkv || cond) out.push_back(static_cast<int>(i));
    }
    return out;
}

AdaptResult adapt_temporal_attention(DenoiserModel& m, const VideoTensor& video,
                                     const StructuredPrompt& prompt_inv,
                                     const AdaptConfig& cfg,
                                     const NoiseSchedule& s, std::uint64_t seed) {
    require_config(video.frame_count() >= 2, "adapt: video needs N >= 2 frames");
    require_config(cfg.stride >= 1 && cfg.stride <= video.frame_count() - 1,
                   "adapt: stride outside [1, N-1]");
    if (!cfg.allow_non_invariant)
        require_config(is_appearance_invariant(prompt_inv),
                       "adapt: prompt carries appearance/background attributes; "
                       "pass it through appearance_invariant() or set the "
                       "override flag");

    const Conditioning cond = encode_prompt(prompt_inv);
    const auto update_set = adapt_target_indices(m.params, cfg.targets);
    require_config(!update_set.empty(), "adapt: empty update set");

    Rng rng(seed);
    AdamW opt(m.params, cfg.opt);
    GradientBuffers grads(m.params);
    const long n = video.frames.rows();
    const long d = video.frames.cols();
    Eigen::MatrixXd eps(n, d);

    AdaptResult result;
    result.loss_trace.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        const int t = static_cast<int>(rng.uniform_int(1, s.T));
        rng.fill_normal(eps);
        const Eigen::MatrixXd v_t = forward_sample(video.frames, t, eps, s);
        const MotionVectors d_eps_true = motion_vectors(eps, cfg.stride, t);

        DenoiserCache cache;
        const Eigen::MatrixXd pred =
            predict_noise_cached(m, v_t, t, cond.embedding, cache);
        Eigen::MatrixXd d_pred;
        const double loss = distill_loss_and_grad(d_eps_true, pred, cfg.stride,
                                                  cfg.loss, t, s, d_pred);
        grads.zero();
        denoiser_backward(m, cache, d_pred, grads);
        opt.step(m.params, grads, update_set);
        result.loss_trace.push_back(loss);
    }
    return result;
}

}  // namespace vmc
