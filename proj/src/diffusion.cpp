#include "vmc/diffusion.hpp"

#include <cmath>

#include "vmc/rng.hpp"

namespace vmc {

double epsilon_matching_loss(const DenoiserModel& m, const VideoTensor& v0, int t,
                             const Eigen::MatrixXd& eps, const Conditioning& c,
                             const NoiseSchedule& s) {
    require_shape(v0.frames.rows() == eps.rows() && v0.frames.cols() == eps.cols(),
                  "epsilon_matching_loss: eps shape mismatch");
    const Eigen::MatrixXd v_t = forward_sample(v0.frames, t, eps, s);
    const Eigen::MatrixXd pred = predict_noise(m, v_t, t, c.embedding);
    return (pred - eps).squaredNorm() / static_cast<double>(eps.size());
}

double epsilon_matching_loss_grad(const DenoiserModel& m, const VideoTensor& v0,
                                  int t, const Eigen::MatrixXd& eps,
                                  const Conditioning& c, const NoiseSchedule& s,
                                  GradientBuffers& grads) {
    require_shape(v0.frames.rows() == eps.rows() && v0.frames.cols() == eps.cols(),
                  "epsilon_matching_loss: eps shape mismatch");
    const Eigen::MatrixXd v_t = forward_sample(v0.frames, t, eps, s);
    DenoiserCache cache;
    const Eigen::MatrixXd pred = predict_noise_cached(m, v_t, t, c.embedding, cache);
    const Eigen::MatrixXd diff = pred - eps;
    const double inv_n = 1.0 / static_cast<double>(eps.size());
    denoiser_backward(m, cache, 2.0 * inv_n * diff, grads);
    return diff.squaredNorm() * inv_n;
}

TrainResult train_base(DenoiserModel& m,
                       const std::vector<std::pair<VideoTensor, StructuredPrompt>>& corpus,
                       const NoiseSchedule& s, const TrainConfig& cfg) {
    require_config(!corpus.empty(), "train_base: empty corpus");
    const long n = corpus.front().first.frames.rows();
    const long d = corpus.front().first.frames.cols();
    for (const auto& [v, p] : corpus)
        require_shape(v.frames.rows() == n && v.frames.cols() == d,
                      "train_base: corpus videos must share (N, d)");

    std::vector<Conditioning> conds;
    conds.reserve(corpus.size());
    for (const auto& [v, p] : corpus) conds.push_back(encode_prompt(p));

    Rng rng(cfg.seed);
    AdamW opt(m.params, cfg.opt);
    const auto update_set = m.params.all_indices();
    GradientBuffers grads(m.params);
    Eigen::MatrixXd eps(n, d);

    TrainResult result;
    result.loss_trace.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        grads.zero();
        double loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto idx = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(corpus.size()) - 1));
            const int t = static_cast<int>(rng.uniform_int(1, s.T));
            rng.fill_normal(eps);
            loss += epsilon_matching_loss_grad(m, corpus[idx].first, t, eps,
                                               conds[idx], s, grads);
        }
        const double inv_b = 1.0 / cfg.batch;
        for (auto& gm : grads.g) gm *= inv_b;
        const double progress = static_cast<double>(step) / cfg.steps;
        const double lr_scale =
            cfg.final_lr_fraction +
            (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + std::cos(M_PI * progress));
        opt.step(m.params, grads, update_set, lr_scale);
        result.loss_trace.push_back(loss * inv_b);
    }
    return result;
}

Eigen::MatrixXd tweedie_video(const Eigen::MatrixXd& v_t,
                              const Eigen::MatrixXd& eps_pred, int t,
                              const NoiseSchedule& s) {
    require_shape(v_t.rows() == eps_pred.rows() && v_t.cols() == eps_pred.cols(),
                  "tweedie_video: shape mismatch");
    const double ab = s.alpha_bar_at(t);
    s.check_t(t);
    return (v_t - std::sqrt(1.0 - ab) * eps_pred) / std::sqrt(ab);
}

Eigen::MatrixXd ddpm_step(const Eigen::MatrixXd& v_t,
                          const Eigen::MatrixXd& eps_pred, int t,
                          const NoiseSchedule& s, const Eigen::MatrixXd& noise) {
    s.check_t(t);
    require_shape(v_t.rows() == eps_pred.rows() && v_t.cols() == eps_pred.cols(),
                  "ddpm_step: shape mismatch");
    const double a = s.alpha_at(t);
    const double ab = s.alpha_bar_at(t);
    Eigen::MatrixXd out =
        (v_t - ((1.0 - a) / std::sqrt(1.0 - ab)) * eps_pred) / std::sqrt(a);
    const double bt = s.beta_tilde_at(t);
    if (bt != 0.0) {
        require_shape(noise.rows() == v_t.rows() && noise.cols() == v_t.cols(),
                      "ddpm_step: noise shape mismatch");
        out += bt * noise;
    }
    return out;
}

Eigen::MatrixXd ddim_step(const Eigen::MatrixXd& v_t,
                          const Eigen::MatrixXd& eps_pred, int t, int t_prev,
                          const NoiseSchedule& s, double eta,
                          const Eigen::MatrixXd& noise) {
    s.check_t(t);
    require_config(t_prev < t && t_prev >= 0, "ddim_step: need 0 <= t_prev < t");
    require_config(eta >= 0.0 && eta <= 1.0, "ddim_step: eta outside [0, 1]");
    const double ab_prev = s.alpha_bar_at(t_prev);
    const double bt = s.beta_tilde_at(t);
    const double dir_sq = 1.0 - ab_prev - eta * eta * bt * bt;
    require_config(dir_sq >= 0.0,
                   "ddim_step: eta too large for this schedule step");
    const Eigen::MatrixXd x0_hat = tweedie_video(v_t, eps_pred, t, s);
    Eigen::MatrixXd out =
        std::sqrt(ab_prev) * x0_hat + std::sqrt(dir_sq) * eps_pred;
    if (eta > 0.0 && bt > 0.0) {
        require_shape(noise.rows() == v_t.rows() && noise.cols() == v_t.cols(),
                      "ddim_step: noise shape mismatch");
        out += eta * bt * noise;
    }
    return out;
}

std::vector<int> sampling_grid(int T, int steps) {
    require_config(steps >= 1 && steps <= T, "sampling grid: need 1 <= steps <= T");
    std::vector<int> grid(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        grid[static_cast<std::size_t>(i)] = static_cast<int>(
            std::llround(static_cast<double>(T) * (i + 1) / steps));
    }
    return grid;  // ascending, ends at T
}

InversionResult ddim_invert(const VideoTensor& video, const DenoiserModel& m,
                            const Conditioning& c, int steps,
                            const NoiseSchedule& s) {
    InversionResult res;
    res.grid = sampling_grid(s.T, steps);
    res.intermediates.reserve(res.grid.size());
    Eigen::MatrixXd x = video.frames;
    int t_prev = 0;
    for (int t : res.grid) {
        // Evaluate the predictor on the current (less noisy) state at the
        // destination timestep, then re-noise via the closed form.
        const Eigen::MatrixXd eps_hat = predict_noise(m, x, t, c.embedding);
        const double ab_prev = s.alpha_bar_at(t_prev);
        const double ab = s.alpha_bar_at(t);
        const Eigen::MatrixXd x0_hat =
            (x - std::sqrt(1.0 - ab_prev) * eps_hat) / std::sqrt(ab_prev);
        x = std::sqrt(ab) * x0_hat + std::sqrt(1.0 - ab) * eps_hat;
        res.intermediates.push_back(with_frames(video, x));
        t_prev = t;
    }
    res.terminal = with_frames(video, x);
    return res;
}

VideoTensor sample(const DenoiserModel& m, const Conditioning& c,
                   const SamplerConfig& cfg, const NoiseSchedule& s,
                   const std::optional<VideoTensor>& init_latent, int n_frames) {
    require_config(cfg.eta >= 0.0 && cfg.eta <= 1.0, "sample: eta outside [0, 1]");
    const auto grid = sampling_grid(s.T, cfg.steps);
    Rng rng(cfg.seed);

    int height = m.cfg.height, width = m.cfg.width;
    Eigen::MatrixXd x;
    if (init_latent) {
        require_shape(static_cast<int>(init_latent->frames.cols()) ==
                          m.cfg.frame_dim(),
                      "sample: init latent frame dim mismatch");
        x = init_latent->frames;
        height = init_latent->height;
        width = init_latent->width;
        n_frames = init_latent->frame_count();
    } else {
        x.resize(n_frames, m.cfg.frame_dim());
        rng.fill_normal(x);
    }

    Eigen::MatrixXd noise(x.rows(), x.cols());
    for (std::size_t i = grid.size(); i-- > 0;) {
        const int t = grid[i];
        const int t_prev = (i == 0) ? 0 : grid[i - 1];
        const Eigen::MatrixXd eps_hat = predict_noise(m, x, t, c.embedding);
        // The final hop to t=0 is always deterministic.
        const double eta = (t_prev == 0) ? 0.0 : cfg.eta;
        if (eta > 0.0) rng.fill_normal(noise);
        x = ddim_step(x, eps_hat, t, t_prev, s, eta, noise);
    }
    return VideoTensor(std::move(x), height, width);
}

}  // namespace vmc
