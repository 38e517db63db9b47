#include "vmc/cascade.hpp"

#include <cmath>

#include "vmc/io.hpp"
#include "vmc/rng.hpp"

namespace vmc {

namespace {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

Eigen::MatrixXd sr_forward_rows(const SRModel& m, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd h = x * m.params.at("w1");
    h.rowwise() += m.params.at("b1").row(0);
    h = h.unaryExpr([](double v) { return gelu(v); });
    Eigen::MatrixXd y = h * m.params.at("w2");
    y.rowwise() += m.params.at("b2").row(0);
    return y;
}

}  // namespace

nlohmann::json SRConfig::to_json() const {
    return {{"height", height}, {"width", width}, {"hidden", hidden}};
}

SRConfig SRConfig::from_json(const nlohmann::json& j) {
    SRConfig c;
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
    c.hidden = j.at("hidden").get<int>();
    return c;
}

SRModel init_sr(const SRConfig& cfg, std::uint64_t seed) {
    SRModel m;
    m.cfg = cfg;
    m.params.add("w1", cfg.in_dim(), cfg.hidden);
    m.params.add("b1", 1, cfg.hidden);
    m.params.add("w2", cfg.hidden, cfg.out_dim());
    m.params.add("b2", 1, cfg.out_dim());
    Rng rng(seed);
    for (auto& t : m.params.items) {
        if (t.name[0] == 'b') continue;  // biases stay zero
        const double sigma = 1.0 / std::sqrt(static_cast<double>(t.value.rows()));
        for (long c = 0; c < t.value.cols(); ++c)
            for (long r = 0; r < t.value.rows(); ++r)
                t.value(r, c) = sigma * rng.normal();
    }
    return m;
}

std::vector<double> train_sr(SRModel& m, const Eigen::MatrixXd& lo,
                             const Eigen::MatrixXd& hi, const SRTrainConfig& cfg) {
    require_shape(lo.rows() == hi.rows(), "train_sr: row count mismatch");
    require_shape(static_cast<int>(lo.cols()) == m.cfg.in_dim() &&
                      static_cast<int>(hi.cols()) == m.cfg.out_dim(),
                  "train_sr: resolution mismatch");
    Rng rng(cfg.seed);
    AdamW opt(m.params, cfg.opt);
    GradientBuffers grads(m.params);
    const auto update_set = m.params.all_indices();
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.steps));

    Eigen::MatrixXd xb(cfg.batch, lo.cols()), yb(cfg.batch, hi.cols());
    for (int step = 0; step < cfg.steps; ++step) {
        for (int b = 0; b < cfg.batch; ++b) {
            const auto i = rng.uniform_int(0, lo.rows() - 1);
            xb.row(b) = lo.row(i);
            yb.row(b) = hi.row(i);
        }
        Eigen::MatrixXd pre = xb * m.params.at("w1");
        pre.rowwise() += m.params.at("b1").row(0);
        const Eigen::MatrixXd act = pre.unaryExpr([](double v) { return gelu(v); });
        Eigen::MatrixXd out = act * m.params.at("w2");
        out.rowwise() += m.params.at("b2").row(0);

        const Eigen::MatrixXd diff = out - yb;
        const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
        const Eigen::MatrixXd dout = (2.0 / diff.size()) * diff;

        grads.zero();
        grads[m.params.index_of("w2")] = act.transpose() * dout;
        grads[m.params.index_of("b2")].row(0) = dout.colwise().sum();
        const Eigen::MatrixXd dact = dout * m.params.at("w2").transpose();
        const Eigen::MatrixXd dpre =
            (dact.array() *
             pre.unaryExpr([](double v) { return gelu_grad(v); }).array())
                .matrix();
        grads[m.params.index_of("w1")] = xb.transpose() * dpre;
        grads[m.params.index_of("b1")].row(0) = dpre.colwise().sum();
        opt.step(m.params, grads, update_set);
        trace.push_back(loss);
    }
    return trace;
}

VideoTensor super_resolve(const VideoTensor& v, const SRModel& m) {
    require_shape(v.height == m.cfg.height && v.width == m.cfg.width,
                  "super_resolve: input resolution does not match the "
                  "training resolution");
    Eigen::MatrixXd out = sr_forward_rows(m, v.frames);
    return VideoTensor(std::move(out), 2 * v.height, 2 * v.width);
}

VideoTensor downsample2x(const VideoTensor& v) {
    require_shape(v.height % 2 == 0 && v.width % 2 == 0,
                  "downsample2x: odd resolution");
    VideoTensor out = make_video(v.frame_count(), v.height / 2, v.width / 2);
    for (int f = 0; f < v.frame_count(); ++f)
        for (int r = 0; r < out.height; ++r)
            for (int c = 0; c < out.width; ++c)
                out.pixel(f, r, c) = 0.25 * (v.pixel(f, 2 * r, 2 * c) +
                                             v.pixel(f, 2 * r, 2 * c + 1) +
                                             v.pixel(f, 2 * r + 1, 2 * c) +
                                             v.pixel(f, 2 * r + 1, 2 * c + 1));
    return out;
}

DenoiserModel init_interp(const DenoiserConfig& cfg, std::uint64_t seed) {
    return init_denoiser(cfg, seed);
}

std::vector<double> train_interp(DenoiserModel& m,
                                 const std::vector<CorpusEntry>& entries,
                                 const NoiseSchedule& s,
                                 const InterpTrainConfig& cfg) {
    require_config(!entries.empty(), "train_interp: empty corpus");

    // Window dataset: 5 consecutive fine frames per gap, endpoints clean.
    std::vector<Eigen::MatrixXd> windows;
    for (const auto& e : entries) {
        const RenderedClip clip = render_clip(e.spec);
        const int gaps = e.spec.n_keyframes - 1;
        for (int g = 0; g < gaps; ++g)
            windows.push_back(clip.fine.frames.middleRows(4 * g, 5));
    }

    const long d = windows.front().cols();
    const Eigen::VectorXd zero_cond = Eigen::VectorXd::Zero(m.cfg.cond_dim);
    Rng rng(cfg.seed);
    AdamW opt(m.params, cfg.opt);
    GradientBuffers grads(m.params), batch_grads(m.params);
    const auto update_set = m.params.all_indices();

    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.steps));
    Eigen::MatrixXd eps(3, d);
    for (int step = 0; step < cfg.steps; ++step) {
        batch_grads.zero();
        double loss_acc = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            Eigen::MatrixXd window =
                windows[static_cast<std::size_t>(rng.uniform_int(
                    0, static_cast<std::int64_t>(windows.size()) - 1))];
            if (rng.uniform() < cfg.static_window_fraction) {
                // teach identity interpolation for static gaps
                const long row = rng.uniform_int(0, window.rows() - 1);
                for (long r = 0; r < window.rows(); ++r)
                    if (r != row) window.row(r) = window.row(row);
            }
            const int t = static_cast<int>(rng.uniform_int(1, s.T));
            rng.fill_normal(eps);

            Eigen::MatrixXd v_in = window;
            v_in.middleRows(1, 3) =
                forward_sample(window.middleRows(1, 3), t, eps, s);

            DenoiserCache cache;
            const Eigen::MatrixXd pred =
                predict_noise_cached(m, v_in, t, zero_cond, cache);
            const Eigen::MatrixXd diff = pred.middleRows(1, 3) - eps;
            const double inv_n = 1.0 / static_cast<double>(diff.size());
            loss_acc += diff.squaredNorm() * inv_n;

            Eigen::MatrixXd d_pred = Eigen::MatrixXd::Zero(5, d);
            d_pred.middleRows(1, 3) = 2.0 * inv_n * diff;
            grads.zero();
            denoiser_backward(m, cache, d_pred, grads);
            batch_grads.add_scaled(grads, 1.0 / cfg.batch);
        }
        opt.step(m.params, batch_grads, update_set);
        trace.push_back(loss_acc / cfg.batch);
    }
    return trace;
}

VideoTensor interpolate_frames(const VideoTensor& keyframes,
                               const DenoiserModel& interp,
                               const NoiseSchedule& s,
                               const InterpSampleConfig& cfg) {
    require_config(keyframes.frame_count() == 8,
                   "interpolate_frames: expected exactly 8 keyframes, got " +
                       std::to_string(keyframes.frame_count()));
    require_shape(static_cast<int>(keyframes.frames.cols()) ==
                      interp.cfg.frame_dim(),
                  "interpolate_frames: frame dim mismatch");

    const long d = keyframes.frames.cols();
    const Eigen::VectorXd zero_cond = Eigen::VectorXd::Zero(interp.cfg.cond_dim);
    const auto grid = sampling_grid(s.T, cfg.steps);

    VideoTensor out = make_video(29, keyframes.height, keyframes.width);
    for (int k = 0; k < 8; ++k) out.frames.row(4 * k) = keyframes.frames.row(k);

    for (int g = 0; g < 7; ++g) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(g) + 0x1D));
        Eigen::MatrixXd x(5, d);
        x.row(0) = keyframes.frames.row(g);
        x.row(4) = keyframes.frames.row(g + 1);
        Eigen::MatrixXd mid(3, d);
        rng.fill_normal(mid);
        x.middleRows(1, 3) = mid;

        for (std::size_t i = grid.size(); i-- > 0;) {
            const int t = grid[i];
            const int t_prev = (i == 0) ? 0 : grid[i - 1];
            // keyframe slots stay clamped to the clean inputs
            x.row(0) = keyframes.frames.row(g);
            x.row(4) = keyframes.frames.row(g + 1);
            const Eigen::MatrixXd eps_hat = predict_noise(interp, x, t, zero_cond);
            const Eigen::MatrixXd stepped = ddim_step(
                x.middleRows(1, 3), eps_hat.middleRows(1, 3), t, t_prev, s, 0.0,
                Eigen::MatrixXd());
            x.middleRows(1, 3) = stepped;
        }
        out.frames.middleRows(4 * g + 1, 3) = x.middleRows(1, 3);
    }
    return out;
}

CascadeBundle make_bundle(DenoiserModel keyframe, DenoiserModel interp, SRModel sr,
                          NoiseSchedule sched_keyframe,
                          NoiseSchedule sched_interp) {
    CascadeBundle b;
    b.keyframe = std::move(keyframe);
    b.interp = std::move(interp);
    b.sr = std::move(sr);
    b.sched_keyframe = std::move(sched_keyframe);
    b.sched_interp = std::move(sched_interp);
    b.interp_hash = tensors_hash(b.interp.params);
    b.sr_hash = tensors_hash(b.sr.params);
    return b;
}

void verify_frozen(const CascadeBundle& bundle) {
    if (tensors_hash(bundle.interp.params) != bundle.interp_hash)
        throw CheckpointError("frozen interpolation stage was modified");
    if (tensors_hash(bundle.sr.params) != bundle.sr_hash)
        throw CheckpointError("frozen super-resolution stage was modified");
}

PipelineResult vmc_pipeline(const VideoTensor& source,
                            const StructuredPrompt& source_prompt,
                            const StructuredPrompt& target_prompt,
                            const CascadeBundle& bundle,
                            const PipelineConfig& cfg) {
    verify_frozen(bundle);

    const StructuredPrompt invert_prompt =
        cfg.invert_with_source_prompt ? source_prompt
                                      : appearance_invariant(source_prompt);
    const Conditioning c_inv = encode_prompt(invert_prompt);
    const Conditioning c_target = encode_prompt(target_prompt);

    PipelineResult res;
    InversionResult inv = ddim_invert(source, bundle.keyframe, c_inv,
                                      cfg.invert_steps, bundle.sched_keyframe);
    res.inverted_latent = inv.terminal;

    SamplerConfig scfg;
    scfg.eta = cfg.eta;
    scfg.steps = cfg.sample_steps;
    scfg.seed = mix_seed(cfg.seed, 0x5A);
    const VideoTensor raw_keyframes =
        sample(bundle.keyframe, c_target, scfg, bundle.sched_keyframe,
               res.inverted_latent, source.frame_count());
    res.keyframes = clamped01(raw_keyframes);

    InterpSampleConfig icfg;
    icfg.seed = mix_seed(cfg.seed, 0x17);
    icfg.steps = cfg.interp_steps;
    res.interpolated =
        interpolate_frames(res.keyframes, bundle.interp, bundle.sched_interp, icfg);

    res.final_video = clamped01(super_resolve(res.interpolated, bundle.sr));
    verify_frozen(bundle);
    return res;
}

}  // namespace vmc
