#include "vmc/denoiser.hpp"

#include <cmath>

#include "vmc/rng.hpp"

namespace vmc {

namespace {

constexpr double kNormEps = 1e-5;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

// Token layout: row (n, p) = n * P + p for frame n, patch p.
Eigen::MatrixXd patchify(const DenoiserConfig& cfg, const Eigen::MatrixXd& v) {
    const int n_frames = static_cast<int>(v.rows());
    const int P = cfg.tokens_per_frame();
    const int pd = cfg.patch_dim();
    const int grid = cfg.width / cfg.patch;
    Eigen::MatrixXd out(static_cast<long>(n_frames) * P, pd);
    for (int n = 0; n < n_frames; ++n)
        for (int p = 0; p < P; ++p) {
            const int pr = p / grid, pc = p % grid;
            for (int dr = 0; dr < cfg.patch; ++dr)
                for (int dc = 0; dc < cfg.patch; ++dc) {
                    const int r = pr * cfg.patch + dr;
                    const int c = pc * cfg.patch + dc;
                    out(static_cast<long>(n) * P + p, dr * cfg.patch + dc) =
                        v(n, r * cfg.width + c);
                }
        }
    return out;
}

Eigen::MatrixXd unpatchify(const DenoiserConfig& cfg, const Eigen::MatrixXd& tok,
                           int n_frames) {
    const int P = cfg.tokens_per_frame();
    const int grid = cfg.width / cfg.patch;
    Eigen::MatrixXd out(n_frames, cfg.frame_dim());
    for (int n = 0; n < n_frames; ++n)
        for (int p = 0; p < P; ++p) {
            const int pr = p / grid, pc = p % grid;
            for (int dr = 0; dr < cfg.patch; ++dr)
                for (int dc = 0; dc < cfg.patch; ++dc) {
                    const int r = pr * cfg.patch + dr;
                    const int c = pc * cfg.patch + dc;
                    out(n, r * cfg.width + c) =
                        tok(static_cast<long>(n) * P + p, dr * cfg.patch + dc);
                }
        }
    return out;
}

void layer_norm_forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gain,
                        const Eigen::MatrixXd& bias,
                        DenoiserCache::LayerNormCache& cache) {
    const long rows = x.rows(), cols = x.cols();
    cache.xhat.resize(rows, cols);
    cache.inv_std.resize(rows);
    for (long r = 0; r < rows; ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        const double inv = 1.0 / std::sqrt(var + kNormEps);
        cache.inv_std[r] = inv;
        cache.xhat.row(r) = (x.row(r).array() - mu) * inv;
    }
    cache.y = cache.xhat;
    cache.y.array().rowwise() *= gain.row(0).array();
    cache.y.rowwise() += bias.row(0);
}

// Returns d(loss)/d(x) given d(loss)/d(y); accumulates gain/bias grads.
Eigen::MatrixXd layer_norm_backward(const DenoiserCache::LayerNormCache& cache,
                                    const Eigen::MatrixXd& gain,
                                    const Eigen::MatrixXd& dy,
                                    Eigen::MatrixXd& dgain,
                                    Eigen::MatrixXd& dbias) {
    const long rows = dy.rows(), cols = dy.cols();
    dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    dbias.row(0) += dy.colwise().sum();
    Eigen::MatrixXd dx(rows, cols);
    for (long r = 0; r < rows; ++r) {
        const Eigen::RowVectorXd dxhat =
            (dy.row(r).array() * gain.row(0).array()).matrix();
        const double m1 = dxhat.mean();
        const double m2 = (dxhat.array() * cache.xhat.row(r).array()).mean();
        dx.row(r) =
            cache.inv_std[r] *
            (dxhat.array() - m1 - cache.xhat.row(r).array() * m2).matrix();
    }
    return dx;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
    Eigen::MatrixXd a(z.rows(), z.cols());
    for (long r = 0; r < z.rows(); ++r) {
        const double m = z.row(r).maxCoeff();
        a.row(r) = (z.row(r).array() - m).exp().matrix();
        a.row(r) /= a.row(r).sum();
    }
    return a;
}

// One single-head self-attention over the rows of y (group x H), cached.
void attention_group_forward(const Eigen::MatrixXd& y, const Eigen::MatrixXd& wq,
                             const Eigen::MatrixXd& wk, const Eigen::MatrixXd& wv,
                             double scale, Eigen::MatrixXd& q, Eigen::MatrixXd& k,
                             Eigen::MatrixXd& v, Eigen::MatrixXd& attn,
                             Eigen::MatrixXd& mix) {
    q.noalias() = y * wq;
    k.noalias() = y * wk;
    v.noalias() = y * wv;
    attn = softmax_rows(scale * (q * k.transpose()));
    mix.noalias() = attn * v;
}

struct AttentionGrads {
    Eigen::MatrixXd dy;  // grad wrt the group's LN output rows
};

// Backward through mix = softmax(scale*q*k^T) * v with q=y*wq etc.
// d_mix is the gradient wrt the mix output. Accumulates weight grads.
AttentionGrads attention_group_backward(
    const Eigen::MatrixXd& y, const Eigen::MatrixXd& wq,
    const Eigen::MatrixXd& wk, const Eigen::MatrixXd& wv, double scale,
    const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
    const Eigen::MatrixXd& attn, const Eigen::MatrixXd& d_mix,
    Eigen::MatrixXd& dwq, Eigen::MatrixXd& dwk, Eigen::MatrixXd& dwv) {
    const Eigen::MatrixXd d_attn = d_mix * v.transpose();
    const Eigen::MatrixXd dv = attn.transpose() * d_mix;
    // softmax backward, row-wise
    Eigen::MatrixXd d_logits(attn.rows(), attn.cols());
    for (long r = 0; r < attn.rows(); ++r) {
        const double dot = d_attn.row(r).dot(attn.row(r));
        d_logits.row(r) =
            (attn.row(r).array() * (d_attn.row(r).array() - dot)).matrix();
    }
    const Eigen::MatrixXd dq = scale * (d_logits * k);
    const Eigen::MatrixXd dk = scale * (d_logits.transpose() * q);
    dwq.noalias() += y.transpose() * dq;
    dwk.noalias() += y.transpose() * dk;
    dwv.noalias() += y.transpose() * dv;
    AttentionGrads out;
    out.dy = dq * wq.transpose();
    out.dy.noalias() += dk * wk.transpose();
    out.dy.noalias() += dv * wv.transpose();
    return out;
}

std::string block_prefix(int i) { return "blocks." + std::to_string(i) + "."; }

}  // namespace

void DenoiserConfig::validate() const {
    require_config(height >= 1 && width >= 1 && patch >= 1 && hidden_dim >= 1 &&
                       n_blocks >= 1 && cond_dim >= 1 && time_embed_dim >= 2,
                   "denoiser config: all dims must be positive");
    require_config(height % patch == 0 && width % patch == 0,
                   "denoiser config: patch must divide height and width");
    require_config(time_embed_dim % 2 == 0,
                   "denoiser config: time_embed_dim must be even");
}

nlohmann::json DenoiserConfig::to_json() const {
    return {{"height", height},         {"width", width},
            {"patch", patch},           {"hidden_dim", hidden_dim},
            {"n_blocks", n_blocks},     {"cond_dim", cond_dim},
            {"time_embed_dim", time_embed_dim}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
    c.patch = j.at("patch").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.n_blocks = j.at("n_blocks").get<int>();
    c.cond_dim = j.at("cond_dim").get<int>();
    c.time_embed_dim = j.at("time_embed_dim").get<int>();
    c.validate();
    return c;
}

DenoiserModel init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int H = cfg.hidden_dim;
    DenoiserModel m;
    m.cfg = cfg;
    auto& p = m.params;

    p.add("patch_embed.w", cfg.patch_dim(), H);
    p.add("patch_embed.b", 1, H);
    p.add("cond_proj.w", cfg.cond_dim, H);
    p.add("cond_proj.b", 1, H);
    p.add("time_proj.w", cfg.time_embed_dim, H);
    p.add("time_proj.b", 1, H);
    for (int i = 0; i < cfg.n_blocks; ++i) {
        const std::string pre = block_prefix(i);
        p.add(pre + "ctx_cond.w", cfg.cond_dim, H);
        p.add(pre + "ctx_cond.b", 1, H);
        p.add(pre + "ctx_time.w", cfg.time_embed_dim, H);
        p.add(pre + "ctx_time.b", 1, H);
        p.add(pre + "sa.norm.gain", 1, H);
        p.add(pre + "sa.norm.bias", 1, H);
        p.add(pre + "sa.wq", H, H);
        p.add(pre + "sa.wk", H, H);
        p.add(pre + "sa.wv", H, H);
        p.add(pre + "sa.wo", H, H);
        p.add(pre + "ta.norm.gain", 1, H);
        p.add(pre + "ta.norm.bias", 1, H);
        p.add(pre + "ta.wq", H, H, ParamLabel::kTemporalAttention);
        p.add(pre + "ta.wk", H, H, ParamLabel::kTemporalAttention);
        p.add(pre + "ta.wv", H, H, ParamLabel::kTemporalAttention);
        p.add(pre + "ta.wo", H, H);
        p.add(pre + "mlp.norm.gain", 1, H);
        p.add(pre + "mlp.norm.bias", 1, H);
        p.add(pre + "mlp.w1", H, 4 * H);
        p.add(pre + "mlp.b1", 1, 4 * H);
        p.add(pre + "mlp.w2", 4 * H, H);
        p.add(pre + "mlp.b2", 1, H);
    }
    p.add("out.norm.gain", 1, H);
    p.add("out.norm.bias", 1, H);
    p.add("out.w", H, cfg.patch_dim());
    p.add("out.b", 1, cfg.patch_dim());

    Rng rng(seed);
    for (auto& t : p.items) {
        if (t.name.ends_with("norm.gain")) {
            t.value.setOnes();
        } else if (t.name.ends_with(".b") || t.name.ends_with(".b1") ||
                   t.name.ends_with(".b2") || t.name.ends_with("norm.bias")) {
            t.value.setZero();
        } else {
            const double sigma = 1.0 / std::sqrt(static_cast<double>(t.value.rows()));
            for (long c = 0; c < t.value.cols(); ++c)
                for (long r = 0; r < t.value.rows(); ++r)
                    t.value(r, c) = sigma * rng.normal();
        }
    }
    return m;
}

Eigen::VectorXd time_embedding(int t, int dim) {
    Eigen::VectorXd e(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq =
            std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        e[2 * i] = std::sin(t * freq);
        e[2 * i + 1] = std::cos(t * freq);
    }
    return e;
}

Eigen::MatrixXd predict_noise_cached(const DenoiserModel& m,
                                     const Eigen::MatrixXd& v_t, int t,
                                     const Eigen::VectorXd& cond,
                                     DenoiserCache& cache) {
    const auto& cfg = m.cfg;
    const int n_frames = static_cast<int>(v_t.rows());
    require_shape(n_frames >= 2, "predict_noise: need at least 2 frames");
    require_shape(static_cast<int>(v_t.cols()) == cfg.frame_dim(),
                  "predict_noise: frame dim mismatch");
    require_shape(static_cast<int>(cond.size()) == cfg.cond_dim,
                  "predict_noise: conditioning dim mismatch");

    const int P = cfg.tokens_per_frame();
    const int H = cfg.hidden_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(H));
    const auto& p = m.params;

    cache.n_frames = n_frames;
    cache.patches = patchify(cfg, v_t);
    cache.cond = cond;
    cache.t_embed = time_embedding(t, cfg.time_embed_dim);
    cache.blocks.assign(static_cast<std::size_t>(cfg.n_blocks), {});

    Eigen::MatrixXd x = cache.patches * p.at("patch_embed.w");
    x.rowwise() += p.at("patch_embed.b").row(0);
    const Eigen::RowVectorXd ctx =
        cond.transpose() * p.at("cond_proj.w") + p.at("cond_proj.b").row(0) +
        cache.t_embed.transpose() * p.at("time_proj.w") + p.at("time_proj.b").row(0);
    x.rowwise() += ctx;

    for (int b = 0; b < cfg.n_blocks; ++b) {
        const std::string pre = block_prefix(b);
        auto& bc = cache.blocks[static_cast<std::size_t>(b)];

        // conditioning and time are re-injected at every block so their
        // influence survives depth
        const Eigen::RowVectorXd block_ctx =
            cond.transpose() * p.at(pre + "ctx_cond.w") +
            p.at(pre + "ctx_cond.b").row(0) +
            cache.t_embed.transpose() * p.at(pre + "ctx_time.w") +
            p.at(pre + "ctx_time.b").row(0);
        x.rowwise() += block_ctx;

        // spatial attention: tokens within one frame form a group
        layer_norm_forward(x, p.at(pre + "sa.norm.gain"), p.at(pre + "sa.norm.bias"),
                           bc.sa_norm);
        bc.sa.q.resize(n_frames);
        bc.sa.k.resize(n_frames);
        bc.sa.v.resize(n_frames);
        bc.sa.attn.resize(n_frames);
        bc.sa.mix.resize(n_frames);
        for (int n = 0; n < n_frames; ++n) {
            const Eigen::MatrixXd y = bc.sa_norm.y.middleRows(n * P, P);
            attention_group_forward(y, p.at(pre + "sa.wq"), p.at(pre + "sa.wk"),
                                    p.at(pre + "sa.wv"), scale, bc.sa.q[n],
                                    bc.sa.k[n], bc.sa.v[n], bc.sa.attn[n],
                                    bc.sa.mix[n]);
            x.middleRows(n * P, P).noalias() += bc.sa.mix[n] * p.at(pre + "sa.wo");
        }

        // temporal attention: the same token position across frames
        layer_norm_forward(x, p.at(pre + "ta.norm.gain"), p.at(pre + "ta.norm.bias"),
                           bc.ta_norm);
        bc.ta.q.resize(P);
        bc.ta.k.resize(P);
        bc.ta.v.resize(P);
        bc.ta.attn.resize(P);
        bc.ta.mix.resize(P);
        for (int pos = 0; pos < P; ++pos) {
            Eigen::MatrixXd y(n_frames, H);
            for (int n = 0; n < n_frames; ++n)
                y.row(n) = bc.ta_norm.y.row(static_cast<long>(n) * P + pos);
            attention_group_forward(y, p.at(pre + "ta.wq"), p.at(pre + "ta.wk"),
                                    p.at(pre + "ta.wv"), scale, bc.ta.q[pos],
                                    bc.ta.k[pos], bc.ta.v[pos], bc.ta.attn[pos],
                                    bc.ta.mix[pos]);
            const Eigen::MatrixXd add = bc.ta.mix[pos] * p.at(pre + "ta.wo");
            for (int n = 0; n < n_frames; ++n)
                x.row(static_cast<long>(n) * P + pos) += add.row(n);
        }

        // per-token MLP
        layer_norm_forward(x, p.at(pre + "mlp.norm.gain"),
                           p.at(pre + "mlp.norm.bias"), bc.mlp_norm);
        bc.mlp_pre.noalias() = bc.mlp_norm.y * p.at(pre + "mlp.w1");
        bc.mlp_pre.rowwise() += p.at(pre + "mlp.b1").row(0);
        bc.mlp_act = bc.mlp_pre.unaryExpr([](double v) { return gelu(v); });
        x.noalias() += bc.mlp_act * p.at(pre + "mlp.w2");
        x.rowwise() += p.at(pre + "mlp.b2").row(0);
    }

    layer_norm_forward(x, p.at("out.norm.gain"), p.at("out.norm.bias"),
                       cache.out_norm);
    Eigen::MatrixXd tok_out = cache.out_norm.y * p.at("out.w");
    tok_out.rowwise() += p.at("out.b").row(0);
    return unpatchify(cfg, tok_out, n_frames);
}

Eigen::MatrixXd predict_noise(const DenoiserModel& m, const Eigen::MatrixXd& v_t,
                              int t, const Eigen::VectorXd& cond) {
    DenoiserCache cache;
    return predict_noise_cached(m, v_t, t, cond, cache);
}

void denoiser_backward(const DenoiserModel& m, const DenoiserCache& cache,
                       const Eigen::MatrixXd& d_eps, GradientBuffers& grads) {
    const auto& cfg = m.cfg;
    const auto& p = m.params;
    const int n_frames = cache.n_frames;
    const int P = cfg.tokens_per_frame();
    const int H = cfg.hidden_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(H));

    auto g = [&](const std::string& name) -> Eigen::MatrixXd& {
        const int i = p.index_of(name);
        require_config(i >= 0, "backward: missing tensor " + name);
        return grads[i];
    };

    // readout
    const Eigen::MatrixXd d_tok_out = patchify(cfg, d_eps);
    g("out.w").noalias() += cache.out_norm.y.transpose() * d_tok_out;
    g("out.b").row(0) += d_tok_out.colwise().sum();
    Eigen::MatrixXd dx = layer_norm_backward(cache.out_norm, p.at("out.norm.gain"),
                                             d_tok_out * p.at("out.w").transpose(),
                                             g("out.norm.gain"), g("out.norm.bias"));

    for (int b = cfg.n_blocks - 1; b >= 0; --b) {
        const std::string pre = block_prefix(b);
        const auto& bc = cache.blocks[static_cast<std::size_t>(b)];

        // MLP backward
        {
            const Eigen::MatrixXd& dout = dx;  // grad on x after the MLP add
            g(pre + "mlp.b2").row(0) += dout.colwise().sum();
            g(pre + "mlp.w2").noalias() += bc.mlp_act.transpose() * dout;
            const Eigen::MatrixXd d_act = dout * p.at(pre + "mlp.w2").transpose();
            const Eigen::MatrixXd d_pre =
                (d_act.array() *
                 bc.mlp_pre.unaryExpr([](double v) { return gelu_grad(v); })
                     .array())
                    .matrix();
            g(pre + "mlp.b1").row(0) += d_pre.colwise().sum();
            g(pre + "mlp.w1").noalias() += bc.mlp_norm.y.transpose() * d_pre;
            const Eigen::MatrixXd dy = d_pre * p.at(pre + "mlp.w1").transpose();
            dx += layer_norm_backward(bc.mlp_norm, p.at(pre + "mlp.norm.gain"), dy,
                                      g(pre + "mlp.norm.gain"),
                                      g(pre + "mlp.norm.bias"));
        }

        // temporal attention backward
        {
            Eigen::MatrixXd dy_groups =
                Eigen::MatrixXd::Zero(static_cast<long>(n_frames) * P, H);
            for (int pos = 0; pos < P; ++pos) {
                Eigen::MatrixXd d_add(n_frames, H);
                for (int n = 0; n < n_frames; ++n)
                    d_add.row(n) = dx.row(static_cast<long>(n) * P + pos);
                g(pre + "ta.wo").noalias() +=
                    bc.ta.mix[pos].transpose() * d_add;
                const Eigen::MatrixXd d_mix =
                    d_add * p.at(pre + "ta.wo").transpose();
                Eigen::MatrixXd y(n_frames, H);
                for (int n = 0; n < n_frames; ++n)
                    y.row(n) = bc.ta_norm.y.row(static_cast<long>(n) * P + pos);
                const auto back = attention_group_backward(
                    y, p.at(pre + "ta.wq"), p.at(pre + "ta.wk"),
                    p.at(pre + "ta.wv"), scale, bc.ta.q[pos], bc.ta.k[pos],
                    bc.ta.v[pos], bc.ta.attn[pos], d_mix, g(pre + "ta.wq"),
                    g(pre + "ta.wk"), g(pre + "ta.wv"));
                for (int n = 0; n < n_frames; ++n)
                    dy_groups.row(static_cast<long>(n) * P + pos) = back.dy.row(n);
            }
            dx += layer_norm_backward(bc.ta_norm, p.at(pre + "ta.norm.gain"),
                                      dy_groups, g(pre + "ta.norm.gain"),
                                      g(pre + "ta.norm.bias"));
        }

        // spatial attention backward
        {
            Eigen::MatrixXd dy_groups =
                Eigen::MatrixXd::Zero(static_cast<long>(n_frames) * P, H);
            for (int n = 0; n < n_frames; ++n) {
                const Eigen::MatrixXd d_add = dx.middleRows(n * P, P);
                g(pre + "sa.wo").noalias() += bc.sa.mix[n].transpose() * d_add;
                const Eigen::MatrixXd d_mix =
                    d_add * p.at(pre + "sa.wo").transpose();
                const Eigen::MatrixXd y = bc.sa_norm.y.middleRows(n * P, P);
                const auto back = attention_group_backward(
                    y, p.at(pre + "sa.wq"), p.at(pre + "sa.wk"),
                    p.at(pre + "sa.wv"), scale, bc.sa.q[n], bc.sa.k[n],
                    bc.sa.v[n], bc.sa.attn[n], d_mix, g(pre + "sa.wq"),
                    g(pre + "sa.wk"), g(pre + "sa.wv"));
                dy_groups.middleRows(n * P, P) = back.dy;
            }
            dx += layer_norm_backward(bc.sa_norm, p.at(pre + "sa.norm.gain"),
                                      dy_groups, g(pre + "sa.norm.gain"),
                                      g(pre + "sa.norm.bias"));
        }

        // block-level context injection
        {
            const Eigen::RowVectorXd d_ctx = dx.colwise().sum();
            g(pre + "ctx_cond.w").noalias() += cache.cond * d_ctx;
            g(pre + "ctx_cond.b").row(0) += d_ctx;
            g(pre + "ctx_time.w").noalias() += cache.t_embed * d_ctx;
            g(pre + "ctx_time.b").row(0) += d_ctx;
        }
    }

    // context and embeddings
    const Eigen::RowVectorXd d_ctx = dx.colwise().sum();
    g("cond_proj.w").noalias() += cache.cond * d_ctx;
    g("cond_proj.b").row(0) += d_ctx;
    g("time_proj.w").noalias() += cache.t_embed * d_ctx;
    g("time_proj.b").row(0) += d_ctx;
    g("patch_embed.w").noalias() += cache.patches.transpose() * dx;
    g("patch_embed.b").row(0) += dx.colwise().sum();
}

}  // namespace vmc
