#include <doctest.h>

#include <cmath>

#include "vmc/diffusion.hpp"
#include "vmc/io.hpp"
#include "vmc/motion.hpp"
#include "vmc/rng.hpp"

using namespace vmc;

namespace {
const NoiseSchedule& sched() {
    static const NoiseSchedule s = make_linear_schedule(100, 1e-4, 0.02);
    return s;
}
}  // namespace

TEST_CASE("motion vectors of an arithmetic progression") {
    Eigen::MatrixXd frames(3, 4);
    Eigen::RowVectorXd f(4), d(4);
    // dyadic values keep the progression exact in floating point
    f << 0.125, 0.25, 0.375, 0.5;
    d << 0.0625, -0.03125, 0.015625, 0.0;
    frames.row(0) = f;
    frames.row(1) = f + d;
    frames.row(2) = f + 2 * d;
    const auto mv = motion_vectors(frames, 1);
    CHECK(mv.rows() == 2);
    CHECK((mv.deltas.row(0) - d).norm() == 0.0);
    CHECK((mv.deltas.row(1) - d).norm() == 0.0);

    // constant video -> all-zero rows
    Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(5, 4) * 0.3;
    CHECK(motion_vectors(constant, 1).deltas.norm() == 0.0);

    CHECK_THROWS_AS(motion_vectors(frames, 0), ConfigError);
    CHECK_THROWS_AS(motion_vectors(frames, 3), ConfigError);
    CHECK(motion_vectors(frames, 2).rows() == 1);
}

TEST_CASE("predicted residuals share the motion_vectors definition") {
    Rng rng(1);
    Eigen::MatrixXd pred(6, 10);
    rng.fill_normal(pred);
    const auto a = predicted_epsilon_residuals(pred, 1);
    const auto b = motion_vectors(pred, 1);
    CHECK((a.deltas - b.deltas).norm() == 0.0);

    // naive loop oracle
    for (int n = 0; n < a.rows(); ++n)
        for (int j = 0; j < 10; ++j)
            CHECK(a.deltas(n, j) == pred(n + 1, j) - pred(n, j));

    // constant prediction across frames -> zero residuals
    Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(4, 10).array().row(0).replicate(4, 1);
    CHECK(predicted_epsilon_residuals(constant, 1).deltas.norm() == 0.0);
}

TEST_CASE("denoised motion estimate: exact noise recovers the clean residual") {
    Rng rng(2);
    const auto& s = sched();
    Eigen::MatrixXd v0(5, 16), eps(5, 16);
    rng.fill_normal(v0);
    rng.fill_normal(eps);
    const int t = 42;

    const Eigen::MatrixXd v_t = forward_sample(v0, t, eps, s);
    const auto dv_t = motion_vectors(v_t, 1, t);
    const auto d_eps = motion_vectors(eps, 1, t);
    const auto est = denoised_motion_estimate(dv_t, d_eps, t, s);
    const auto dv_0 = motion_vectors(v0, 1);
    CHECK((est.deltas - dv_0.deltas).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("estimate commutes with differencing") {
    Rng rng(3);
    const auto& s = sched();
    Eigen::MatrixXd v_t(6, 24), eps_pred(6, 24);
    rng.fill_normal(v_t);
    rng.fill_normal(eps_pred);
    for (int t : {7, 55, 100}) {
        // path A: Tweedie the whole video, then difference
        const Eigen::MatrixXd x0 = tweedie_video(v_t, eps_pred, t, s);
        const auto path_a = motion_vectors(x0, 1);
        // path B: difference first, then the residual estimate
        const auto path_b = denoised_motion_estimate(
            motion_vectors(v_t, 1, t), motion_vectors(eps_pred, 1, t), t, s);
        CHECK((path_a.deltas - path_b.deltas).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("denoised motion estimate: naive loop oracle") {
    Rng rng(4);
    const auto& s = sched();
    const int t = 31;
    MotionVectors dv_t, d_eps;
    dv_t.deltas.resize(3, 8);
    d_eps.deltas.resize(3, 8);
    dv_t.timestep = d_eps.timestep = t;
    rng.fill_normal(dv_t.deltas);
    rng.fill_normal(d_eps.deltas);
    const auto est = denoised_motion_estimate(dv_t, d_eps, t, s);
    const double ab = s.alpha_bar_at(t);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 8; ++c) {
            const double expected =
                (dv_t.deltas(r, c) - std::sqrt(1.0 - ab) * d_eps.deltas(r, c)) /
                std::sqrt(ab);
            CHECK(est.deltas(r, c) == doctest::Approx(expected).epsilon(1e-15));
        }

    MotionVectors wrong;
    wrong.deltas.resize(2, 8);
    CHECK_THROWS_AS(denoised_motion_estimate(dv_t, wrong, t, s), ShapeError);
}

TEST_CASE("l2 alignment equals the clean-residual distance (both-sides oracle)") {
    Rng rng(5);
    const auto& s = sched();
    for (int rep = 0; rep < 100; ++rep) {
        const int t = 1 + static_cast<int>(rng.uniform_int(0, 99));
        const int n = 4, d = 12;
        Eigen::MatrixXd v0(n, d), eps(n, d), eps_pred(n, d);
        rng.fill_normal(v0);
        rng.fill_normal(eps);
        rng.fill_normal(eps_pred);

        const Eigen::MatrixXd v_t = forward_sample(v0, t, eps, s);
        const auto dv_t = motion_vectors(v_t, 1, t);
        const auto d_true = motion_vectors(eps, 1, t);
        const auto d_pred = motion_vectors(eps_pred, 1, t);

        // left side: distance between the clean motion vector and its
        // denoised estimate, straight from the definitions
        const auto dv0 = motion_vectors(v0, 1);
        const auto est = denoised_motion_estimate(dv_t, d_pred, t, s);
        const double lhs =
            (dv0.deltas - est.deltas).squaredNorm() / dv0.deltas.rows();

        const double rhs = loss_l2_align(d_true, d_pred, t, s);
        CHECK(std::abs(lhs - rhs) / std::abs(rhs) < 1e-10);
    }
}

TEST_CASE("l2 alignment basics") {
    const auto& s = sched();
    MotionVectors a, b;
    a.deltas = Eigen::MatrixXd::Random(3, 6);
    b = a;
    CHECK(loss_l2_align(a, b, 10, s) == 0.0);

    // the (1-abar)/abar scale against the tables
    b.deltas = a.deltas.array() + 1.0;
    for (int t : {1, 50, 100}) {
        const double ab = s.alpha_bar_at(t);
        const double expected = (1.0 - ab) / ab * 6.0;  // ||1||^2 per row = 6
        CHECK(loss_l2_align(a, b, t, s) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("cosine loss endpoints and invariances") {
    MotionVectors a, b;
    a.deltas.resize(2, 4);
    a.deltas << 1, 2, 3, 4, -1, 0.5, 2, -2;
    b = a;
    CHECK(loss_cos(a, b) == doctest::Approx(0.0).epsilon(1e-9));
    b.deltas = -a.deltas;
    CHECK(loss_cos(a, b) == doctest::Approx(2.0).epsilon(1e-9));

    // orthogonal rows -> 1
    MotionVectors u, v;
    u.deltas.resize(1, 2);
    v.deltas.resize(1, 2);
    u.deltas << 1, 0;
    v.deltas << 0, 1;
    CHECK(loss_cos(u, v) == doctest::Approx(1.0).epsilon(1e-12));

    // invariant under positive rescaling of either argument
    Rng rng(6);
    MotionVectors x, y;
    x.deltas.resize(5, 9);
    y.deltas.resize(5, 9);
    rng.fill_normal(x.deltas);
    rng.fill_normal(y.deltas);
    const double base = loss_cos(x, y);
    MotionVectors xs = x, ys = y;
    xs.deltas *= 3.7;
    ys.deltas *= 0.02;
    CHECK(loss_cos(xs, ys) == doctest::Approx(base).epsilon(1e-6));
    CHECK(base >= 0.0);
    CHECK(base <= 2.0);

    // zero-norm row is guarded, not fatal
    MotionVectors z = x;
    z.deltas.row(0).setZero();
    const double guarded = loss_cos(z, y);
    CHECK(std::isfinite(guarded));
}

TEST_CASE("distillation loss gradient wrt the prediction tensor (FD oracle)") {
    Rng rng(7);
    const auto& s = sched();
    const int n = 5, d = 8, t = 60;
    Eigen::MatrixXd eps(n, d), pred(n, d);
    rng.fill_normal(eps);
    rng.fill_normal(pred);
    const auto d_true = motion_vectors(eps, 1, t);

    for (const auto which : {DistillLoss::kCos, DistillLoss::kL2}) {
        Eigen::MatrixXd grad;
        distill_loss_and_grad(d_true, pred, 1, which, t, s, grad);
        for (int k = 0; k < 40; ++k) {
            const long r = rng.uniform_int(0, n - 1);
            const long c = rng.uniform_int(0, d - 1);
            const double h = 1e-6;
            const double w0 = pred(r, c);
            Eigen::MatrixXd unused;
            pred(r, c) = w0 + h;
            const double lp = distill_loss_and_grad(d_true, pred, 1, which, t, s, unused);
            pred(r, c) = w0 - h;
            const double lm = distill_loss_and_grad(d_true, pred, 1, which, t, s, unused);
            pred(r, c) = w0;
            const double fd = (lp - lm) / (2 * h);
            CHECK(std::abs(fd - grad(r, c)) /
                      std::max({std::abs(fd), std::abs(grad(r, c)), 1e-8}) <
                  1e-5);
        }
    }

    // gradient vanishes when the prediction already matches
    Eigen::MatrixXd grad_at_match;
    distill_loss_and_grad(d_true, eps, 1, DistillLoss::kCos, t, s, grad_at_match);
    CHECK(grad_at_match.lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("adaptation freezes everything outside the target set") {
    DenoiserConfig cfg;
    cfg.height = 8;
    cfg.width = 8;
    cfg.patch = 4;
    cfg.hidden_dim = 16;
    cfg.n_blocks = 2;
    cfg.time_embed_dim = 8;
    auto m = init_denoiser(cfg, 77);
    const auto before = m.params;

    VideoTensor clip = make_video(4, 8, 8);
    Rng rng(8);
    for (long i = 0; i < clip.frames.size(); ++i)
        clip.frames(i / 64, i % 64) = rng.uniform();

    StructuredPrompt p;
    p.motion = 1;
    AdaptConfig acfg;
    acfg.steps = 20;
    acfg.opt.lr = 1e-3;
    const auto res = adapt_temporal_attention(m, clip, p, acfg, sched(), 99);
    CHECK(res.loss_trace.size() == 20);

    int changed = 0;
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        const bool same =
            (m.params.items[i].value - before.items[i].value).norm() == 0.0;
        if (m.params.items[i].label == ParamLabel::kTemporalAttention) {
            if (!same) ++changed;
        } else {
            CHECK(same);
        }
    }
    CHECK(changed == 6);  // q/k/v in both blocks moved
}

TEST_CASE("adaptation is deterministic and validates its inputs") {
    DenoiserConfig cfg;
    cfg.height = 8;
    cfg.width = 8;
    cfg.hidden_dim = 16;
    cfg.time_embed_dim = 8;
    auto m1 = init_denoiser(cfg, 5);
    auto m2 = init_denoiser(cfg, 5);

    VideoTensor clip = make_video(3, 8, 8);
    Rng rng(9);
    for (long i = 0; i < clip.frames.size(); ++i)
        clip.frames(i / 64, i % 64) = rng.uniform();

    StructuredPrompt inv;
    inv.motion = 2;
    AdaptConfig acfg;
    acfg.steps = 8;
    adapt_temporal_attention(m1, clip, inv, acfg, sched(), 1234);
    adapt_temporal_attention(m2, clip, inv, acfg, sched(), 1234);
    for (std::size_t i = 0; i < m1.params.size(); ++i)
        CHECK((m1.params.items[i].value - m2.params.items[i].value).norm() == 0.0);

    // non-invariant prompts are rejected unless overridden
    StructuredPrompt full = inv;
    full.shape = 3;
    CHECK_THROWS_AS(adapt_temporal_attention(m1, clip, full, acfg, sched(), 1),
                    ConfigError);
    acfg.allow_non_invariant = true;
    CHECK_NOTHROW(adapt_temporal_attention(m1, clip, full, acfg, sched(), 1));

    // too-short videos are rejected
    VideoTensor single = make_video(1, 8, 8);
    CHECK_THROWS_AS(adapt_temporal_attention(m1, single, inv, acfg, sched(), 1),
                    ConfigError);
}

TEST_CASE("the spatial+conditioning ablation target set") {
    DenoiserConfig cfg;
    cfg.height = 8;
    cfg.width = 8;
    cfg.hidden_dim = 16;
    cfg.time_embed_dim = 8;
    const auto m = init_denoiser(cfg, 3);
    const auto set =
        adapt_target_indices(m.params, AdaptTargets::kSpatialAndConditioning);
    // sa q/k/v per block + cond w/b
    CHECK(set.size() == static_cast<std::size_t>(3 * cfg.n_blocks + 2));
    for (int idx : set) {
        const auto& name = m.params.items[static_cast<std::size_t>(idx)].name;
        const bool ok = name.find("sa.w") != std::string::npos ||
                        name.rfind("cond_proj.", 0) == 0;
        CHECK(ok);
        CHECK(name.find("sa.wo") == std::string::npos);
    }
}
