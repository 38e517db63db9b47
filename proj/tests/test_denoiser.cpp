#include <doctest.h>

#include <cmath>
#include <functional>

#include "vmc/denoiser.hpp"
#include "vmc/diffusion.hpp"
#include "vmc/motion.hpp"
#include "vmc/rng.hpp"

using namespace vmc;

namespace {

DenoiserConfig small_cfg() {
    DenoiserConfig cfg;
    cfg.height = 8;
    cfg.width = 8;
    cfg.patch = 4;
    cfg.hidden_dim = 24;
    cfg.n_blocks = 2;
    cfg.time_embed_dim = 8;
    return cfg;
}

Conditioning some_cond() {
    StructuredPrompt p;
    p.motion = 3;
    p.shape = 1;
    p.intensity = 0;
    return encode_prompt(p);
}

// central finite difference of a scalar loss with respect to one coordinate
double fd_derivative(const std::function<double()>& loss, double& w, double h) {
    const double w0 = w;
    w = w0 + h;
    const double lp = loss();
    w = w0 - h;
    const double lm = loss();
    w = w0;
    return (lp - lm) / (2.0 * h);
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

TEST_CASE("init is deterministic and partition is total") {
    const auto cfg = small_cfg();
    const auto m1 = init_denoiser(cfg, 42);
    const auto m2 = init_denoiser(cfg, 42);
    REQUIRE(m1.params.size() == m2.params.size());
    for (std::size_t i = 0; i < m1.params.size(); ++i) {
        CHECK(m1.params.items[i].name == m2.params.items[i].name);
        CHECK((m1.params.items[i].value - m2.params.items[i].value).norm() == 0.0);
    }

    const auto m3 = init_denoiser(cfg, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < m1.params.size(); ++i)
        if ((m1.params.items[i].value - m3.params.items[i].value).norm() > 0)
            any_diff = true;
    CHECK(any_diff);

    // partition: temporal-attention label sits exactly on the ta Q/K/V set
    int n_ta = 0;
    for (const auto& t : m1.params.items) {
        const bool is_ta_qkv = t.name.find("ta.wq") != std::string::npos ||
                               t.name.find("ta.wk") != std::string::npos ||
                               t.name.find("ta.wv") != std::string::npos;
        CHECK((t.label == ParamLabel::kTemporalAttention) == is_ta_qkv);
        if (t.label == ParamLabel::kTemporalAttention) ++n_ta;
    }
    CHECK(n_ta == 3 * cfg.n_blocks);
}

TEST_CASE("output shape matches input shape") {
    DenoiserConfig cfg;
    cfg.hidden_dim = 32;
    cfg.time_embed_dim = 8;
    const auto m = init_denoiser(cfg, 1);
    Rng rng(2);
    for (int n : {2, 8}) {
        Eigen::MatrixXd v(n, cfg.frame_dim());
        rng.fill_normal(v);
        const auto out = predict_noise(m, v, 10, some_cond());
        CHECK(out.rows() == n);
        CHECK(out.cols() == 256);
    }
    Eigen::MatrixXd bad(3, 100);
    CHECK_THROWS_AS(predict_noise(m, bad, 10, some_cond()), ShapeError);
    Eigen::MatrixXd one(1, cfg.frame_dim());
    CHECK_THROWS_AS(predict_noise(m, one, 10, some_cond()), ShapeError);
}

TEST_CASE("zeroed temporal value projections factorize the net over frames") {
    const auto cfg = small_cfg();
    auto m = init_denoiser(cfg, 7);
    for (auto& t : m.params.items)
        if (t.name.find("ta.wv") != std::string::npos) t.value.setZero();

    Rng rng(3);
    const int n = 5;
    Eigen::MatrixXd v(n, cfg.frame_dim());
    rng.fill_normal(v);
    const Eigen::MatrixXd base = predict_noise(m, v, 20, some_cond());

    // permute frames 2..N, frame 1 output must not move
    Eigen::MatrixXd perm = v;
    perm.row(1) = v.row(3);
    perm.row(3) = v.row(4);
    perm.row(4) = v.row(1);
    const Eigen::MatrixXd out = predict_noise(m, perm, 20, some_cond());
    CHECK((out.row(0) - base.row(0)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("with live temporal weights, frame 1 sees frame N") {
    const auto cfg = small_cfg();
    const auto m = init_denoiser(cfg, 7);
    Rng rng(3);
    const int n = 5;
    Eigen::MatrixXd v(n, cfg.frame_dim());
    rng.fill_normal(v);
    const Eigen::MatrixXd base = predict_noise(m, v, 20, some_cond());
    Eigen::MatrixXd pert = v;
    pert.row(n - 1).array() += 0.5;
    const Eigen::MatrixXd out = predict_noise(m, pert, 20, some_cond());
    CHECK((out.row(0) - base.row(0)).norm() > 1e-12);
}

TEST_CASE("prediction is a pure function of its inputs") {
    const auto cfg = small_cfg();
    const auto m = init_denoiser(cfg, 9);
    Rng rng(4);
    Eigen::MatrixXd v(4, cfg.frame_dim());
    rng.fill_normal(v);
    const auto a = predict_noise(m, v, 33, some_cond());
    const auto b = predict_noise(m, v, 33, some_cond());
    CHECK((a - b).norm() == 0.0);
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
    const auto cfg = small_cfg();
    const auto m = init_denoiser(cfg, 5);
    Rng rng(6);
    Eigen::MatrixXd v(3, cfg.frame_dim());
    rng.fill_normal(v);
    DenoiserCache cache;
    predict_noise_cached(m, v, 12, some_cond().embedding, cache);
    GradientBuffers grads(m.params);
    denoiser_backward(m, cache, Eigen::MatrixXd::Zero(3, cfg.frame_dim()), grads);
    for (const auto& g : grads.g) CHECK(g.norm() == 0.0);
}

TEST_CASE("finite differences validate the finite-difference oracle itself") {
    // loss = 0.5 * ||W||^2 has gradient W, a closed form the oracle must hit
    auto m = init_denoiser(small_cfg(), 11);
    auto& w = m.params.at("blocks.0.ta.wq");
    auto loss = [&]() { return 0.5 * w.squaredNorm(); };
    Rng rng(12);
    for (int k = 0; k < 10; ++k) {
        const long r = rng.uniform_int(0, w.rows() - 1);
        const long c = rng.uniform_int(0, w.cols() - 1);
        const double fd = fd_derivative(loss, w(r, c), 1e-5);
        CHECK(rel_err(fd, w(r, c)) < 1e-7);
    }
}

TEST_CASE("analytic gradients match finite differences on both losses") {
    const auto cfg = small_cfg();
    auto m = init_denoiser(cfg, 21);
    const auto s = make_linear_schedule(100, 1e-4, 0.02);
    const auto cond = some_cond();
    const int n = 4, t = 37;

    Rng rng(22);
    Eigen::MatrixXd frames(n, cfg.frame_dim());
    for (long i = 0; i < frames.size(); ++i)
        frames(i / frames.cols(), i % frames.cols()) = rng.uniform();
    const VideoTensor v0(frames, cfg.height, cfg.width);
    Eigen::MatrixXd eps(n, cfg.frame_dim());
    rng.fill_normal(eps);

    SUBCASE("epsilon matching") {
        GradientBuffers grads(m.params);
        epsilon_matching_loss_grad(m, v0, t, eps, cond, s, grads);
        auto loss = [&]() { return epsilon_matching_loss(m, v0, t, eps, cond, s); };
        for (int k = 0; k < 30; ++k) {
            const auto ti = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(m.params.size()) - 1));
            auto& w = m.params.items[ti].value;
            const long r = rng.uniform_int(0, w.rows() - 1);
            const long c = rng.uniform_int(0, w.cols() - 1);
            const double fd = fd_derivative(loss, w(r, c), 1e-5);
            CHECK(rel_err(fd, grads[static_cast<int>(ti)](r, c)) < 1e-4);
        }
    }

    SUBCASE("distillation losses over theta_TA coordinates") {
        const Eigen::MatrixXd v_t = forward_sample(v0.frames, t, eps, s);
        const MotionVectors d_true = motion_vectors(eps, 1, t);
        for (const auto which : {DistillLoss::kCos, DistillLoss::kL2}) {
            DenoiserCache cache;
            const Eigen::MatrixXd pred =
                predict_noise_cached(m, v_t, t, cond.embedding, cache);
            Eigen::MatrixXd d_pred;
            distill_loss_and_grad(d_true, pred, 1, which, t, s, d_pred);
            GradientBuffers grads(m.params);
            denoiser_backward(m, cache, d_pred, grads);

            auto loss = [&]() {
                const Eigen::MatrixXd p2 = predict_noise(m, v_t, t, cond.embedding);
                Eigen::MatrixXd unused;
                return distill_loss_and_grad(d_true, p2, 1, which, t, s, unused);
            };
            const auto ta_set =
                m.params.indices_with_label(ParamLabel::kTemporalAttention);
            for (int k = 0; k < 25; ++k) {
                const int ti = ta_set[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(ta_set.size()) - 1))];
                auto& w = m.params.items[static_cast<std::size_t>(ti)].value;
                const long r = rng.uniform_int(0, w.rows() - 1);
                const long c = rng.uniform_int(0, w.cols() - 1);
                const double fd = fd_derivative(loss, w(r, c), 1e-5);
                CHECK(rel_err(fd, grads[ti](r, c)) < 1e-4);
            }
        }
    }
}

TEST_CASE("time embedding is unit-bounded and t-sensitive") {
    const auto a = time_embedding(3, 16);
    const auto b = time_embedding(4, 16);
    CHECK(a.lpNorm<Eigen::Infinity>() <= 1.0);
    CHECK((a - b).norm() > 1e-6);
}
