#include <doctest.h>

#include <numeric>

#include "vmc/corpus.hpp"
#include "vmc/diffusion.hpp"
#include "vmc/motion.hpp"

using namespace vmc;

namespace {

DenoiserConfig curve_cfg() {
    DenoiserConfig cfg;  // 16x16 frames, slimmed for test runtime
    cfg.hidden_dim = 32;
    cfg.n_blocks = 1;
    cfg.time_embed_dim = 16;
    return cfg;
}

double mean_of(const std::vector<double>& v, std::size_t begin, std::size_t end) {
    return std::accumulate(v.begin() + static_cast<long>(begin),
                           v.begin() + static_cast<long>(end), 0.0) /
           static_cast<double>(end - begin);
}

}  // namespace

TEST_CASE("base training reduces the epsilon-matching loss") {
    CorpusConfig ccfg;
    ccfg.n_train = 64;
    ccfg.seed = 11;
    const auto corpus = render_corpus(build_corpus(ccfg));

    auto m = init_denoiser(curve_cfg(), 5);
    TrainConfig tcfg;
    tcfg.steps = 200;
    tcfg.batch = 4;
    tcfg.opt.lr = 1e-3;
    tcfg.seed = 17;
    const auto result = train_base(m, corpus, make_linear_schedule(100, 1e-4, 0.02),
                                   tcfg);
    REQUIRE(result.loss_trace.size() == 200);
    const double first_half = mean_of(result.loss_trace, 0, 100);
    const double second_half = mean_of(result.loss_trace, 100, 200);
    INFO("first 100 mean " << first_half << ", final 100 mean " << second_half);
    CHECK(second_half < 0.8 * first_half);
}

TEST_CASE("base training is deterministic and rejects an empty corpus") {
    CorpusConfig ccfg;
    ccfg.n_train = 8;
    ccfg.seed = 2;
    const auto corpus = render_corpus(build_corpus(ccfg));
    const auto s = make_linear_schedule(100, 1e-4, 0.02);

    TrainConfig tcfg;
    tcfg.steps = 12;
    tcfg.batch = 2;
    tcfg.seed = 3;
    auto m1 = init_denoiser(curve_cfg(), 1);
    auto m2 = init_denoiser(curve_cfg(), 1);
    const auto r1 = train_base(m1, corpus, s, tcfg);
    const auto r2 = train_base(m2, corpus, s, tcfg);
    CHECK(r1.loss_trace.back() == r2.loss_trace.back());
    for (std::size_t i = 0; i < m1.params.size(); ++i)
        CHECK((m1.params.items[i].value - m2.params.items[i].value).norm() == 0.0);

    std::vector<std::pair<VideoTensor, StructuredPrompt>> empty;
    CHECK_THROWS_AS(train_base(m1, empty, s, tcfg), ConfigError);

    // mixed shapes are rejected
    auto mixed = corpus;
    mixed.push_back({make_video(4, 16, 16), corpus.front().second});
    CHECK_THROWS_AS(train_base(m1, mixed, s, tcfg), ShapeError);
}

TEST_CASE("400-step adaptation halves the distillation loss") {
    CorpusConfig ccfg;
    ccfg.n_train = 48;
    ccfg.seed = 21;
    const auto corpus = render_corpus(build_corpus(ccfg));
    const auto s = make_linear_schedule(100, 1e-4, 0.02);

    // a briefly pretrained base: temporal layers have not yet absorbed
    // this clip's phase, which is exactly what adaptation buys
    auto m = init_denoiser(curve_cfg(), 9);
    TrainConfig btc;
    btc.steps = 50;
    btc.batch = 4;
    btc.opt.lr = 1e-3;
    btc.seed = 31;
    train_base(m, corpus, s, btc);

    ClipSpec spec;
    spec.motion = 6;  // circle: a phase-rich target
    spec.shape = 2;
    spec.intensity = 2;
    spec.texture = 0;
    spec.level = 1;
    spec.seed = 1234;
    const auto [clip, prompt] = generate_clip(spec);

    AdaptConfig acfg;
    acfg.steps = 400;
    acfg.opt.lr = 1e-2;
    const auto res = adapt_temporal_attention(m, clip, appearance_invariant(prompt),
                                              acfg, s, 77);
    REQUIRE(res.loss_trace.size() == 400);
    const double leading = mean_of(res.loss_trace, 0, 50);
    const double trailing = mean_of(res.loss_trace, 350, 400);
    INFO("leading-50 mean " << leading << ", trailing-50 mean " << trailing);
    CHECK(trailing < 0.5 * leading);
}
