#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>

#include "vmc/corpus.hpp"
#include "vmc/motion.hpp"

using namespace vmc;

namespace {
ClipSpec spec_of(int motion, int shape, std::uint64_t seed) {
    ClipSpec s;
    s.motion = motion;
    s.shape = shape;
    s.intensity = 2;
    s.texture = 1;
    s.level = 1;
    s.seed = seed;
    return s;
}
}  // namespace

TEST_CASE("translate-right moves the ground-truth centroid linearly") {
    const auto clip = render_clip(spec_of(0, 0, 11));
    const auto& track = clip.track_keyframes;
    const double step0 = track(1, 0) - track(0, 0);
    CHECK(step0 > 0.0);
    for (int k = 1; k + 1 < track.rows(); ++k) {
        CHECK(track(k + 1, 0) - track(k, 0) ==
              doctest::Approx(step0).epsilon(1e-12));
        CHECK(track(k, 1) == doctest::Approx(track(0, 1)).epsilon(1e-12));
    }
}

TEST_CASE("rendering is deterministic per (spec, seed)") {
    const auto a = render_clip(spec_of(6, 3, 42));
    const auto b = render_clip(spec_of(6, 3, 42));
    CHECK((a.keyframes.frames - b.keyframes.frames).norm() == 0.0);
    CHECK((a.fine_hi.frames - b.fine_hi.frames).norm() == 0.0);

    const auto c = render_clip(spec_of(6, 3, 43));
    CHECK((a.keyframes.frames - c.keyframes.frames).norm() > 0.0);
}

TEST_CASE("appearance changes never touch the trajectory") {
    for (int motion = 0; motion < vocab::kMotionCount; ++motion) {
        auto s1 = spec_of(motion, 0, 17);
        auto s2 = spec_of(motion, 5, 17);
        s2.intensity = 0;
        s2.texture = 3;
        s2.level = 3;
        const auto a = render_clip(s1);
        const auto b = render_clip(s2);
        CHECK((a.track_fine - b.track_fine).norm() == 0.0);
    }
}

TEST_CASE("pixel range and pooling consistency") {
    const auto clip = render_clip(spec_of(7, 4, 5));
    CHECK(clip.keyframes.frames.minCoeff() >= 0.0);
    CHECK(clip.keyframes.frames.maxCoeff() <= 1.0);
    // low-res is exactly the 2x2 average of high-res
    for (int f = 0; f < clip.keyframes.frame_count(); ++f)
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 16; ++c) {
                const double avg = 0.25 * (clip.keyframes_hi.pixel(f, 2 * r, 2 * c) +
                                           clip.keyframes_hi.pixel(f, 2 * r, 2 * c + 1) +
                                           clip.keyframes_hi.pixel(f, 2 * r + 1, 2 * c) +
                                           clip.keyframes_hi.pixel(f, 2 * r + 1, 2 * c + 1));
                CHECK(clip.keyframes.pixel(f, r, c) ==
                      doctest::Approx(avg).epsilon(1e-15));
            }
    // keyframes sit at fine indexes 0,4,8,...
    for (int k = 0; k < 8; ++k)
        CHECK((clip.keyframes.frames.row(k) - clip.fine.frames.row(4 * k)).norm() ==
              0.0);
}

TEST_CASE("trajectories that cannot fit raise the out-of-bounds error") {
    auto s = spec_of(0, 0, 3);
    s.height = 8;
    s.width = 8;  // translation span plus reach cannot fit in 8px
    CHECK_THROWS_AS(render_clip(s), ConfigError);
}

TEST_CASE("reverse_clip involution and residual algebra") {
    const auto [v, prompt] = generate_clip(spec_of(4, 2, 9));
    const auto rr = reverse_clip(reverse_clip(v));
    CHECK((rr.frames - v.frames).norm() == 0.0);

    const auto mv = motion_vectors(v, 1);
    const auto mv_rev = motion_vectors(reverse_clip(v), 1);
    const long rows = mv.deltas.rows();
    for (long r = 0; r < rows; ++r)
        CHECK((mv_rev.deltas.row(r) + mv.deltas.row(rows - 1 - r)).norm() == 0.0);

    // centroid velocity negates
    const auto fwd = extract_centroid_track(v);
    const auto bwd = extract_centroid_track(reverse_clip(v));
    const Eigen::RowVector2d v_fwd = fwd.pos.row(1) - fwd.pos.row(0);
    const Eigen::RowVector2d v_bwd =
        bwd.pos.row(bwd.pos.rows() - 1) - bwd.pos.row(bwd.pos.rows() - 2);
    CHECK((v_fwd + v_bwd).norm() < 1e-9);
}

TEST_CASE("centroid extraction") {
    // single bright pixel
    VideoTensor v = make_video(2, 16, 16);
    v.frames.array() += 0.1;
    v.pixel(0, 5, 9) = 0.9;
    v.pixel(1, 7, 2) = 0.9;
    const auto track = extract_centroid_track(v);
    CHECK(track.pos(0, 0) == 9.0);
    CHECK(track.pos(0, 1) == 5.0);
    CHECK(track.pos(1, 0) == 2.0);
    CHECK(track.pos(1, 1) == 7.0);
    CHECK(track.any_valid);

    // empty foreground carries the last position forward and is flagged
    VideoTensor dark = make_video(3, 16, 16);
    dark.frames.array() += 0.2;
    dark.pixel(0, 4, 4) = 0.8;
    const auto t2 = extract_centroid_track(dark);
    CHECK(t2.empty[0] == 0);
    CHECK(t2.empty[1] == 1);
    CHECK(t2.empty[2] == 1);
    CHECK(t2.pos(2, 0) == t2.pos(0, 0));

    // fully dark video has no valid frame
    VideoTensor none = make_video(2, 16, 16);
    CHECK_FALSE(extract_centroid_track(none).any_valid);
}

TEST_CASE("extracted tracks stay within half a pixel of the generator track") {
    for (int motion : {0, 4, 6, 7}) {
        const auto clip = render_clip(spec_of(motion, 0, 21));
        const auto track = extract_centroid_track(clip.keyframes);
        for (int k = 0; k < 8; ++k) {
            CHECK(std::abs(track.pos(k, 0) - clip.track_keyframes(k, 0)) < 0.5);
            CHECK(std::abs(track.pos(k, 1) - clip.track_keyframes(k, 1)) < 0.5);
        }
    }
}

TEST_CASE("motion class is recoverable from every corpus clip") {
    CorpusConfig cfg;
    cfg.n_train = 128;
    cfg.seed = 99;
    const auto entries = build_corpus(cfg);
    for (const auto& e : entries) {
        const auto clip = render_clip(e.spec);
        const auto track = extract_centroid_track(clip.keyframes);
        CHECK(motion_class_from_track(track.pos) == e.spec.motion);
    }
}

TEST_CASE("corpus respects holdout pairs and balances the rest") {
    CorpusConfig cfg;
    cfg.n_train = 150;
    cfg.seed = 5;
    cfg.holdout_pairs = {{4, 0}, {5, 1}, {6, 2}, {7, 3}};
    const auto entries = build_corpus(cfg);
    CHECK(entries.size() == 150);
    for (const auto& e : entries)
        for (const auto& [m, s] : cfg.holdout_pairs) {
            const bool is_held = e.spec.motion == m && e.spec.shape == s;
            CHECK_FALSE(is_held);
        }

    // every non-held pair appears at least twice in 150 draws over 60 pairs
    std::map<std::pair<int, int>, int> counts;
    for (const auto& e : entries) counts[{e.spec.motion, e.spec.shape}]++;
    CHECK(counts.size() == 60);
    for (const auto& [k, n] : counts) CHECK(n >= 2);
}

TEST_CASE("corpus index JSONL round trip") {
    CorpusConfig cfg;
    cfg.n_train = 12;
    cfg.seed = 1;
    const auto entries = build_corpus(cfg);
    const std::string path = "/tmp/vmc_test_index.jsonl";
    save_corpus_index(path, entries);
    const auto loaded = load_corpus_index(path);
    REQUIRE(loaded.size() == entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        CHECK(loaded[i].spec.to_json() == entries[i].spec.to_json());
        CHECK(loaded[i].split == entries[i].split);
    }
    std::remove(path.c_str());
}
