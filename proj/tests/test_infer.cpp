#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "combo/infer.hpp"
#include "combo/rng.hpp"

using namespace combo;

namespace {

// Deterministic fake per-window predictor: probability depends on absolute
// voxel position and window origin, so overlapping windows disagree.
WindowPredictor fake_predictor(const Dims3& parent, int channels, std::uint64_t salt) {
    return [=](const Volume& window) {
        ProbField out(window.dims(), channels);
        for (int c = 0; c < channels; ++c)
            for (int z = 0; z < window.dims().d; ++z)
                for (int y = 0; y < window.dims().h; ++y)
                    for (int x = 0; x < window.dims().w; ++x) {
                        // window content encodes absolute position (set by caller)
                        const std::uint64_t key =
                            salt * 1000003ULL + std::uint64_t(window.at(x, y, z)) * 31ULL + c;
                        Rng r(key);
                        out.at(x, y, z, c) = r.uniform();
                    }
        (void)parent;
        return out;
    };
}

Volume position_volume(const Dims3& d) {
    Volume v(d);
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) v.at(x, y, z) = double(voxel_index(d, x, y, z));
    return v;
}

}  // namespace

TEST_CASE("plan_windows: basic origins and boundary clamp") {
    {
        const auto w = plan_windows({4, 1, 1}, {2, 1, 1}, {2, 1, 1});
        REQUIRE(w.size() == 2);
        CHECK(w[0].origin[0] == 0);
        CHECK(w[1].origin[0] == 2);
    }
    {
        const auto w = plan_windows({5, 1, 1}, {2, 1, 1}, {2, 1, 1});
        REQUIRE(w.size() == 3);
        CHECK(w[0].origin[0] == 0);
        CHECK(w[1].origin[0] == 2);
        CHECK(w[2].origin[0] == 3);  // clamped to dim - window
    }
    {
        const auto w = plan_windows({6, 6, 6}, {6, 6, 6}, {6, 6, 6});
        REQUIRE(w.size() == 1);
        CHECK(w[0].origin == std::array<int, 3>{0, 0, 0});
    }
    CHECK_THROWS(plan_windows({4, 4, 4}, {5, 4, 4}, {1, 1, 1}));
    CHECK_THROWS(plan_windows({4, 4, 4}, {2, 2, 2}, {3, 1, 1}));
}

TEST_CASE("plan_windows covers every voxel for assorted geometries") {
    for (int dim : {4, 5, 7, 8})
        for (int win : {1, 2, 3, 4})
            for (int stride = 1; stride <= win; ++stride) {
                if (win > dim) continue;
                const Dims3 dims{dim, dim, dim};
                std::vector<int> covered(dims.count(), 0);
                for (const auto& s : plan_windows(dims, {win, win, win}, {stride, stride, stride}))
                    for (int z = 0; z < win; ++z)
                        for (int y = 0; y < win; ++y)
                            for (int x = 0; x < win; ++x)
                                covered[voxel_index(dims, s.origin[0] + x, s.origin[1] + y,
                                                    s.origin[2] + z)]++;
                CHECK(std::all_of(covered.begin(), covered.end(), [](int c) { return c >= 1; }));
            }
}

TEST_CASE("fuse: idempotent, order independent, keeps the maximum") {
    FusionAccumulator a({2, 2, 1}, 1);
    ProbField w1({2, 2, 1}, 1);
    w1.values() = {0.2, 0.9, 0.4, 0.1};
    SubVolumeSpec spec{{0, 0, 0}, {2, 2, 1}, {1, 1, 1}};
    fuse(a, spec, w1);
    auto once = a;
    fuse(a, spec, w1);
    CHECK(a.max_activation == once.max_activation);  // idempotent maxima

    // permuted orders agree
    ProbField w2({2, 2, 1}, 1);
    w2.values() = {0.5, 0.3, 0.6, 0.05};
    FusionAccumulator fwd({2, 2, 1}, 1), rev({2, 2, 1}, 1);
    fuse(fwd, spec, w1);
    fuse(fwd, spec, w2);
    fuse(rev, spec, w2);
    fuse(rev, spec, w1);
    CHECK(fwd.max_activation == rev.max_activation);
    CHECK(fwd.max_activation[0] == 0.5);
    CHECK(fwd.max_activation[1] == 0.9);
}

TEST_CASE("three overlapping windows on one voxel keep the max") {
    FusionAccumulator acc({1, 1, 1}, 1);
    SubVolumeSpec spec{{0, 0, 0}, {1, 1, 1}, {1, 1, 1}};
    for (double v : {0.2, 0.9, 0.4}) {
        ProbField w({1, 1, 1}, 1);
        w.values() = {v};
        fuse(acc, spec, w);
    }
    CHECK(acc.max_activation[0] == 0.9);
    CHECK(acc.coverage[0] == 3);
}

TEST_CASE("finalize_labels: strict threshold and coverage check") {
    FusionAccumulator acc({2, 1, 1}, 1);
    SubVolumeSpec spec{{0, 0, 0}, {2, 1, 1}, {1, 1, 1}};
    ProbField w({2, 1, 1}, 1);
    w.values() = {0.5, 0.51};
    fuse(acc, spec, w);
    const OneHotMask m = finalize_labels(acc, 0.5);
    CHECK(m.bits()[0] == 0);  // 0.5 is not > 0.5
    CHECK(m.bits()[1] == 1);

    const OneHotMask empty = finalize_labels(acc, 0.99);
    CHECK(std::count(empty.bits().begin(), empty.bits().end(), 1) == 0);

    FusionAccumulator uncovered({3, 1, 1}, 1);
    fuse(uncovered, spec, w);
    CHECK_THROWS(finalize_labels(uncovered, 0.5));
}

TEST_CASE("finalize_labels is monotone non-increasing in the threshold") {
    Rng rng(1);
    FusionAccumulator acc({4, 4, 4}, 2);
    SubVolumeSpec spec{{0, 0, 0}, {4, 4, 4}, {1, 1, 1}};
    ProbField w({4, 4, 4}, 2);
    for (double& v : w.values()) v = rng.uniform();
    fuse(acc, spec, w);
    std::size_t prev = SIZE_MAX;
    for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const OneHotMask m = finalize_labels(acc, t);
        const std::size_t positives = std::count(m.bits().begin(), m.bits().end(), 1);
        CHECK(positives <= prev);
        prev = positives;
    }
}

TEST_CASE("argmax_channels produces disjoint organs") {
    FusionAccumulator acc({1, 1, 1}, 2);
    SubVolumeSpec spec{{0, 0, 0}, {1, 1, 1}, {1, 1, 1}};
    ProbField w({1, 1, 1}, 2);
    w.values() = {0.7, 0.8};
    fuse(acc, spec, w);
    const OneHotMask multi = finalize_labels(acc, 0.5);
    CHECK(multi.bits()[0] == 1);
    CHECK(multi.bits()[1] == 1);  // the raw rule may multi-label
    const OneHotMask single = argmax_channels(acc, 0.5);
    CHECK(single.bits()[0] == 0);
    CHECK(single.bits()[1] == 1);
}

TEST_CASE("predict_volume equals brute-force OR over covering windows") {
    // all volumes <= 8^3, window/stride <= 4 (sampled here; exhaustive in
    // the acceptance suite)
    for (int dim : {4, 6, 7})
        for (int win : {2, 3, 4})
            for (int stride = 1; stride <= win; ++stride) {
                const Dims3 dims{dim, dim, dim};
                const Volume vol = position_volume(dims);
                const auto pred = fake_predictor(dims, 2, dim * 100 + win * 10 + stride);
                const double t = 0.6;
                const OneHotMask got =
                    predict_volume_with(pred, vol, {win, win, win}, {stride, stride, stride}, t, 2);

                OneHotMask want(dims, 2);
                for (const auto& s :
                     plan_windows(dims, {win, win, win}, {stride, stride, stride})) {
                    const ProbField probs = pred(extract_subvolume(vol, s));
                    for (int c = 0; c < 2; ++c)
                        for (int z = 0; z < win; ++z)
                            for (int y = 0; y < win; ++y)
                                for (int x = 0; x < win; ++x)
                                    if (probs.at(x, y, z, c) > t)
                                        want.set(s.origin[0] + x, s.origin[1] + y,
                                                 s.origin[2] + z, c, 1);
                }
                CHECK(got.bits() == want.bits());
            }
}

TEST_CASE("denser striding can only add positives under max-fusion") {
    NetworkConfig cfg;
    cfg.encoder_widths = {2};
    cfg.class_channels = 2;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        cfg.seed = seed;
        ParamSet params = glorot_init(cfg);
        Rng rng(seed + 100);
        Volume vol({6, 6, 6});
        for (double& v : vol.voxels()) v = rng.uniform();
        const OneHotMask coarse = predict_volume(params, cfg, vol, {4, 4, 4}, {4, 4, 4}, 0.5);
        const OneHotMask dense = predict_volume(params, cfg, vol, {4, 4, 4}, {1, 1, 1}, 0.5);
        for (std::size_t i = 0; i < coarse.bits().size(); ++i)
            if (coarse.bits()[i]) CHECK(dense.bits()[i] == 1);
    }
}

TEST_CASE("whole-volume inference is the window == dims special case") {
    NetworkConfig cfg;
    cfg.encoder_widths = {2};
    cfg.class_channels = 1;
    cfg.seed = 8;
    ParamSet params = glorot_init(cfg);
    Rng rng(9);
    Volume vol({4, 4, 4});
    for (double& v : vol.voxels()) v = rng.uniform();
    const ProbField direct = forward(params, cfg, vol, false, false, nullptr);
    const OneHotMask via_windows = predict_volume(params, cfg, vol, {4, 4, 4}, {4, 4, 4}, 0.5);
    for (std::size_t i = 0; i < direct.values().size(); ++i)
        CHECK(via_windows.bits()[i] == (direct.values()[i] > 0.5 ? 1 : 0));
}
