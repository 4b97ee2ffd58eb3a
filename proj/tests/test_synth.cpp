#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "combo/synth.hpp"

using namespace combo;

namespace {

std::int64_t foreground_count(const OneHotMask& m) {
    return std::count(m.bits().begin(), m.bits().end(), std::uint8_t(1));
}

}  // namespace

TEST_CASE("phantoms are deterministic under their seed") {
    PhantomConfig cfg = default_phantom_config();
    cfg.seed = 17;
    const auto [img_a, mask_a] = generate_phantom(cfg);
    const auto [img_b, mask_b] = generate_phantom(cfg);
    CHECK(img_a.voxels() == img_b.voxels());
    CHECK(mask_a.bits() == mask_b.bits());

    cfg.seed = 18;
    const auto [img_c, mask_c] = generate_phantom(cfg);
    CHECK(img_a.voxels() != img_c.voxels());
}

TEST_CASE("default config: total foreground stays in the sub-percent band") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        PhantomConfig cfg = default_phantom_config();
        cfg.seed = seed;
        const auto [img, mask] = generate_phantom(cfg);
        const double frac = double(foreground_count(mask)) / double(cfg.dims.count());
        CHECK(frac > 0.001);
        CHECK(frac < 0.015);
    }
}

TEST_CASE("mask voxels are the exact ellipsoid interior") {
    PhantomConfig cfg = default_phantom_config();
    cfg.organs.resize(1);
    cfg.organs[0].center = {0.5, 0.5, 0.5};
    cfg.organs[0].radii_mm = {6.0, 5.0, 4.0};
    cfg.noise_sigma = 0.0;
    const auto [img, mask] = generate_phantom(cfg);

    // centers are clamped but 0.5*64=32 is interior, so the ellipsoid is
    // exactly at (32,32,32)
    std::int64_t count = 0;
    for (int z = 0; z < 64; ++z)
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                const double a = (x - 32.0) / 6.0, b = (y - 32.0) / 5.0, c = (z - 32.0) / 4.0;
                const bool inside = a * a + b * b + c * c <= 1.0;
                CHECK(mask.at(x, y, z, 0) == (inside ? 1 : 0));
                if (inside) {
                    ++count;
                    CHECK(img.at(x, y, z) == cfg.organs[0].intensity);
                } else {
                    CHECK(img.at(x, y, z) == cfg.background_intensity);
                }
            }
    // discrete volume close to (4/3)pi*rx*ry*rz for radii >= 4 voxels
    const double analytic = 4.0 / 3.0 * 3.14159265358979323846 * 6.0 * 5.0 * 4.0;
    CHECK(double(count) > 0.9 * analytic);
    CHECK(double(count) < 1.1 * analytic);
}

TEST_CASE("presence_prob zero drops the organ, one keeps it") {
    PhantomConfig cfg = default_phantom_config();
    cfg.organs[0].presence_prob = 0.0;
    cfg.organs[1].presence_prob = 1.0;
    const auto [img, mask] = generate_phantom(cfg);
    const auto n = cfg.dims.count();
    const auto ch0 = std::count(mask.bits().begin(), mask.bits().begin() + n, std::uint8_t(1));
    const auto ch1 = std::count(mask.bits().begin() + n, mask.bits().end(), std::uint8_t(1));
    CHECK(ch0 == 0);
    CHECK(ch1 > 0);
}

TEST_CASE("presence draw does not shift the surviving organ's geometry") {
    PhantomConfig with_both = default_phantom_config();
    PhantomConfig only_second = with_both;
    only_second.organs[0].presence_prob = 0.0;
    with_both.noise_sigma = only_second.noise_sigma = 0.0;
    const auto [img_a, mask_a] = generate_phantom(with_both);
    const auto [img_b, mask_b] = generate_phantom(only_second);
    const auto n = with_both.dims.count();
    // channel 1 bits identical whether or not organ 0 materialized
    for (std::int64_t i = 0; i < n; ++i) CHECK(mask_a.bits()[n + i] == mask_b.bits()[n + i]);
}

TEST_CASE("noise perturbs the image but never the mask, values stay in [0,1]") {
    PhantomConfig cfg = default_phantom_config();
    cfg.noise_sigma = 0.05;
    const auto [img, mask] = generate_phantom(cfg);
    PhantomConfig clean = cfg;
    clean.noise_sigma = 0.0;
    const auto [img_clean, mask_clean] = generate_phantom(clean);
    CHECK(mask.bits() == mask_clean.bits());
    CHECK(img.voxels() != img_clean.voxels());
    for (double v : img.voxels()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("overlapping fixed placements are rejected") {
    PhantomConfig cfg = default_phantom_config();
    cfg.organs[1].center = cfg.organs[0].center;  // same spot, no retries for fixed centers
    CHECK_THROWS(generate_phantom(cfg));
}

TEST_CASE("oversized organs are rejected") {
    PhantomConfig cfg = default_phantom_config();
    cfg.dims = {16, 16, 16};
    cfg.organs[0].radii_mm = {10.0, 5.0, 5.0};
    CHECK_THROWS(generate_phantom(cfg));
}

TEST_CASE("training sub-volume sampler honours its constraints") {
    PhantomConfig cfg = default_phantom_config();
    cfg.seed = 5;
    const auto [img, mask] = generate_phantom(cfg);
    const std::array<int, 3> size{16, 16, 16};
    const auto samples = sample_training_subvolumes(img, mask, 3, 4, size, 11);
    REQUIRE(samples.size() == 2 * 3 + 4);

    for (const auto& s : samples) {
        CHECK(s.image.dims() == Dims3{16, 16, 16});
        CHECK(s.mask.dims() == Dims3{16, 16, 16});
        CHECK(s.mask.channels() == 2);
    }
    // first 3 intersect organ 0, next 3 organ 1, last 4 are pure background
    const auto per = Dims3{16, 16, 16}.count();
    auto channel_sum = [&](const OneHotMask& m, int c) {
        return std::count(m.bits().begin() + c * per, m.bits().begin() + (c + 1) * per,
                          std::uint8_t(1));
    };
    for (int i = 0; i < 3; ++i) CHECK(channel_sum(samples[i].mask, 0) > 0);
    for (int i = 3; i < 6; ++i) CHECK(channel_sum(samples[i].mask, 1) > 0);
    for (int i = 6; i < 10; ++i) CHECK(foreground_count(samples[i].mask) == 0);

    // deterministic under the seed
    const auto again = sample_training_subvolumes(img, mask, 3, 4, size, 11);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].image.voxels() == again[i].image.voxels());
        CHECK(samples[i].mask.bits() == again[i].mask.bits());
    }
}

TEST_CASE("sampler fails loudly when a constraint cannot be met") {
    PhantomConfig cfg = default_phantom_config();
    cfg.dims = {32, 32, 32};
    const auto [img, mask] = generate_phantom(cfg);
    // whole-volume windows always contain foreground: no pure background
    CHECK_THROWS(sample_training_subvolumes(img, mask, 0, 1, {32, 32, 32}, 1));
    CHECK_THROWS(sample_training_subvolumes(img, mask, 1, 0, {33, 32, 32}, 1));
}

TEST_CASE("phantom config round-trips through the key=value file") {
    PhantomConfig cfg = default_phantom_config();
    cfg.dims = {48, 40, 32};
    cfg.spacing = {1.0, 1.25, 2.0};
    cfg.noise_sigma = 0.03;
    cfg.seed = 123;
    cfg.organs[0].random_center = true;
    cfg.organs[0].presence_prob = 0.5;

    const std::string path = "synth_roundtrip.cfg";
    save_phantom_config(path, cfg);
    const PhantomConfig back = load_phantom_config(path);
    std::remove(path.c_str());

    CHECK(back.dims == cfg.dims);
    CHECK(back.spacing.y == cfg.spacing.y);
    CHECK(back.noise_sigma == cfg.noise_sigma);
    CHECK(back.seed == cfg.seed);
    REQUIRE(back.organs.size() == cfg.organs.size());
    for (std::size_t i = 0; i < cfg.organs.size(); ++i) {
        CHECK(back.organs[i].id == cfg.organs[i].id);
        CHECK(back.organs[i].random_center == cfg.organs[i].random_center);
        CHECK(back.organs[i].center == cfg.organs[i].center);
        CHECK(back.organs[i].radii_mm == cfg.organs[i].radii_mm);
        CHECK(back.organs[i].intensity == doctest::Approx(cfg.organs[i].intensity));
        CHECK(back.organs[i].presence_prob == doctest::Approx(cfg.organs[i].presence_prob));
    }

    // generated output matches the original config's output
    const auto [img_a, mask_a] = generate_phantom(cfg);
    const auto [img_b, mask_b] = generate_phantom(back);
    CHECK(img_a.voxels() == img_b.voxels());
    CHECK(mask_a.bits() == mask_b.bits());
}
