#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "combo/rng.hpp"
#include "combo/volume.hpp"

using namespace combo;

TEST_CASE("minmax_normalize maps endpoints linearly") {
    Volume v({3, 1, 1}, std::vector<double>{0, 5, 10});
    const Volume out = minmax_normalize(v, 0, 10);
    CHECK(out.voxels()[0] == doctest::Approx(0.0));
    CHECK(out.voxels()[1] == doctest::Approx(0.5));
    CHECK(out.voxels()[2] == doctest::Approx(1.0));
}

TEST_CASE("minmax_normalize rejects degenerate range") {
    Volume v({3, 1, 1}, std::vector<double>{3, 3, 3});
    CHECK_THROWS(minmax_normalize(v, 3, 3));
}

TEST_CASE("minmax_normalize clips out-of-range values") {
    Volume v({2, 1, 1}, std::vector<double>{-2, 12});
    const Volume out = minmax_normalize(v, 0, 10);
    CHECK(out.voxels()[0] == 0.0);
    CHECK(out.voxels()[1] == 1.0);
}

TEST_CASE("minmax_normalize output stays within [0,1] for any finite input") {
    Rng rng(11);
    std::vector<double> vox(64);
    for (double& x : vox) x = rng.uniform(-1e6, 1e6);
    const Volume out = minmax_normalize(Volume({4, 4, 4}, vox), -10, 10);
    for (double x : out.voxels()) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
}

TEST_CASE("one_hot_encode definition and background") {
    Volume labels({3, 1, 1}, std::vector<double>{0, 1, 2});
    const OneHotMask m = one_hot_encode(labels, 2);
    CHECK(m.at(0, 0, 0, 0) == 0);
    CHECK(m.at(1, 0, 0, 0) == 1);
    CHECK(m.at(2, 0, 0, 0) == 0);
    CHECK(m.at(0, 0, 0, 1) == 0);
    CHECK(m.at(1, 0, 0, 1) == 0);
    CHECK(m.at(2, 0, 0, 1) == 1);

    const OneHotMask zero = one_hot_encode(Volume({2, 2, 2}, 0.0), 3);
    for (auto b : zero.bits()) CHECK(b == 0);

    CHECK_THROWS(one_hot_encode(Volume({1, 1, 1}, std::vector<double>{5}), 2));
}

TEST_CASE("one_hot round-trip and channel-sum invariant") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Volume labels({4, 3, 2});
        for (double& v : labels.voxels()) v = double(rng.uniform_int(4));  // 0..3
        const OneHotMask m = one_hot_encode(labels, 3);
        const Volume back = one_hot_decode(m);
        CHECK(back.voxels() == labels.voxels());
        for (int z = 0; z < 2; ++z)
            for (int y = 0; y < 3; ++y)
                for (int x = 0; x < 4; ++x) {
                    int sum = 0;
                    for (int c = 0; c < 3; ++c) sum += m.at(x, y, z, c);
                    CHECK(sum <= 1);
                }
    }
}

TEST_CASE("flatten order: channel-major over row-major voxels") {
    ProbField p({1, 1, 1}, 2);
    p.at(0, 0, 0, 0) = 0.25;
    p.at(0, 0, 0, 1) = 0.75;
    const auto f = flatten(p);
    REQUIRE(f.size() == 2);
    CHECK(f[0] == 0.25);
    CHECK(f[1] == 0.75);
}

TEST_CASE("flatten matches direct 4D indexing for random elements") {
    Rng rng(3);
    Volume labels({3, 4, 2});
    for (double& v : labels.voxels()) v = double(rng.uniform_int(3));
    const OneHotMask m = one_hot_encode(labels, 2);
    const auto f = flatten(m);
    CHECK(f.size() == std::size_t(3 * 4 * 2 * 2));
    for (int trial = 0; trial < 50; ++trial) {
        const int x = int(rng.uniform_int(3)), y = int(rng.uniform_int(4)),
                  z = int(rng.uniform_int(2)), c = int(rng.uniform_int(2));
        const std::size_t k = std::size_t(c) * (3 * 4 * 2) + voxel_index({3, 4, 2}, x, y, z);
        CHECK(f[k] == double(m.at(x, y, z, c)));
    }
}

TEST_CASE("extract_subvolume corner window and bounds") {
    Volume v({4, 4, 4});
    for (std::size_t i = 0; i < v.voxels().size(); ++i) v.voxels()[i] = double(i);
    SubVolumeSpec spec{{0, 0, 0}, {2, 2, 2}, {1, 1, 1}};
    const Volume sub = extract_subvolume(v, spec);
    CHECK(sub.dims() == Dims3{2, 2, 2});
    CHECK(sub.at(1, 1, 1) == v.at(1, 1, 1));

    SubVolumeSpec oob{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}};
    CHECK_THROWS(extract_subvolume(v, oob));
}

TEST_CASE("extract then write-back reproduces the original region") {
    Rng rng(5);
    Volume v({5, 5, 5});
    for (double& x : v.voxels()) x = rng.uniform();
    const auto orig = v.voxels();
    SubVolumeSpec spec{{1, 2, 0}, {3, 2, 4}, {1, 1, 1}};
    const Volume sub = extract_subvolume(v, spec);
    insert_subvolume(v, spec, sub);
    CHECK(v.voxels() == orig);
}

TEST_CASE("CVOL round trip for volume, mask and prob field") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "combo_cvol_test";
    fs::create_directories(dir);

    Rng rng(9);
    Volume v({3, 2, 4});
    for (double& x : v.voxels()) x = rng.uniform();
    write_cvol((dir / "v.cvol").string(), v);
    const Volume v2 = read_cvol_volume((dir / "v.cvol").string());
    CHECK(v2.dims() == v.dims());
    for (std::size_t i = 0; i < v.voxels().size(); ++i)
        CHECK(v2.voxels()[i] == doctest::Approx(v.voxels()[i]).epsilon(1e-6));

    Volume labels({3, 2, 4});
    for (double& x : labels.voxels()) x = double(rng.uniform_int(3));
    const OneHotMask m = one_hot_encode(labels, 2);
    write_cvol((dir / "m.cvol").string(), m);
    const OneHotMask m2 = read_cvol_mask((dir / "m.cvol").string());
    CHECK(m2.bits() == m.bits());

    // header formula: 32 + W*H*D*C*4 bytes for f32 payloads
    CHECK(fs::file_size(dir / "v.cvol") == 32 + 3 * 2 * 4 * 4);

    CHECK_THROWS(read_cvol_volume((dir / "missing.cvol").string()));
    fs::remove_all(dir);
}
