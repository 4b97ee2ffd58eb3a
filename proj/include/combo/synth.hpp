#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "combo/volume.hpp"

namespace combo {

struct OrganSpec {
    int id = 0;                                // channel index
    std::array<double, 3> center{0.5, 0.5, 0.5};  // fractional, ignored if random_center
    bool random_center = false;
    std::array<double, 3> radii_mm{5.0, 5.0, 5.0};
    double intensity = 0.8;
    double presence_prob = 1.0;
};

struct PhantomConfig {
    Dims3 dims{64, 64, 64};
    Spacing3 spacing{1.0, 1.0, 1.0};
    std::vector<OrganSpec> organs;
    double background_intensity = 0.1;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;
};

/// Two organs with a default 64^3 geometry whose total foreground lands
/// in the sub-percent range.
PhantomConfig default_phantom_config();

/// Ellipsoidal organs at their intensity over the background, both with
/// additive Gaussian noise; the mask holds the exact ellipsoid interiors.
/// Each organ is independently dropped with probability 1-presence_prob.
/// Deterministic under cfg.seed (separate geometry and noise streams);
/// overlapping placements are re-drawn a bounded number of times.
std::pair<Volume, OneHotMask> generate_phantom(const PhantomConfig& cfg);

struct TrainingSample {
    Volume image;
    OneHotMask mask;
};

/// Per organ: n_per_organ windows intersecting that organ. Plus
/// n_background windows containing zero foreground. Throws when a
/// constraint cannot be met after bounded retries.
std::vector<TrainingSample> sample_training_subvolumes(const Volume& vol, const OneHotMask& mask,
                                                       int n_per_organ, int n_background,
                                                       const std::array<int, 3>& size,
                                                       std::uint64_t seed);

/// Plain-text key=value phantom config, '#' comments. Organs appear as
/// organ.<i>.<field> keys.
PhantomConfig load_phantom_config(const std::string& path);
void save_phantom_config(const std::string& path, const PhantomConfig& cfg);

}  // namespace combo
