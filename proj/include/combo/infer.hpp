#pragma once

#include <functional>
#include <vector>

#include "combo/net.hpp"
#include "combo/volume.hpp"

namespace combo {

/// Running per-voxel maximum activation plus coverage counts for
/// sliding-window fusion.
struct FusionAccumulator {
    Dims3 dims;
    int channels = 0;
    std::vector<double> max_activation;  // channel-major, init 0
    std::vector<int> coverage;           // per voxel

    FusionAccumulator() = default;
    FusionAccumulator(Dims3 d, int c)
        : dims(d), channels(c), max_activation(d.count() * c, 0.0), coverage(d.count(), 0) {}
};

/// Window origins covering every voxel; trailing windows clamp to the
/// boundary (final origin = dim - window per axis).
std::vector<SubVolumeSpec> plan_windows(const Dims3& dims, const std::array<int, 3>& window,
                                        const std::array<int, 3>& stride);

/// Commit one window's probabilities: per-voxel max, coverage increment.
/// Idempotent and order-independent.
void fuse(FusionAccumulator& acc, const SubVolumeSpec& spec, const ProbField& window_probs);

/// Hard labels: channel set iff the fused maximum is strictly above t.
/// Throws if any voxel is uncovered.
OneHotMask finalize_labels(const FusionAccumulator& acc, double threshold);

/// Collapse multi-label voxels to their highest-activation channel
/// (ties to the lower channel index). Voxels below threshold stay background.
OneHotMask argmax_channels(const FusionAccumulator& acc, double threshold);

using WindowPredictor = std::function<ProbField(const Volume& window)>;

/// plan -> predict -> fuse -> finalize with an arbitrary per-window
/// predictor (exposed for testing against brute force).
OneHotMask predict_volume_with(const WindowPredictor& predict, const Volume& volume,
                               const std::array<int, 3>& window, const std::array<int, 3>& stride,
                               double threshold, int channels);

/// Sliding-window inference with the network in eval mode.
OneHotMask predict_volume(ParamSet& params, const NetworkConfig& cfg, const Volume& volume,
                          const std::array<int, 3>& window, const std::array<int, 3>& stride,
                          double threshold);

}  // namespace combo
