#include "combo/infer.hpp"

#include <algorithm>
#include <stdexcept>

namespace combo {

std::vector<SubVolumeSpec> plan_windows(const Dims3& dims, const std::array<int, 3>& window,
                                        const std::array<int, 3>& stride) {
    const int dim[3] = {dims.w, dims.h, dims.d};
    std::array<std::vector<int>, 3> origins;
    for (int a = 0; a < 3; ++a) {
        if (window[a] <= 0 || window[a] > dim[a])
            throw std::invalid_argument("window must be in [1, dims]");
        if (stride[a] < 1 || stride[a] > window[a])
            throw std::invalid_argument("stride must be in [1, window]");
        int o = 0;
        while (true) {
            origins[a].push_back(std::min(o, dim[a] - window[a]));
            if (o + window[a] >= dim[a]) break;
            o += stride[a];
        }
    }
    std::vector<SubVolumeSpec> out;
    for (int z : origins[2])
        for (int y : origins[1])
            for (int x : origins[0])
                out.push_back(SubVolumeSpec{{x, y, z}, window, stride});
    return out;
}

void fuse(FusionAccumulator& acc, const SubVolumeSpec& spec, const ProbField& window_probs) {
    if (window_probs.dims() != Dims3{spec.size[0], spec.size[1], spec.size[2]} ||
        window_probs.channels() != acc.channels)
        throw std::invalid_argument("fuse: window shape mismatch");
    const auto n = acc.dims.count();
    for (int c = 0; c < acc.channels; ++c)
        for (int z = 0; z < spec.size[2]; ++z)
            for (int y = 0; y < spec.size[1]; ++y)
                for (int x = 0; x < spec.size[0]; ++x) {
                    const auto idx = std::int64_t(c) * n +
                        voxel_index(acc.dims, spec.origin[0] + x, spec.origin[1] + y,
                                    spec.origin[2] + z);
                    acc.max_activation[idx] =
                        std::max(acc.max_activation[idx], window_probs.at(x, y, z, c));
                }
    for (int z = 0; z < spec.size[2]; ++z)
        for (int y = 0; y < spec.size[1]; ++y)
            for (int x = 0; x < spec.size[0]; ++x)
                acc.coverage[voxel_index(acc.dims, spec.origin[0] + x, spec.origin[1] + y,
                                         spec.origin[2] + z)]++;
}

OneHotMask finalize_labels(const FusionAccumulator& acc, double threshold) {
    for (int cov : acc.coverage)
        if (cov < 1) throw std::runtime_error("finalize_labels: incomplete sweep, uncovered voxel");
    OneHotMask m(acc.dims, acc.channels);
    for (std::size_t i = 0; i < acc.max_activation.size(); ++i)
        m.bits()[i] = acc.max_activation[i] > threshold ? 1 : 0;  // strict
    return m;
}

OneHotMask argmax_channels(const FusionAccumulator& acc, double threshold) {
    OneHotMask m(acc.dims, acc.channels);
    const auto n = acc.dims.count();
    for (std::int64_t i = 0; i < n; ++i) {
        if (acc.coverage[i] < 1)
            throw std::runtime_error("argmax_channels: incomplete sweep, uncovered voxel");
        int best = -1;
        double best_v = threshold;
        for (int c = 0; c < acc.channels; ++c) {
            const double v = acc.max_activation[std::int64_t(c) * n + i];
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        if (best >= 0) m.bits()[std::int64_t(best) * n + i] = 1;
    }
    return m;
}

OneHotMask predict_volume_with(const WindowPredictor& predict, const Volume& volume,
                               const std::array<int, 3>& window, const std::array<int, 3>& stride,
                               double threshold, int channels) {
    FusionAccumulator acc(volume.dims(), channels);
    for (const auto& spec : plan_windows(volume.dims(), window, stride)) {
        const Volume sub = extract_subvolume(volume, spec);
        fuse(acc, spec, predict(sub));
    }
    return finalize_labels(acc, threshold);
}

OneHotMask predict_volume(ParamSet& params, const NetworkConfig& cfg, const Volume& volume,
                          const std::array<int, 3>& window, const std::array<int, 3>& stride,
                          double threshold) {
    return predict_volume_with(
        [&](const Volume& sub) {
            return forward(params, cfg, sub, /*training=*/false, /*want_cache=*/false, nullptr);
        },
        volume, window, stride, threshold, cfg.class_channels);
}

}  // namespace combo
