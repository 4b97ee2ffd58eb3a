#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "combo/volume.hpp"

namespace combo {

/// Miniature 3D encoder-decoder: per level a 3x3x3 convolution (zero
/// padding 1) + batch norm + ReLU; max-pooling 2x2x2 between encoder
/// levels, nearest-neighbor 2x upsampling between decoder levels, no skip
/// connections, and a final 3x3x3 convolution + element-wise sigmoid head.
struct NetworkConfig {
    int input_channels = 1;
    int class_channels = 1;
    std::vector<int> encoder_widths = {8, 16, 32};
    bool batch_norm = true;
    std::uint64_t seed = 0;

    int levels() const { return int(encoder_widths.size()); }
    /// Spatial dims must be divisible by this.
    int dim_multiple() const { return 1 << (levels() - 1); }
};

/// Dense channel-major activation block (same layout as ProbField).
struct Tensor {
    Dims3 dims;
    int channels = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(Dims3 d, int c, double fill = 0.0) : dims(d), channels(c), v(d.count() * c, fill) {}
    double& at(int x, int y, int z, int c) {
        return v[std::int64_t(c) * dims.count() + voxel_index(dims, x, y, z)];
    }
    double at(int x, int y, int z, int c) const {
        return v[std::int64_t(c) * dims.count() + voxel_index(dims, x, y, z)];
    }
};

/// 3x3x3 kernel weights laid out (out, in, kz, ky, kx), plus one bias per
/// output channel.
struct ConvParams {
    int in_c = 0, out_c = 0;
    std::vector<double> w;
    std::vector<double> b;
};

struct BnParams {
    std::vector<double> gamma, beta;
    std::vector<double> run_mean, run_var;
    double momentum = 0.9;
    double eps = 1e-5;
};

/// Convolutions in declaration order: encoder level 0..k, decoder level
/// k-1..0, head. Batch norms align with every conv except the head.
struct ParamSet {
    std::vector<ConvParams> convs;
    std::vector<BnParams> bns;

    bool all_finite() const;
};

/// Per-layer gradients, shapes mirroring the trainable arrays of ParamSet
/// (batch-norm running statistics carry no gradient).
struct GradSet {
    std::vector<std::vector<double>> conv_w, conv_b, bn_gamma, bn_beta;
};

/// Stored activations and pooling argmax indices needed by backward().
struct ForwardCache {
    bool training = false;
    std::vector<Tensor> conv_inputs;          // input to each conv, in order
    std::vector<Tensor> bn_inputs;            // pre-normalization conv outputs
    std::vector<std::vector<double>> bn_mean; // per-channel batch stats used
    std::vector<std::vector<double>> bn_var;
    std::vector<std::vector<std::uint8_t>> relu_mask;
    std::vector<std::vector<std::int64_t>> pool_argmax;
    std::vector<Dims3> pool_in_dims;
    Tensor probs;                             // post-sigmoid output
};

/// Glorot-uniform kernels (bound sqrt(6/(fan_in+fan_out))), zero biases,
/// unit batch-norm scale. Deterministic under cfg.seed.
ParamSet glorot_init(const NetworkConfig& cfg);

/// Forward pass. training selects batch statistics (and updates running
/// stats); eval mode uses running stats and leaves params untouched.
/// cache is filled whenever want_cache is set, independent of mode.
ProbField forward(ParamSet& params, const NetworkConfig& cfg, const Volume& input,
                  bool training, bool want_cache, ForwardCache* cache);

/// Reverse pass: upstream is dL/dp over the flattened output field.
GradSet backward(const ParamSet& params, const NetworkConfig& cfg, const ForwardCache& cache,
                 const std::vector<double>& upstream);

struct AdadeltaState {
    double rho = 0.95;
    double eps = 1e-8;
    double lr = 1.0;
    std::vector<std::vector<double>> eg2, ex2;  // E[g^2], E[dx^2] per array
};

AdadeltaState make_adadelta_state(const ParamSet& params, double rho = 0.95, double eps = 1e-8,
                                  double lr = 1.0);

/// One ADADELTA update in place. Throws on non-finite gradients; the
/// parameters are left unchanged in that case.
void adadelta_step(AdadeltaState& state, ParamSet& params, const GradSet& grads);

// Checkpoint: "CNET" header with a config echo, then every parameter
// array (batch-norm running statistics included) as little-endian f64 in
// declaration order.
void save_checkpoint(const std::string& path, const NetworkConfig& cfg, const ParamSet& params);
std::pair<NetworkConfig, ParamSet> load_checkpoint(const std::string& path);

}  // namespace combo
