#include "combo/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "combo/rng.hpp"

namespace combo {

namespace {

constexpr int kKernel = 3;  // 3x3x3, zero padding 1

bool finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// out(x,y,z,oc) = b[oc] + sum_ic sum_off w * in(x+ox, y+oy, z+oz)
Tensor conv_forward(const Tensor& in, const ConvParams& cp) {
    const Dims3 d = in.dims;
    Tensor out(d, cp.out_c);
    const std::int64_t plane = d.count();
    for (int oc = 0; oc < cp.out_c; ++oc) {
        double* o = out.v.data() + std::int64_t(oc) * plane;
        std::fill(o, o + plane, cp.b[oc]);
        for (int ic = 0; ic < cp.in_c; ++ic) {
            const double* src = in.v.data() + std::int64_t(ic) * plane;
            for (int kz = 0; kz < kKernel; ++kz)
                for (int ky = 0; ky < kKernel; ++ky)
                    for (int kx = 0; kx < kKernel; ++kx) {
                        const int ox = kx - 1, oy = ky - 1, oz = kz - 1;
                        const double wv =
                            cp.w[((std::int64_t(oc) * cp.in_c + ic) * kKernel * kKernel * kKernel) +
                                 (kz * kKernel + ky) * kKernel + kx];
                        if (wv == 0.0) continue;
                        const int z0 = std::max(0, -oz), z1 = std::min(d.d, d.d - oz);
                        const int y0 = std::max(0, -oy), y1 = std::min(d.h, d.h - oy);
                        const int x0 = std::max(0, -ox), x1 = std::min(d.w, d.w - ox);
                        for (int z = z0; z < z1; ++z)
                            for (int y = y0; y < y1; ++y) {
                                double* orow = o + voxel_index(d, 0, y, z);
                                const double* irow = src + voxel_index(d, ox, y + oy, z + oz);
                                for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                            }
                    }
        }
    }
    return out;
}

void conv_backward(const Tensor& in, const ConvParams& cp, const Tensor& gout, Tensor& gin,
                   std::vector<double>& gw, std::vector<double>& gb) {
    const Dims3 d = in.dims;
    const std::int64_t plane = d.count();
    gin = Tensor(d, cp.in_c);
    gw.assign(cp.w.size(), 0.0);
    gb.assign(cp.b.size(), 0.0);
    for (int oc = 0; oc < cp.out_c; ++oc) {
        const double* go = gout.v.data() + std::int64_t(oc) * plane;
        for (std::int64_t i = 0; i < plane; ++i) gb[oc] += go[i];
        for (int ic = 0; ic < cp.in_c; ++ic) {
            const double* src = in.v.data() + std::int64_t(ic) * plane;
            double* gi = gin.v.data() + std::int64_t(ic) * plane;
            for (int kz = 0; kz < kKernel; ++kz)
                for (int ky = 0; ky < kKernel; ++ky)
                    for (int kx = 0; kx < kKernel; ++kx) {
                        const int ox = kx - 1, oy = ky - 1, oz = kz - 1;
                        const std::int64_t widx =
                            ((std::int64_t(oc) * cp.in_c + ic) * kKernel * kKernel * kKernel) +
                            (kz * kKernel + ky) * kKernel + kx;
                        const double wv = cp.w[widx];
                        double acc = 0.0;
                        const int z0 = std::max(0, -oz), z1 = std::min(d.d, d.d - oz);
                        const int y0 = std::max(0, -oy), y1 = std::min(d.h, d.h - oy);
                        const int x0 = std::max(0, -ox), x1 = std::min(d.w, d.w - ox);
                        for (int z = z0; z < z1; ++z)
                            for (int y = y0; y < y1; ++y) {
                                const double* grow = go + voxel_index(d, 0, y, z);
                                const double* irow = src + voxel_index(d, ox, y + oy, z + oz);
                                double* girow = gi + voxel_index(d, ox, y + oy, z + oz);
                                for (int x = x0; x < x1; ++x) {
                                    acc += grow[x] * irow[x];
                                    girow[x] += wv * grow[x];
                                }
                            }
                        gw[widx] = acc;
                    }
        }
    }
}

struct BnCacheEntry {
    std::vector<double> mean, var;  // stats actually used by this pass
};

Tensor bn_forward(const Tensor& in, BnParams& bn, bool training, std::vector<double>& used_mean,
                  std::vector<double>& used_var) {
    const int C = in.channels;
    const std::int64_t n = in.dims.count();
    used_mean.resize(C);
    used_var.resize(C);
    Tensor out(in.dims, C);
    for (int c = 0; c < C; ++c) {
        const double* x = in.v.data() + std::int64_t(c) * n;
        double mean, var;
        if (training) {
            mean = 0.0;
            for (std::int64_t i = 0; i < n; ++i) mean += x[i];
            mean /= double(n);
            var = 0.0;
            for (std::int64_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
            var /= double(n);
            bn.run_mean[c] = bn.momentum * bn.run_mean[c] + (1.0 - bn.momentum) * mean;
            bn.run_var[c] = bn.momentum * bn.run_var[c] + (1.0 - bn.momentum) * var;
        } else {
            mean = bn.run_mean[c];
            var = bn.run_var[c];
        }
        used_mean[c] = mean;
        used_var[c] = var;
        const double inv_std = 1.0 / std::sqrt(var + bn.eps);
        double* y = out.v.data() + std::int64_t(c) * n;
        for (std::int64_t i = 0; i < n; ++i)
            y[i] = bn.gamma[c] * (x[i] - mean) * inv_std + bn.beta[c];
    }
    return out;
}

void bn_backward(const Tensor& in, const BnParams& bn, const std::vector<double>& used_mean,
                 const std::vector<double>& used_var, bool training, const Tensor& gout,
                 Tensor& gin, std::vector<double>& ggamma, std::vector<double>& gbeta) {
    const int C = in.channels;
    const std::int64_t n = in.dims.count();
    gin = Tensor(in.dims, C);
    ggamma.assign(C, 0.0);
    gbeta.assign(C, 0.0);
    for (int c = 0; c < C; ++c) {
        const double* x = in.v.data() + std::int64_t(c) * n;
        const double* gy = gout.v.data() + std::int64_t(c) * n;
        double* gx = gin.v.data() + std::int64_t(c) * n;
        const double mean = used_mean[c], var = used_var[c];
        const double inv_std = 1.0 / std::sqrt(var + bn.eps);
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double xhat = (x[i] - mean) * inv_std;
            sum_gy += gy[i];
            sum_gy_xhat += gy[i] * xhat;
        }
        ggamma[c] = sum_gy_xhat;
        gbeta[c] = sum_gy;
        if (training) {
            // batch statistics depend on x
            const double inv_n = 1.0 / double(n);
            for (std::int64_t i = 0; i < n; ++i) {
                const double xhat = (x[i] - mean) * inv_std;
                gx[i] = bn.gamma[c] * inv_std *
                        (gy[i] - inv_n * sum_gy - xhat * inv_n * sum_gy_xhat);
            }
        } else {
            const double k = bn.gamma[c] * inv_std;
            for (std::int64_t i = 0; i < n; ++i) gx[i] = k * gy[i];
        }
    }
}

Tensor maxpool_forward(const Tensor& in, std::vector<std::int64_t>& argmax) {
    const Dims3 d = in.dims;
    if (d.w % 2 || d.h % 2 || d.d % 2)
        throw std::invalid_argument("max-pool needs even spatial dims");
    const Dims3 od{d.w / 2, d.h / 2, d.d / 2};
    Tensor out(od, in.channels);
    argmax.assign(out.v.size(), 0);
    for (int c = 0; c < in.channels; ++c)
        for (int z = 0; z < od.d; ++z)
            for (int y = 0; y < od.h; ++y)
                for (int x = 0; x < od.w; ++x) {
                    double best = -1e300;
                    std::int64_t best_idx = 0;
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const std::int64_t idx = std::int64_t(c) * d.count() +
                                    voxel_index(d, 2 * x + dx, 2 * y + dy, 2 * z + dz);
                                if (in.v[idx] > best) {
                                    best = in.v[idx];
                                    best_idx = idx;
                                }
                            }
                    const std::int64_t oidx =
                        std::int64_t(c) * od.count() + voxel_index(od, x, y, z);
                    out.v[oidx] = best;
                    argmax[oidx] = best_idx;
                }
    return out;
}

Tensor maxpool_backward(const Dims3& in_dims, int channels,
                        const std::vector<std::int64_t>& argmax, const Tensor& gout) {
    Tensor gin(in_dims, channels);
    for (std::size_t i = 0; i < gout.v.size(); ++i) gin.v[argmax[i]] += gout.v[i];
    return gin;
}

Tensor upsample_forward(const Tensor& in) {
    const Dims3 d = in.dims;
    const Dims3 od{d.w * 2, d.h * 2, d.d * 2};
    Tensor out(od, in.channels);
    for (int c = 0; c < in.channels; ++c)
        for (int z = 0; z < od.d; ++z)
            for (int y = 0; y < od.h; ++y)
                for (int x = 0; x < od.w; ++x)
                    out.at(x, y, z, c) = in.at(x / 2, y / 2, z / 2, c);
    return out;
}

Tensor upsample_backward(const Tensor& gout) {
    const Dims3 od = gout.dims;
    const Dims3 d{od.w / 2, od.h / 2, od.d / 2};
    Tensor gin(d, gout.channels);
    for (int c = 0; c < gout.channels; ++c)
        for (int z = 0; z < od.d; ++z)
            for (int y = 0; y < od.h; ++y)
                for (int x = 0; x < od.w; ++x)
                    gin.at(x / 2, y / 2, z / 2, c) += gout.at(x, y, z, c);
    return gin;
}

void relu_inplace(Tensor& t, std::vector<std::uint8_t>& mask) {
    mask.resize(t.v.size());
    for (std::size_t i = 0; i < t.v.size(); ++i) {
        mask[i] = t.v[i] > 0.0;
        if (!mask[i]) t.v[i] = 0.0;
    }
}

}  // namespace

bool ParamSet::all_finite() const {
    for (const auto& c : convs)
        if (!finite(c.w) || !finite(c.b)) return false;
    for (const auto& b : bns)
        if (!finite(b.gamma) || !finite(b.beta) || !finite(b.run_mean) || !finite(b.run_var))
            return false;
    return true;
}

namespace {

// Conv in/out channel plan for the fixed encoder-decoder shape.
std::vector<std::pair<int, int>> conv_plan(const NetworkConfig& cfg) {
    const auto& w = cfg.encoder_widths;
    const int k = cfg.levels() - 1;
    std::vector<std::pair<int, int>> plan;
    for (int i = 0; i <= k; ++i) plan.emplace_back(i == 0 ? cfg.input_channels : w[i - 1], w[i]);
    for (int j = k - 1; j >= 0; --j) plan.emplace_back(w[j + 1], w[j]);
    plan.emplace_back(w[0], cfg.class_channels);
    return plan;
}

}  // namespace

ParamSet glorot_init(const NetworkConfig& cfg) {
    if (cfg.encoder_widths.empty()) throw std::invalid_argument("encoder_widths must be nonempty");
    Rng rng(cfg.seed);
    ParamSet ps;
    const auto plan = conv_plan(cfg);
    const int k27 = kKernel * kKernel * kKernel;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        ConvParams cp;
        cp.in_c = plan[i].first;
        cp.out_c = plan[i].second;
        cp.w.resize(std::size_t(cp.in_c) * cp.out_c * k27);
        cp.b.assign(cp.out_c, 0.0);
        const double fan_in = double(cp.in_c) * k27;
        const double fan_out = double(cp.out_c) * k27;
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& x : cp.w) x = rng.uniform(-bound, bound);
        ps.convs.push_back(std::move(cp));
        if (cfg.batch_norm && i + 1 < plan.size()) {  // no BN on the head
            BnParams bn;
            bn.gamma.assign(cp.out_c, 1.0);
            bn.beta.assign(cp.out_c, 0.0);
            bn.run_mean.assign(cp.out_c, 0.0);
            bn.run_var.assign(cp.out_c, 1.0);
            ps.bns.push_back(std::move(bn));
        }
    }
    return ps;
}

ProbField forward(ParamSet& params, const NetworkConfig& cfg, const Volume& input, bool training,
                  bool want_cache, ForwardCache* cache) {
    if (cfg.input_channels != 1)
        throw std::invalid_argument("Volume input implies input_channels == 1");
    const Dims3 d = input.dims();
    const int mult = cfg.dim_multiple();
    if (d.w % mult || d.h % mult || d.d % mult)
        throw std::invalid_argument("input dims not divisible by 2^(levels-1)");

    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc = ForwardCache{};
    fc.training = training;

    Tensor t(d, 1);
    t.v = input.voxels();

    const int k = cfg.levels() - 1;
    int conv_i = 0;
    auto block = [&](Tensor&& x) {
        if (want_cache) fc.conv_inputs.push_back(x);
        Tensor y = conv_forward(x, params.convs[conv_i]);
        if (cfg.batch_norm) {
            if (want_cache) fc.bn_inputs.push_back(y);
            std::vector<double> m, v;
            Tensor z = bn_forward(y, params.bns[conv_i], training, m, v);
            if (want_cache) {
                fc.bn_mean.push_back(std::move(m));
                fc.bn_var.push_back(std::move(v));
            }
            y = std::move(z);
        }
        std::vector<std::uint8_t> mask;
        relu_inplace(y, mask);
        if (want_cache) fc.relu_mask.push_back(std::move(mask));
        ++conv_i;
        return y;
    };

    for (int i = 0; i <= k; ++i) {
        if (i > 0) {
            std::vector<std::int64_t> argmax;
            const Dims3 before = t.dims;
            t = maxpool_forward(t, argmax);
            if (want_cache) {
                fc.pool_argmax.push_back(std::move(argmax));
                fc.pool_in_dims.push_back(before);
            }
        }
        t = block(std::move(t));
    }
    for (int j = k - 1; j >= 0; --j) {
        t = upsample_forward(t);
        t = block(std::move(t));
    }
    // head conv + sigmoid
    if (want_cache) fc.conv_inputs.push_back(t);
    Tensor z = conv_forward(t, params.convs[conv_i]);
    ProbField out(z.dims, cfg.class_channels);
    for (std::size_t i = 0; i < z.v.size(); ++i) out.values()[i] = 1.0 / (1.0 + std::exp(-z.v[i]));
    if (want_cache) {
        fc.probs = Tensor(z.dims, cfg.class_channels);
        fc.probs.v = out.values();
    }
    return out;
}

GradSet backward(const ParamSet& params, const NetworkConfig& cfg, const ForwardCache& cache,
                 const std::vector<double>& upstream) {
    if (cache.conv_inputs.empty()) throw std::invalid_argument("backward: missing forward cache");
    if (upstream.size() != cache.probs.v.size())
        throw std::invalid_argument("backward: upstream gradient size mismatch");

    const int n_convs = int(params.convs.size());
    GradSet g;
    g.conv_w.resize(n_convs);
    g.conv_b.resize(n_convs);
    g.bn_gamma.resize(params.bns.size());
    g.bn_beta.resize(params.bns.size());

    // sigmoid head: dz = dp * p * (1-p)
    Tensor grad(cache.probs.dims, cache.probs.channels);
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        const double p = cache.probs.v[i];
        grad.v[i] = upstream[i] * p * (1.0 - p);
    }

    const int k = cfg.levels() - 1;
    int conv_i = n_convs - 1;

    {  // head conv
        Tensor gin;
        conv_backward(cache.conv_inputs[conv_i], params.convs[conv_i], grad, gin,
                      g.conv_w[conv_i], g.conv_b[conv_i]);
        grad = std::move(gin);
        --conv_i;
    }

    auto block_backward = [&](Tensor& gr) {
        for (std::size_t i = 0; i < gr.v.size(); ++i)
            if (!cache.relu_mask[conv_i][i]) gr.v[i] = 0.0;
        if (cfg.batch_norm) {
            Tensor gin;
            bn_backward(cache.bn_inputs[conv_i], params.bns[conv_i], cache.bn_mean[conv_i],
                        cache.bn_var[conv_i], cache.training, gr, gin, g.bn_gamma[conv_i],
                        g.bn_beta[conv_i]);
            gr = std::move(gin);
        }
        Tensor gin;
        conv_backward(cache.conv_inputs[conv_i], params.convs[conv_i], gr, gin, g.conv_w[conv_i],
                      g.conv_b[conv_i]);
        gr = std::move(gin);
        --conv_i;
    };

    // decoder blocks (reverse)
    for (int j = 0; j < k; ++j) {
        block_backward(grad);
        grad = upsample_backward(grad);
    }
    // encoder blocks (reverse)
    for (int i = k; i >= 0; --i) {
        block_backward(grad);
        if (i > 0) {
            grad = maxpool_backward(cache.pool_in_dims[i - 1], grad.channels,
                                    cache.pool_argmax[i - 1], grad);
        }
    }
    return g;
}

namespace {

std::vector<std::vector<double>*> trainable_arrays(ParamSet& ps) {
    std::vector<std::vector<double>*> out;
    for (auto& c : ps.convs) {
        out.push_back(&c.w);
        out.push_back(&c.b);
    }
    for (auto& b : ps.bns) {
        out.push_back(&b.gamma);
        out.push_back(&b.beta);
    }
    return out;
}

std::vector<const std::vector<double>*> grad_arrays(const GradSet& g) {
    std::vector<const std::vector<double>*> out;
    for (std::size_t i = 0; i < g.conv_w.size(); ++i) {
        out.push_back(&g.conv_w[i]);
        out.push_back(&g.conv_b[i]);
    }
    for (std::size_t i = 0; i < g.bn_gamma.size(); ++i) {
        out.push_back(&g.bn_gamma[i]);
        out.push_back(&g.bn_beta[i]);
    }
    return out;
}

}  // namespace

AdadeltaState make_adadelta_state(const ParamSet& params, double rho, double eps, double lr) {
    AdadeltaState st;
    st.rho = rho;
    st.eps = eps;
    st.lr = lr;
    auto arrays = trainable_arrays(const_cast<ParamSet&>(params));
    for (auto* a : arrays) {
        st.eg2.emplace_back(a->size(), 0.0);
        st.ex2.emplace_back(a->size(), 0.0);
    }
    return st;
}

void adadelta_step(AdadeltaState& state, ParamSet& params, const GradSet& grads) {
    auto p_arrays = trainable_arrays(params);
    auto g_arrays = grad_arrays(grads);
    if (p_arrays.size() != g_arrays.size() || p_arrays.size() != state.eg2.size())
        throw std::invalid_argument("adadelta_step: shape mismatch");
    for (const auto* g : g_arrays)
        if (!finite(*g)) throw std::runtime_error("adadelta_step: non-finite gradient, step rejected");

    for (std::size_t a = 0; a < p_arrays.size(); ++a) {
        auto& p = *p_arrays[a];
        const auto& g = *g_arrays[a];
        auto& eg2 = state.eg2[a];
        auto& ex2 = state.ex2[a];
        for (std::size_t i = 0; i < p.size(); ++i) {
            eg2[i] = state.rho * eg2[i] + (1.0 - state.rho) * g[i] * g[i];
            const double dx =
                -std::sqrt(ex2[i] + state.eps) / std::sqrt(eg2[i] + state.eps) * g[i];
            ex2[i] = state.rho * ex2[i] + (1.0 - state.rho) * dx * dx;
            p[i] += state.lr * dx;
        }
    }
}

namespace {

constexpr std::uint32_t kCnetVersion = 1;

template <typename T>
void wr(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T rd(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void wr_vec(std::ofstream& f, const std::vector<double>& v) {
    f.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

void rd_vec(std::ifstream& f, std::vector<double>& v) {
    f.read(reinterpret_cast<char*>(v.data()), v.size() * sizeof(double));
}

}  // namespace

void save_checkpoint(const std::string& path, const NetworkConfig& cfg, const ParamSet& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write("CNET", 4);
    wr(f, kCnetVersion);
    wr(f, std::uint32_t(cfg.input_channels));
    wr(f, std::uint32_t(cfg.class_channels));
    wr(f, std::uint32_t(cfg.encoder_widths.size()));
    for (int w : cfg.encoder_widths) wr(f, std::uint32_t(w));
    wr(f, std::uint32_t(cfg.batch_norm ? 1 : 0));
    wr(f, std::uint64_t(cfg.seed));
    for (const auto& c : params.convs) {
        wr_vec(f, c.w);
        wr_vec(f, c.b);
    }
    for (const auto& b : params.bns) {
        wr_vec(f, b.gamma);
        wr_vec(f, b.beta);
        wr_vec(f, b.run_mean);
        wr_vec(f, b.run_var);
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

std::pair<NetworkConfig, ParamSet> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "CNET", 4) != 0)
        throw std::runtime_error("not a CNET checkpoint: " + path);
    if (rd<std::uint32_t>(f) != kCnetVersion)
        throw std::runtime_error("unsupported checkpoint version: " + path);
    NetworkConfig cfg;
    cfg.input_channels = int(rd<std::uint32_t>(f));
    cfg.class_channels = int(rd<std::uint32_t>(f));
    const auto n_widths = rd<std::uint32_t>(f);
    cfg.encoder_widths.clear();
    for (std::uint32_t i = 0; i < n_widths; ++i) cfg.encoder_widths.push_back(int(rd<std::uint32_t>(f)));
    cfg.batch_norm = rd<std::uint32_t>(f) != 0;
    cfg.seed = rd<std::uint64_t>(f);

    ParamSet ps = glorot_init(cfg);  // sizes only; payload overwritten below
    for (auto& c : ps.convs) {
        rd_vec(f, c.w);
        rd_vec(f, c.b);
    }
    for (auto& b : ps.bns) {
        rd_vec(f, b.gamma);
        rd_vec(f, b.beta);
        rd_vec(f, b.run_mean);
        rd_vec(f, b.run_var);
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return {cfg, std::move(ps)};
}

}  // namespace combo
