#include "combo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "combo/rng.hpp"

namespace combo {

namespace {

constexpr std::uint64_t kGeometryStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr int kPlacementRetries = 64;

struct Ellipsoid {
    double cx, cy, cz;  // voxel coords
    double rx, ry, rz;  // voxel radii
    bool inside(int x, int y, int z) const {
        const double a = (x - cx) / rx, b = (y - cy) / ry, c = (z - cz) / rz;
        return a * a + b * b + c * c <= 1.0;
    }
};

}  // namespace

PhantomConfig default_phantom_config() {
    PhantomConfig cfg;
    cfg.dims = {64, 64, 64};
    // two bright blobs, total foreground well under 1.5% of 64^3
    OrganSpec a;
    a.id = 0;
    a.center = {0.3, 0.35, 0.3};
    a.radii_mm = {6.0, 5.0, 6.0};
    a.intensity = 0.85;
    OrganSpec b;
    b.id = 1;
    b.center = {0.7, 0.65, 0.7};
    b.radii_mm = {5.0, 6.0, 5.0};
    b.intensity = 0.7;
    cfg.organs = {a, b};
    return cfg;
}

std::pair<Volume, OneHotMask> generate_phantom(const PhantomConfig& cfg) {
    if (cfg.organs.empty()) throw std::invalid_argument("phantom needs at least one organ spec");
    int channels = 0;
    for (const auto& o : cfg.organs) channels = std::max(channels, o.id + 1);

    Rng geom(cfg.seed, kGeometryStream);
    Rng noise(cfg.seed, kNoiseStream);

    Volume image(cfg.dims, cfg.background_intensity, cfg.spacing);
    OneHotMask mask(cfg.dims, channels);
    std::vector<Ellipsoid> placed;
    std::vector<int> placed_channel;

    for (const auto& organ : cfg.organs) {
        const double rx = organ.radii_mm[0] / cfg.spacing.x;
        const double ry = organ.radii_mm[1] / cfg.spacing.y;
        const double rz = organ.radii_mm[2] / cfg.spacing.z;
        if (rx <= 0 || ry <= 0 || rz <= 0) throw std::invalid_argument("organ radii must be positive");
        if (2 * rx >= cfg.dims.w || 2 * ry >= cfg.dims.h || 2 * rz >= cfg.dims.d)
            throw std::invalid_argument("organ does not fit in volume");

        const bool present = geom.uniform() < organ.presence_prob;
        // The presence draw is consumed either way so organ streams stay aligned.
        Ellipsoid e{0, 0, 0, rx, ry, rz};
        bool ok = false;
        for (int attempt = 0; attempt < kPlacementRetries && !ok; ++attempt) {
            double fx, fy, fz;
            if (organ.random_center) {
                fx = geom.uniform();
                fy = geom.uniform();
                fz = geom.uniform();
            } else {
                fx = organ.center[0];
                fy = organ.center[1];
                fz = organ.center[2];
            }
            e.cx = std::clamp(fx * cfg.dims.w, rx + 1.0, cfg.dims.w - rx - 1.0);
            e.cy = std::clamp(fy * cfg.dims.h, ry + 1.0, cfg.dims.h - ry - 1.0);
            e.cz = std::clamp(fz * cfg.dims.d, rz + 1.0, cfg.dims.d - rz - 1.0);
            ok = true;
            for (const auto& other : placed) {
                // conservative bounding-sphere rejection
                const double dx = e.cx - other.cx, dy = e.cy - other.cy, dz = e.cz - other.cz;
                const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
                const double ra = std::max({e.rx, e.ry, e.rz});
                const double rb = std::max({other.rx, other.ry, other.rz});
                if (dist <= ra + rb) {
                    ok = false;
                    break;
                }
            }
            if (!organ.random_center) break;  // fixed centers are not re-drawn
        }
        if (!ok) throw std::runtime_error("organ placement failed after bounded retries");
        if (!present) continue;

        placed.push_back(e);
        placed_channel.push_back(organ.id);
        const int x0 = std::max(0, int(std::floor(e.cx - rx))), x1 = std::min(cfg.dims.w - 1, int(std::ceil(e.cx + rx)));
        const int y0 = std::max(0, int(std::floor(e.cy - ry))), y1 = std::min(cfg.dims.h - 1, int(std::ceil(e.cy + ry)));
        const int z0 = std::max(0, int(std::floor(e.cz - rz))), z1 = std::min(cfg.dims.d - 1, int(std::ceil(e.cz + rz)));
        for (int z = z0; z <= z1; ++z)
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    if (e.inside(x, y, z)) {
                        image.at(x, y, z) = organ.intensity;
                        mask.set(x, y, z, organ.id, 1);
                    }
    }

    if (cfg.noise_sigma > 0.0)
        for (double& v : image.voxels())
            v = std::clamp(v + cfg.noise_sigma * noise.normal(), 0.0, 1.0);
    return {std::move(image), std::move(mask)};
}

std::vector<TrainingSample> sample_training_subvolumes(const Volume& vol, const OneHotMask& mask,
                                                       int n_per_organ, int n_background,
                                                       const std::array<int, 3>& size,
                                                       std::uint64_t seed) {
    const Dims3 d = vol.dims();
    if (size[0] > d.w || size[1] > d.h || size[2] > d.d)
        throw std::invalid_argument("sub-volume size exceeds volume dims");
    Rng rng(seed, 3);
    const auto n = d.count();

    auto random_spec = [&]() {
        SubVolumeSpec s;
        s.size = size;
        s.origin = {int(rng.uniform_int(d.w - size[0] + 1)),
                    int(rng.uniform_int(d.h - size[1] + 1)),
                    int(rng.uniform_int(d.d - size[2] + 1))};
        return s;
    };
    auto organ_voxels_in = [&](const SubVolumeSpec& s, int c) {
        std::int64_t count = 0;
        for (int z = 0; z < s.size[2]; ++z)
            for (int y = 0; y < s.size[1]; ++y)
                for (int x = 0; x < s.size[0]; ++x)
                    count += mask.at(s.origin[0] + x, s.origin[1] + y, s.origin[2] + z, c);
        return count;
    };
    auto any_foreground = [&](const SubVolumeSpec& s) {
        for (int c = 0; c < mask.channels(); ++c)
            if (organ_voxels_in(s, c) > 0) return true;
        return false;
    };

    std::vector<TrainingSample> out;
    const int max_attempts = 4096;

    for (int c = 0; c < mask.channels(); ++c) {
        bool organ_exists = false;
        for (std::int64_t i = 0; i < n; ++i)
            if (mask.bits()[std::int64_t(c) * n + i]) {
                organ_exists = true;
                break;
            }
        if (!organ_exists) continue;  // missing organ: nothing to target
        for (int s = 0; s < n_per_organ; ++s) {
            SubVolumeSpec spec;
            bool found = false;
            for (int attempt = 0; attempt < max_attempts; ++attempt) {
                spec = random_spec();
                if (organ_voxels_in(spec, c) > 0) {
                    found = true;
                    break;
                }
            }
            if (!found)
                throw std::runtime_error("could not sample an organ-intersecting sub-volume");
            out.push_back({extract_subvolume(vol, spec), extract_subvolume(mask, spec)});
        }
    }
    for (int s = 0; s < n_background; ++s) {
        SubVolumeSpec spec;
        bool found = false;
        for (int attempt = 0; attempt < max_attempts; ++attempt) {
            spec = random_spec();
            if (!any_foreground(spec)) {
                found = true;
                break;
            }
        }
        if (!found) throw std::runtime_error("no pure-background sub-volume exists at this size");
        out.push_back({extract_subvolume(vol, spec), extract_subvolume(mask, spec)});
    }
    return out;
}

namespace {

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    for (std::string line; std::getline(f, line);) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

}  // namespace

PhantomConfig load_phantom_config(const std::string& path) {
    const auto kv = parse_kv_file(path);
    PhantomConfig cfg = default_phantom_config();
    auto get = [&](const std::string& key, auto def) {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        if constexpr (std::is_same_v<decltype(def), int>) return std::stoi(it->second);
        else if constexpr (std::is_same_v<decltype(def), std::uint64_t>)
            return std::uint64_t(std::stoull(it->second));
        else return decltype(def)(std::stod(it->second));
    };
    cfg.dims = {get("dims.w", cfg.dims.w), get("dims.h", cfg.dims.h), get("dims.d", cfg.dims.d)};
    cfg.spacing = {get("spacing.x", cfg.spacing.x), get("spacing.y", cfg.spacing.y),
                   get("spacing.z", cfg.spacing.z)};
    cfg.background_intensity = get("background_intensity", cfg.background_intensity);
    cfg.noise_sigma = get("noise_sigma", cfg.noise_sigma);
    cfg.seed = get("seed", cfg.seed);
    const int n_organs = get("organs", int(cfg.organs.size()));
    if (kv.count("organs")) {
        cfg.organs.clear();
        for (int i = 0; i < n_organs; ++i) {
            const std::string pre = "organ." + std::to_string(i) + ".";
            OrganSpec o;
            o.id = get(pre + "id", i);
            o.random_center = get(pre + "random_center", 0) != 0;
            o.center = {get(pre + "center.x", 0.5), get(pre + "center.y", 0.5),
                        get(pre + "center.z", 0.5)};
            o.radii_mm = {get(pre + "radius.x", 5.0), get(pre + "radius.y", 5.0),
                          get(pre + "radius.z", 5.0)};
            o.intensity = get(pre + "intensity", 0.8);
            o.presence_prob = get(pre + "presence_prob", 1.0);
            cfg.organs.push_back(o);
        }
    }
    return cfg;
}

void save_phantom_config(const std::string& path, const PhantomConfig& cfg) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << "dims.w = " << cfg.dims.w << "\ndims.h = " << cfg.dims.h << "\ndims.d = " << cfg.dims.d
      << "\n";
    f << "spacing.x = " << cfg.spacing.x << "\nspacing.y = " << cfg.spacing.y
      << "\nspacing.z = " << cfg.spacing.z << "\n";
    f << "background_intensity = " << cfg.background_intensity << "\n";
    f << "noise_sigma = " << cfg.noise_sigma << "\n";
    f << "seed = " << cfg.seed << "\n";
    f << "organs = " << cfg.organs.size() << "\n";
    for (std::size_t i = 0; i < cfg.organs.size(); ++i) {
        const auto& o = cfg.organs[i];
        const std::string pre = "organ." + std::to_string(i) + ".";
        f << pre << "id = " << o.id << "\n";
        f << pre << "random_center = " << (o.random_center ? 1 : 0) << "\n";
        f << pre << "center.x = " << o.center[0] << "\n" << pre << "center.y = " << o.center[1]
          << "\n" << pre << "center.z = " << o.center[2] << "\n";
        f << pre << "radius.x = " << o.radii_mm[0] << "\n" << pre << "radius.y = " << o.radii_mm[1]
          << "\n" << pre << "radius.z = " << o.radii_mm[2] << "\n";
        f << pre << "intensity = " << o.intensity << "\n";
        f << pre << "presence_prob = " << o.presence_prob << "\n";
    }
}

}  // namespace combo
