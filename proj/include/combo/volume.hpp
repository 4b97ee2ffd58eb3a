#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace combo {

struct Dims3 {
    int w = 0, h = 0, d = 0;

    bool operator==(const Dims3&) const = default;
    std::int64_t count() const { return std::int64_t(w) * h * d; }
};

struct Spacing3 {
    double x = 1.0, y = 1.0, z = 1.0;
};

// Row-major with x fastest: index = x + w*(y + h*z).
inline std::int64_t voxel_index(const Dims3& d, int x, int y, int z) {
    return x + std::int64_t(d.w) * (y + std::int64_t(d.h) * z);
}

/// Dense 3D scalar field with voxel spacing.
class Volume {
public:
    Volume() = default;
    Volume(Dims3 dims, double fill = 0.0, Spacing3 spacing = {});
    Volume(Dims3 dims, std::vector<double> voxels, Spacing3 spacing = {});

    const Dims3& dims() const { return dims_; }
    const Spacing3& spacing() const { return spacing_; }
    const std::vector<double>& voxels() const { return voxels_; }
    std::vector<double>& voxels() { return voxels_; }

    double at(int x, int y, int z) const { return voxels_[voxel_index(dims_, x, y, z)]; }
    double& at(int x, int y, int z) { return voxels_[voxel_index(dims_, x, y, z)]; }

private:
    Dims3 dims_;
    Spacing3 spacing_;
    std::vector<double> voxels_;
};

/// Multi-channel binary target field. Channel-major over row-major voxels:
/// bit index = c*W*H*D + voxel_index. No explicit background channel; a
/// voxel with all channels clear is background.
class OneHotMask {
public:
    OneHotMask() = default;
    OneHotMask(Dims3 dims, int channels);

    const Dims3& dims() const { return dims_; }
    int channels() const { return channels_; }
    const std::vector<std::uint8_t>& bits() const { return bits_; }
    std::vector<std::uint8_t>& bits() { return bits_; }

    std::uint8_t at(int x, int y, int z, int c) const {
        return bits_[std::int64_t(c) * dims_.count() + voxel_index(dims_, x, y, z)];
    }
    void set(int x, int y, int z, int c, std::uint8_t v) {
        bits_[std::int64_t(c) * dims_.count() + voxel_index(dims_, x, y, z)] = v;
    }

private:
    Dims3 dims_;
    int channels_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Multi-channel prediction field, same layout contract as OneHotMask.
/// Values are clamped into the open unit interval before any logarithm.
class ProbField {
public:
    static constexpr double kClamp = 1e-7;

    ProbField() = default;
    ProbField(Dims3 dims, int channels, double fill = 0.5);

    const Dims3& dims() const { return dims_; }
    int channels() const { return channels_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    double at(int x, int y, int z, int c) const {
        return values_[std::int64_t(c) * dims_.count() + voxel_index(dims_, x, y, z)];
    }
    double& at(int x, int y, int z, int c) {
        return values_[std::int64_t(c) * dims_.count() + voxel_index(dims_, x, y, z)];
    }

    /// Clamp every value into [kClamp, 1-kClamp].
    void clamp();

private:
    Dims3 dims_;
    int channels_ = 0;
    std::vector<double> values_;
};

struct SubVolumeSpec {
    std::array<int, 3> origin{0, 0, 0};
    std::array<int, 3> size{1, 1, 1};
    std::array<int, 3> stride{1, 1, 1};
};

/// (x - lo)/(hi - lo), clipped to [0,1]. Throws on hi <= lo.
Volume minmax_normalize(const Volume& v, double lo, double hi);

/// Labels in {0,..,C} with 0 = background; channel c set where label == c+1.
OneHotMask one_hot_encode(const Volume& labels, int num_classes);

/// Inverse of one_hot_encode: 0 for background, c+1 where channel c is set.
Volume one_hot_decode(const OneHotMask& m);

std::vector<double> flatten(const OneHotMask& m);
std::vector<double> flatten(const ProbField& p);

Volume extract_subvolume(const Volume& v, const SubVolumeSpec& spec);
OneHotMask extract_subvolume(const OneHotMask& m, const SubVolumeSpec& spec);

/// Write the window back at spec.origin (inverse of extract for the region).
void insert_subvolume(Volume& dst, const SubVolumeSpec& spec, const Volume& window);

// CVOL container: 32-byte header (magic "CVOL", version, W, H, D, C, dtype
// tag 0=f32 / 1=u8, one pad word), then the payload in flatten order,
// little-endian.
void write_cvol(const std::string& path, const Volume& v);
void write_cvol(const std::string& path, const OneHotMask& m);
void write_cvol(const std::string& path, const ProbField& p);
Volume read_cvol_volume(const std::string& path);
OneHotMask read_cvol_mask(const std::string& path);

}  // namespace combo
