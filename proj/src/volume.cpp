#include "combo/volume.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace combo {

Volume::Volume(Dims3 dims, double fill, Spacing3 spacing)
    : dims_(dims), spacing_(spacing), voxels_(dims.count(), fill) {
    if (dims.w <= 0 || dims.h <= 0 || dims.d <= 0)
        throw std::invalid_argument("Volume dims must be positive");
}

Volume::Volume(Dims3 dims, std::vector<double> voxels, Spacing3 spacing)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
    if (std::int64_t(voxels_.size()) != dims.count())
        throw std::invalid_argument("voxel count does not match dims");
}

OneHotMask::OneHotMask(Dims3 dims, int channels)
    : dims_(dims), channels_(channels), bits_(dims.count() * channels, 0) {
    if (channels < 1) throw std::invalid_argument("OneHotMask needs >= 1 channel");
}

ProbField::ProbField(Dims3 dims, int channels, double fill)
    : dims_(dims), channels_(channels), values_(dims.count() * channels, fill) {
    if (channels < 1) throw std::invalid_argument("ProbField needs >= 1 channel");
}

void ProbField::clamp() {
    for (double& v : values_) v = std::clamp(v, kClamp, 1.0 - kClamp);
}

Volume minmax_normalize(const Volume& v, double lo, double hi) {
    if (!(hi > lo)) throw std::invalid_argument("minmax_normalize: degenerate range (hi <= lo)");
    Volume out(v.dims(), 0.0, v.spacing());
    const double scale = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < v.voxels().size(); ++i)
        out.voxels()[i] = std::clamp((v.voxels()[i] - lo) * scale, 0.0, 1.0);
    return out;
}

OneHotMask one_hot_encode(const Volume& labels, int num_classes) {
    OneHotMask m(labels.dims(), num_classes);
    const auto n = labels.dims().count();
    for (std::int64_t i = 0; i < n; ++i) {
        const int label = int(labels.voxels()[i]);
        if (label < 0 || label > num_classes)
            throw std::out_of_range("one_hot_encode: label out of range");
        if (label > 0) m.bits()[std::int64_t(label - 1) * n + i] = 1;
    }
    return m;
}

Volume one_hot_decode(const OneHotMask& m) {
    Volume out(m.dims());
    const auto n = m.dims().count();
    for (int c = 0; c < m.channels(); ++c)
        for (std::int64_t i = 0; i < n; ++i)
            if (m.bits()[std::int64_t(c) * n + i]) out.voxels()[i] = c + 1;
    return out;
}

std::vector<double> flatten(const OneHotMask& m) {
    return std::vector<double>(m.bits().begin(), m.bits().end());
}

std::vector<double> flatten(const ProbField& p) { return p.values(); }

namespace {

void check_window(const Dims3& dims, const SubVolumeSpec& spec) {
    for (int a = 0; a < 3; ++a) {
        const int dim = a == 0 ? dims.w : a == 1 ? dims.h : dims.d;
        if (spec.origin[a] < 0 || spec.size[a] <= 0 || spec.origin[a] + spec.size[a] > dim)
            throw std::out_of_range("sub-volume window out of bounds");
    }
}

}  // namespace

Volume extract_subvolume(const Volume& v, const SubVolumeSpec& spec) {
    check_window(v.dims(), spec);
    Volume out({spec.size[0], spec.size[1], spec.size[2]}, 0.0, v.spacing());
    for (int z = 0; z < spec.size[2]; ++z)
        for (int y = 0; y < spec.size[1]; ++y)
            for (int x = 0; x < spec.size[0]; ++x)
                out.at(x, y, z) = v.at(spec.origin[0] + x, spec.origin[1] + y, spec.origin[2] + z);
    return out;
}

OneHotMask extract_subvolume(const OneHotMask& m, const SubVolumeSpec& spec) {
    check_window(m.dims(), spec);
    OneHotMask out({spec.size[0], spec.size[1], spec.size[2]}, m.channels());
    for (int c = 0; c < m.channels(); ++c)
        for (int z = 0; z < spec.size[2]; ++z)
            for (int y = 0; y < spec.size[1]; ++y)
                for (int x = 0; x < spec.size[0]; ++x)
                    out.set(x, y, z, c,
                            m.at(spec.origin[0] + x, spec.origin[1] + y, spec.origin[2] + z, c));
    return out;
}

void insert_subvolume(Volume& dst, const SubVolumeSpec& spec, const Volume& window) {
    check_window(dst.dims(), spec);
    if (window.dims() != Dims3{spec.size[0], spec.size[1], spec.size[2]})
        throw std::invalid_argument("insert_subvolume: window dims mismatch");
    for (int z = 0; z < spec.size[2]; ++z)
        for (int y = 0; y < spec.size[1]; ++y)
            for (int x = 0; x < spec.size[0]; ++x)
                dst.at(spec.origin[0] + x, spec.origin[1] + y, spec.origin[2] + z) =
                    window.at(x, y, z);
}

namespace {

constexpr std::uint32_t kCvolVersion = 1;
constexpr std::uint32_t kDtypeF32 = 0;
constexpr std::uint32_t kDtypeU8 = 1;

struct CvolHeader {
    char magic[4];
    std::uint32_t version, w, h, d, c, dtype, pad;
};
static_assert(sizeof(CvolHeader) == 32);

void write_header(std::ofstream& f, const Dims3& dims, int channels, std::uint32_t dtype) {
    CvolHeader hdr{};
    std::memcpy(hdr.magic, "CVOL", 4);
    hdr.version = kCvolVersion;
    hdr.w = dims.w;
    hdr.h = dims.h;
    hdr.d = dims.d;
    hdr.c = channels;
    hdr.dtype = dtype;
    f.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
}

CvolHeader read_header(std::ifstream& f, const std::string& path) {
    CvolHeader hdr{};
    f.read(reinterpret_cast<char*>(&hdr), sizeof(hdr));
    if (!f || std::memcmp(hdr.magic, "CVOL", 4) != 0)
        throw std::runtime_error("not a CVOL file: " + path);
    if (hdr.version != kCvolVersion)
        throw std::runtime_error("unsupported CVOL version in " + path);
    return hdr;
}

}  // namespace

void write_cvol(const std::string& path, const Volume& v) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    write_header(f, v.dims(), 1, kDtypeF32);
    std::vector<float> payload(v.voxels().begin(), v.voxels().end());
    f.write(reinterpret_cast<const char*>(payload.data()), payload.size() * sizeof(float));
    if (!f) throw std::runtime_error("write failed: " + path);
}

void write_cvol(const std::string& path, const OneHotMask& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    write_header(f, m.dims(), m.channels(), kDtypeU8);
    f.write(reinterpret_cast<const char*>(m.bits().data()), m.bits().size());
    if (!f) throw std::runtime_error("write failed: " + path);
}

void write_cvol(const std::string& path, const ProbField& p) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    write_header(f, p.dims(), p.channels(), kDtypeF32);
    std::vector<float> payload(p.values().begin(), p.values().end());
    f.write(reinterpret_cast<const char*>(payload.data()), payload.size() * sizeof(float));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Volume read_cvol_volume(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    const CvolHeader hdr = read_header(f, path);
    if (hdr.c != 1 || hdr.dtype != kDtypeF32)
        throw std::runtime_error("CVOL is not a single-channel f32 volume: " + path);
    const Dims3 dims{int(hdr.w), int(hdr.h), int(hdr.d)};
    std::vector<float> payload(dims.count());
    f.read(reinterpret_cast<char*>(payload.data()), payload.size() * sizeof(float));
    if (!f) throw std::runtime_error("truncated CVOL payload: " + path);
    return Volume(dims, std::vector<double>(payload.begin(), payload.end()));
}

OneHotMask read_cvol_mask(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    const CvolHeader hdr = read_header(f, path);
    if (hdr.dtype != kDtypeU8)
        throw std::runtime_error("CVOL is not a u8 mask: " + path);
    OneHotMask m({int(hdr.w), int(hdr.h), int(hdr.d)}, int(hdr.c));
    f.read(reinterpret_cast<char*>(m.bits().data()), m.bits().size());
    if (!f) throw std::runtime_error("truncated CVOL payload: " + path);
    return m;
}

}  // namespace combo
