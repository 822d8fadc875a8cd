#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <span>
#include <string_view>
#include <type_traits>
#include <vector>

#include "ptdp/core.hpp"
#include "ptdp/io/file.hpp"

// Minimal NIfTI-1 single-file ("n+1") reader and writer. Supported datatypes:
// 2 uint8, 4 int16, 8 int32, 16 float32, 64 float64. No compression, no
// extensions, orientation fields are ignored. For 4D files dim[4] is the
// subject axis.

namespace ptdp::io {

enum class NiftiErrc {
    truncated_header,
    bad_sizeof_hdr,
    bad_magic,
    two_file,
    unsupported_datatype,
    bitpix_mismatch,
    bad_dims,
    bad_vox_offset,
    truncated_data,
    unrepresentable_value,
};

inline std::string_view to_string(NiftiErrc c) {
    switch (c) {
        case NiftiErrc::truncated_header: return "truncated_header";
        case NiftiErrc::bad_sizeof_hdr: return "bad_sizeof_hdr";
        case NiftiErrc::bad_magic: return "bad_magic";
        case NiftiErrc::two_file: return "two_file";
        case NiftiErrc::unsupported_datatype: return "unsupported_datatype";
        case NiftiErrc::bitpix_mismatch: return "bitpix_mismatch";
        case NiftiErrc::bad_dims: return "bad_dims";
        case NiftiErrc::bad_vox_offset: return "bad_vox_offset";
        case NiftiErrc::truncated_data: return "truncated_data";
        case NiftiErrc::unrepresentable_value: return "unrepresentable_value";
    }
    return "unknown";
}

class nifti_error : public invalid_input {
public:
    nifti_error(NiftiErrc code, std::size_t offset, const std::string& what)
        : invalid_input("NIfTI " + std::string(to_string(code)) + " at byte " + std::to_string(offset) + ": " + what),
          code_(code),
          offset_(offset) {}
    NiftiErrc code() const noexcept { return code_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    NiftiErrc code_;
    std::size_t offset_;
};

enum class NiftiType : std::int16_t { uint8 = 2, int16 = 4, int32 = 8, float32 = 16, float64 = 64 };

inline int bits_of(NiftiType t) {
    switch (t) {
        case NiftiType::uint8: return 8;
        case NiftiType::int16: return 16;
        case NiftiType::int32: return 32;
        case NiftiType::float32: return 32;
        case NiftiType::float64: return 64;
    }
    return 0;
}

inline bool known_type(std::int16_t code) {
    return code == 2 || code == 4 || code == 8 || code == 16 || code == 64;
}

struct NiftiHeader {
    std::int32_t sizeof_hdr = 348;
    std::array<std::int16_t, 8> dim{};
    NiftiType datatype = NiftiType::float32;
    std::int16_t bitpix = 32;
    std::array<float, 8> pixdim{};
    float vox_offset = 352.0f;
    float scl_slope = 0.0f;
    float scl_inter = 0.0f;
    std::endian byte_order = std::endian::little;
};

/// Decoded volume. Values are scaled and laid out x fastest, then y, z, t.
struct NiftiVolume {
    NiftiHeader header;
    std::array<int, 4> dims{1, 1, 1, 1};
    std::vector<double> values;

    std::size_t voxels_per_volume() const noexcept {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
    }
    std::size_t volumes() const noexcept { return static_cast<std::size_t>(dims[3]); }
};

namespace detail {

inline constexpr std::size_t header_size = 348;
inline constexpr std::size_t data_offset = 352;  // header plus the 4-byte extension flag

template <typename T>
T load(const char* p, bool swap) {
    std::array<char, sizeof(T)> b;
    std::memcpy(b.data(), p, sizeof(T));
    if (swap) std::reverse(b.begin(), b.end());
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
}

template <typename T>
void store(char* p, T v, bool swap) {
    std::array<char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    if (swap) std::reverse(b.begin(), b.end());
    std::memcpy(p, b.data(), sizeof(T));
}

template <typename T>
void encode_as(std::string& out, std::size_t at, std::span<const double> raw, bool swap) {
    for (std::size_t k = 0; k < raw.size(); ++k) {
        const double v = raw[k];
        if constexpr (std::is_integral_v<T>) {
            if (!(v == std::floor(v) && v >= static_cast<double>(std::numeric_limits<T>::min()) &&
                  v <= static_cast<double>(std::numeric_limits<T>::max())))
                throw nifti_error(NiftiErrc::unrepresentable_value, at + k * sizeof(T),
                                  "value " + std::to_string(v) + " does not fit the integer datatype");
        }
        store<T>(out.data() + at + k * sizeof(T), static_cast<T>(v), swap);
    }
}

template <typename T>
void decode_as(std::string_view bytes, std::size_t at, std::vector<double>& out, bool swap, double slope, double inter) {
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double raw = static_cast<double>(load<T>(bytes.data() + at + k * sizeof(T), swap));
        out[k] = slope != 0.0 ? raw * slope + inter : raw;
    }
}

}  // namespace detail

inline NiftiVolume parse_nifti(std::string_view bytes) {
    using detail::load;
    if (bytes.size() < detail::header_size)
        throw nifti_error(NiftiErrc::truncated_header, bytes.size(),
                          "file has " + std::to_string(bytes.size()) + " bytes, header needs 348");
    NiftiVolume vol;
    auto& h = vol.header;
    const bool native_ok = load<std::int32_t>(bytes.data(), false) == 348;
    const bool swapped_ok = load<std::int32_t>(bytes.data(), true) == 348;
    if (!native_ok && !swapped_ok) throw nifti_error(NiftiErrc::bad_sizeof_hdr, 0, "sizeof_hdr is not 348");
    const bool swap = !native_ok;
    h.byte_order = swap ? (std::endian::native == std::endian::little ? std::endian::big : std::endian::little)
                        : std::endian::native;

    const std::string_view magic = bytes.substr(344, 4);
    if (magic == std::string_view("ni1\0", 4))
        throw nifti_error(NiftiErrc::two_file, 344, "unsupported two-file NIfTI (header/image pair)");
    if (magic != std::string_view("n+1\0", 4)) throw nifti_error(NiftiErrc::bad_magic, 344, "magic is not \"n+1\"");

    for (int k = 0; k < 8; ++k) h.dim[k] = load<std::int16_t>(bytes.data() + 40 + 2 * k, swap);
    const std::int16_t code = load<std::int16_t>(bytes.data() + 70, swap);
    if (!known_type(code))
        throw nifti_error(NiftiErrc::unsupported_datatype, 70, "datatype code " + std::to_string(code) + " not supported");
    h.datatype = static_cast<NiftiType>(code);
    h.bitpix = load<std::int16_t>(bytes.data() + 72, swap);
    if (h.bitpix != bits_of(h.datatype))
        throw nifti_error(NiftiErrc::bitpix_mismatch, 72,
                          "bitpix " + std::to_string(h.bitpix) + " does not match datatype " + std::to_string(code));
    for (int k = 0; k < 8; ++k) h.pixdim[k] = load<float>(bytes.data() + 76 + 4 * k, swap);
    h.vox_offset = load<float>(bytes.data() + 108, swap);
    h.scl_slope = load<float>(bytes.data() + 112, swap);
    h.scl_inter = load<float>(bytes.data() + 116, swap);

    const int ndim = h.dim[0];
    if (ndim < 1 || ndim > 7) throw nifti_error(NiftiErrc::bad_dims, 40, "dim[0] = " + std::to_string(ndim));
    for (int k = 1; k <= ndim; ++k)
        if (h.dim[k] < 1)
            throw nifti_error(NiftiErrc::bad_dims, 40 + 2 * static_cast<std::size_t>(k),
                              "dim[" + std::to_string(k) + "] = " + std::to_string(h.dim[k]));
    for (int k = 5; k <= ndim; ++k)
        if (h.dim[k] != 1)
            throw nifti_error(NiftiErrc::bad_dims, 40 + 2 * static_cast<std::size_t>(k),
                              "only 3D volumes and 4D subject stacks are supported");
    for (int k = 0; k < 4; ++k) vol.dims[k] = k + 1 <= ndim ? h.dim[k + 1] : 1;

    if (!(h.vox_offset >= static_cast<float>(detail::header_size)) || h.vox_offset != std::floor(h.vox_offset))
        throw nifti_error(NiftiErrc::bad_vox_offset, 108, "vox_offset " + std::to_string(h.vox_offset) + " is invalid");
    const auto offset = static_cast<std::size_t>(h.vox_offset);
    const std::size_t n = vol.voxels_per_volume() * vol.volumes();
    const std::size_t need = offset + n * static_cast<std::size_t>(h.bitpix / 8);
    if (bytes.size() < need)
        throw nifti_error(NiftiErrc::truncated_data, bytes.size(),
                          "data section needs bytes up to " + std::to_string(need) + ", file has " +
                              std::to_string(bytes.size()));

    const double slope = std::isfinite(h.scl_slope) ? h.scl_slope : 0.0;
    const double inter = std::isfinite(h.scl_inter) ? h.scl_inter : 0.0;
    vol.values.resize(n);
    switch (h.datatype) {
        case NiftiType::uint8: detail::decode_as<std::uint8_t>(bytes, offset, vol.values, swap, slope, inter); break;
        case NiftiType::int16: detail::decode_as<std::int16_t>(bytes, offset, vol.values, swap, slope, inter); break;
        case NiftiType::int32: detail::decode_as<std::int32_t>(bytes, offset, vol.values, swap, slope, inter); break;
        case NiftiType::float32: detail::decode_as<float>(bytes, offset, vol.values, swap, slope, inter); break;
        case NiftiType::float64: detail::decode_as<double>(bytes, offset, vol.values, swap, slope, inter); break;
    }
    return vol;
}

inline NiftiVolume read_nifti(const std::string& path) { return parse_nifti(read_file(path)); }

/// Encodes raw (unscaled) values. Integer datatypes require integral values in range.
inline std::string encode_nifti(std::array<int, 4> dims, std::span<const double> raw, NiftiType type,
                                std::endian order = std::endian::little, float scl_slope = 0.0f, float scl_inter = 0.0f) {
    using detail::store;
    std::size_t n = 1;
    for (int d : dims) {
        if (d < 1 || d > std::numeric_limits<std::int16_t>::max())
            throw invalid_input("NIfTI dimensions must lie in 1..32767");
        n *= static_cast<std::size_t>(d);
    }
    if (raw.size() != n)
        throw invalid_input("value count " + std::to_string(raw.size()) + " does not match dimensions (" +
                            std::to_string(n) + ")");
    const bool swap = order != std::endian::native;
    const std::size_t bytes_per = static_cast<std::size_t>(bits_of(type) / 8);
    std::string out(detail::data_offset + n * bytes_per, '\0');
    char* p = out.data();
    store<std::int32_t>(p, 348, swap);
    const std::int16_t ndim = dims[3] > 1 ? 4 : 3;
    store<std::int16_t>(p + 40, ndim, swap);
    for (int k = 0; k < 4; ++k) store<std::int16_t>(p + 42 + 2 * k, static_cast<std::int16_t>(dims[k]), swap);
    for (int k = 5; k < 8; ++k) store<std::int16_t>(p + 40 + 2 * k, 1, swap);
    store<std::int16_t>(p + 70, static_cast<std::int16_t>(type), swap);
    store<std::int16_t>(p + 72, static_cast<std::int16_t>(bits_of(type)), swap);
    for (int k = 0; k < 8; ++k) store<float>(p + 76 + 4 * k, 1.0f, swap);
    store<float>(p + 108, static_cast<float>(detail::data_offset), swap);
    store<float>(p + 112, scl_slope, swap);
    store<float>(p + 116, scl_inter, swap);
    std::memcpy(p + 344, "n+1\0", 4);
    switch (type) {
        case NiftiType::uint8: detail::encode_as<std::uint8_t>(out, detail::data_offset, raw, swap); break;
        case NiftiType::int16: detail::encode_as<std::int16_t>(out, detail::data_offset, raw, swap); break;
        case NiftiType::int32: detail::encode_as<std::int32_t>(out, detail::data_offset, raw, swap); break;
        case NiftiType::float32: detail::encode_as<float>(out, detail::data_offset, raw, swap); break;
        case NiftiType::float64: detail::encode_as<double>(out, detail::data_offset, raw, swap); break;
    }
    return out;
}

inline void write_nifti(const std::string& path, std::array<int, 4> dims, std::span<const double> raw, NiftiType type,
                        std::endian order = std::endian::little) {
    write_file(path, encode_nifti(dims, raw, type, order));
}

/// Mask volume: nonzero voxels are in the mask.
inline VolumeGeometry geometry_from_volume(const NiftiVolume& vol) {
    if (vol.volumes() != 1) throw invalid_input("mask volume must be 3D");
    std::vector<bool> mask(vol.values.size());
    for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = vol.values[k] != 0.0;
    return build_geometry({vol.dims[0], vol.dims[1], vol.dims[2]}, std::move(mask));
}

/// In-mask values of a 3D volume.
inline std::vector<double> map_from_volume(const NiftiVolume& vol, const VolumeGeometry& g) {
    if (vol.volumes() != 1 || std::array<int, 3>{vol.dims[0], vol.dims[1], vol.dims[2]} != g.dims())
        throw invalid_input("volume dimensions do not match the mask geometry");
    std::vector<double> out(g.size());
    for (Index i = 0; i < g.size(); ++i) out[i] = vol.values[g.linear_of(i)];
    return out;
}

/// 4D stack with subjects along dim[4], restricted to the mask.
inline SubjectContrasts contrasts_from_volume(const NiftiVolume& vol, const VolumeGeometry& g) {
    if (std::array<int, 3>{vol.dims[0], vol.dims[1], vol.dims[2]} != g.dims())
        throw invalid_input("contrast volume dimensions do not match the mask geometry");
    const std::size_t J = vol.volumes(), per = vol.voxels_per_volume();
    Matrix<double> data(J, g.size());
    for (std::size_t s = 0; s < J; ++s)
        for (Index i = 0; i < g.size(); ++i) data(s, i) = vol.values[s * per + g.linear_of(i)];
    return make_contrasts(std::move(data), g);
}

/// Scatters per-voxel values into the full grid (0 outside the mask).
inline std::vector<double> to_grid(std::span<const double> values, const VolumeGeometry& g) {
    if (values.size() != g.size()) throw invalid_input("value count does not match the geometry");
    std::vector<double> grid(g.grid_size(), 0.0);
    for (Index i = 0; i < g.size(); ++i) grid[g.linear_of(i)] = values[i];
    return grid;
}

}  // namespace ptdp::io
