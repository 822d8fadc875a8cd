#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ptdp {

/// Thrown for inputs that violate a documented precondition.
class invalid_input : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Index = std::size_t;

/// Dense row-major matrix. Rows are contiguous so a row can be handed out as a span.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

struct Coord {
    int x = 0;
    int y = 0;
    int z = 0;
    bool operator==(const Coord&) const = default;
};

/// Voxel grid with a brain mask. Voxels inside the mask get compact indices
/// 0..m-1 in scan order (x fastest, then y, then z).
class VolumeGeometry {
public:
    VolumeGeometry() = default;

    const std::array<int, 3>& dims() const noexcept { return dims_; }
    std::size_t grid_size() const noexcept { return mask_.size(); }
    std::size_t size() const noexcept { return coord_of_.size(); }
    const std::vector<bool>& mask() const noexcept { return mask_; }

    std::size_t linear(const Coord& c) const noexcept {
        return static_cast<std::size_t>(c.x) +
               static_cast<std::size_t>(dims_[0]) *
                   (static_cast<std::size_t>(c.y) + static_cast<std::size_t>(dims_[1]) * static_cast<std::size_t>(c.z));
    }
    Coord coord_of_linear(std::size_t lin) const noexcept {
        const auto nx = static_cast<std::size_t>(dims_[0]);
        const auto ny = static_cast<std::size_t>(dims_[1]);
        return {static_cast<int>(lin % nx), static_cast<int>((lin / nx) % ny), static_cast<int>(lin / (nx * ny))};
    }
    bool in_grid(const Coord& c) const noexcept {
        return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < dims_[0] && c.y < dims_[1] && c.z < dims_[2];
    }
    bool in_mask(const Coord& c) const noexcept { return in_grid(c) && mask_[linear(c)]; }

    /// Compact index of an in-mask coordinate, nullopt otherwise.
    std::optional<Index> index_of(const Coord& c) const noexcept {
        if (!in_grid(c)) return std::nullopt;
        const auto v = index_of_linear_[linear(c)];
        if (v < 0) return std::nullopt;
        return static_cast<Index>(v);
    }
    /// -1 for voxels outside the mask.
    std::int64_t index_of_linear(std::size_t lin) const noexcept { return index_of_linear_[lin]; }
    Coord coord_of(Index i) const { return coord_of_linear(coord_of_.at(i)); }
    std::size_t linear_of(Index i) const { return coord_of_.at(i); }

    bool operator==(const VolumeGeometry& o) const { return dims_ == o.dims_ && mask_ == o.mask_; }

    friend VolumeGeometry build_geometry(std::array<int, 3> dims, std::vector<bool> mask);

private:
    std::array<int, 3> dims_{0, 0, 0};
    std::vector<bool> mask_;
    std::vector<std::int64_t> index_of_linear_;
    std::vector<std::size_t> coord_of_;
};

inline VolumeGeometry build_geometry(std::array<int, 3> dims, std::vector<bool> mask) {
    for (int d : dims)
        if (d <= 0) throw invalid_input("geometry dimensions must be positive");
    const std::size_t n = static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
                          static_cast<std::size_t>(dims[2]);
    if (mask.size() != n)
        throw invalid_input("mask length " + std::to_string(mask.size()) + " does not match grid size " +
                            std::to_string(n));
    VolumeGeometry g;
    g.dims_ = dims;
    g.mask_ = std::move(mask);
    g.index_of_linear_.assign(n, -1);
    for (std::size_t lin = 0; lin < n; ++lin) {
        if (g.mask_[lin]) {
            g.index_of_linear_[lin] = static_cast<std::int64_t>(g.coord_of_.size());
            g.coord_of_.push_back(lin);
        }
    }
    if (g.coord_of_.empty()) throw invalid_input("mask has no in-mask voxels");
    return g;
}

inline VolumeGeometry full_geometry(std::array<int, 3> dims) {
    const std::size_t n = static_cast<std::size_t>(std::max(dims[0], 0)) * static_cast<std::size_t>(std::max(dims[1], 0)) *
                          static_cast<std::size_t>(std::max(dims[2], 0));
    return build_geometry(dims, std::vector<bool>(n, true));
}

/// Sorted, duplicate-free voxel indices.
class VoxelSubset {
public:
    VoxelSubset() = default;

    /// Sorts and deduplicates; every index must be < m.
    static VoxelSubset from_indices(std::vector<Index> indices, std::size_t m) {
        std::sort(indices.begin(), indices.end());
        indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
        if (!indices.empty() && indices.back() >= m)
            throw invalid_input("voxel index " + std::to_string(indices.back()) + " out of range (m = " +
                                std::to_string(m) + ")");
        VoxelSubset s;
        s.indices_ = std::move(indices);
        return s;
    }

    static VoxelSubset all(std::size_t m) {
        VoxelSubset s;
        s.indices_.resize(m);
        for (std::size_t i = 0; i < m; ++i) s.indices_[i] = i;
        return s;
    }

    const std::vector<Index>& indices() const noexcept { return indices_; }
    std::size_t size() const noexcept { return indices_.size(); }
    bool empty() const noexcept { return indices_.empty(); }
    bool contains(Index i) const noexcept { return std::binary_search(indices_.begin(), indices_.end(), i); }
    bool is_subset_of(const VoxelSubset& o) const {
        return std::includes(o.indices_.begin(), o.indices_.end(), indices_.begin(), indices_.end());
    }

    bool operator==(const VoxelSubset&) const = default;

private:
    std::vector<Index> indices_;
};

inline std::string to_string(const Coord& c) {
    return "(" + std::to_string(c.x) + ", " + std::to_string(c.y) + ", " + std::to_string(c.z) + ")";
}

inline VoxelSubset subset_from_coords(const VolumeGeometry& g, std::span<const Coord> coords) {
    std::vector<Index> idx;
    idx.reserve(coords.size());
    for (const auto& c : coords) {
        auto i = g.index_of(c);
        if (!i) throw invalid_input("coordinate " + to_string(c) + " is outside the mask");
        idx.push_back(*i);
    }
    return VoxelSubset::from_indices(std::move(idx), g.size());
}

/// J x m per-subject contrast values.
struct SubjectContrasts {
    Matrix<double> data;
    std::optional<VolumeGeometry> geometry;
    std::vector<std::string> subject_ids;

    std::size_t subjects() const noexcept { return data.rows(); }
    std::size_t voxels() const noexcept { return data.cols(); }
};

inline SubjectContrasts make_contrasts(Matrix<double> data, std::optional<VolumeGeometry> geometry = std::nullopt,
                                       std::vector<std::string> ids = {}) {
    if (data.rows() < 2) throw invalid_input("need at least 2 subjects, got " + std::to_string(data.rows()));
    if (data.cols() < 1) throw invalid_input("need at least one voxel");
    for (std::size_t r = 0; r < data.rows(); ++r)
        for (std::size_t c = 0; c < data.cols(); ++c)
            if (!std::isfinite(data(r, c)))
                throw invalid_input("non-finite contrast value at subject " + std::to_string(r + 1) + ", voxel " +
                                    std::to_string(c + 1));
    if (geometry && geometry->size() != data.cols())
        throw invalid_input("geometry has " + std::to_string(geometry->size()) + " in-mask voxels but data has " +
                            std::to_string(data.cols()) + " columns");
    if (ids.empty()) {
        ids.reserve(data.rows());
        for (std::size_t r = 0; r < data.rows(); ++r) ids.push_back("s" + std::to_string(r + 1));
    } else if (ids.size() != data.rows()) {
        throw invalid_input("subject id count does not match row count");
    }
    return SubjectContrasts{std::move(data), std::move(geometry), std::move(ids)};
}

/// Lower confidence bound on the number of active voxels in a subset.
struct TdpResult {
    std::size_t lower_bound = 0;
    std::size_t size = 0;
    std::size_t argmax_u = 1;

    double tdp() const noexcept { return size == 0 ? 0.0 : static_cast<double>(lower_bound) / static_cast<double>(size); }
    bool operator==(const TdpResult&) const = default;
};

}  // namespace ptdp
