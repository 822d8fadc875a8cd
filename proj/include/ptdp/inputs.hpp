#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptdp/io/delimited.hpp"
#include "ptdp/io/nifti.hpp"

namespace ptdp {

/// Where the subject contrasts come from. Either a file (delimited text or a
/// 4D NIfTI stack) or an inline matrix. The grid comes from a mask volume,
/// explicit dims, or defaults to an m x 1 x 1 line.
struct DataSource {
    std::string data_path;
    std::optional<Matrix<double>> matrix;
    std::string mask_path;
    std::optional<std::array<int, 3>> dims;
};

inline bool has_nifti_extension(const std::string& path) {
    return path.size() >= 4 && path.compare(path.size() - 4, 4, ".nii") == 0;
}

inline VolumeGeometry geometry_for(const DataSource& src, std::size_t m) {
    VolumeGeometry g;
    if (!src.mask_path.empty()) {
        g = io::geometry_from_volume(io::read_nifti(src.mask_path));
    } else if (src.dims) {
        g = full_geometry(*src.dims);
    } else {
        g = full_geometry({static_cast<int>(m), 1, 1});
    }
    if (g.size() != m)
        throw invalid_input("geometry has " + std::to_string(g.size()) + " in-mask voxels but the data has " +
                            std::to_string(m) + " columns");
    return g;
}

inline SubjectContrasts load_contrasts(const DataSource& src) {
    if (src.matrix) {
        if (!src.data_path.empty()) throw invalid_input("give either a data file or an inline matrix, not both");
        return make_contrasts(*src.matrix, geometry_for(src, src.matrix->cols()));
    }
    if (src.data_path.empty()) throw invalid_input("no data given");
    if (has_nifti_extension(src.data_path)) {
        auto vol = io::read_nifti(src.data_path);
        VolumeGeometry g = src.mask_path.empty() ? full_geometry({vol.dims[0], vol.dims[1], vol.dims[2]})
                                                 : io::geometry_from_volume(io::read_nifti(src.mask_path));
        return io::contrasts_from_volume(vol, g);
    }
    auto table = io::read_delimited(src.data_path);
    const std::size_t m = table.values.cols();
    return make_contrasts(std::move(table.values), geometry_for(src, m), std::move(table.row_names));
}

/// Group labels given as "1,1,2,2" (commas, spaces or newlines).
inline std::vector<int> parse_group_labels(std::string_view text) {
    std::vector<int> out;
    std::size_t k = 0;
    while (k < text.size()) {
        while (k < text.size() && (text[k] == ',' || text[k] == ' ' || text[k] == '\n' || text[k] == '\r' ||
                                   text[k] == '\t'))
            ++k;
        if (k == text.size()) break;
        std::size_t e = k;
        while (e < text.size() && text[e] != ',' && text[e] != ' ' && text[e] != '\n' && text[e] != '\r' &&
               text[e] != '\t')
            ++e;
        const auto tok = text.substr(k, e - k);
        if (tok == "1") out.push_back(1);
        else if (tok == "2") out.push_back(2);
        else throw invalid_input("group label '" + std::string(tok) + "' is not 1 or 2");
        k = e;
    }
    if (out.empty()) throw invalid_input("no group labels given");
    return out;
}

inline Matrix<double> matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw invalid_input("matrix must be a non-empty array of rows");
    const std::size_t rows = j.size(), cols = j[0].size();
    Matrix<double> out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) throw invalid_input("matrix row " + std::to_string(r + 1) + " is ragged");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number())
                throw invalid_input("matrix entry (row " + std::to_string(r + 1) + ", column " + std::to_string(c + 1) +
                                    ") is not a number");
            out(r, c) = j[r][c].get<double>();
        }
    }
    return out;
}

}  // namespace ptdp
