#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "ptdp/core.hpp"
#include "ptdp/io/file.hpp"

namespace ptdp::io {

/// Subset files are JSON objects with either "indices" (compact voxel
/// indices) or "coords" ([x, y, z] triples, needs a geometry). A bare array
/// is read as indices.
inline VoxelSubset parse_subset(const nlohmann::json& j, std::size_t m, const VolumeGeometry* g = nullptr) {
    const nlohmann::json* list = nullptr;
    bool coords = false;
    if (j.is_array()) {
        list = &j;
    } else if (j.is_object() && j.contains("indices")) {
        list = &j.at("indices");
    } else if (j.is_object() && j.contains("coords")) {
        list = &j.at("coords");
        coords = true;
    } else {
        throw invalid_input("subset must hold an \"indices\" or a \"coords\" list");
    }
    if (!list->is_array()) throw invalid_input("subset list must be a JSON array");
    if (list->empty()) throw invalid_input("subset is empty");
    if (!coords) {
        std::vector<Index> idx;
        idx.reserve(list->size());
        for (std::size_t k = 0; k < list->size(); ++k) {
            const auto& v = (*list)[k];
            if (!v.is_number_integer() || v.get<long long>() < 0)
                throw invalid_input("subset entry " + std::to_string(k) + " is not a nonnegative integer");
            idx.push_back(v.get<Index>());
        }
        return VoxelSubset::from_indices(std::move(idx), m);
    }
    if (!g) throw invalid_input("coordinate subsets need a volume geometry");
    std::vector<Coord> cs;
    cs.reserve(list->size());
    for (std::size_t k = 0; k < list->size(); ++k) {
        const auto& v = (*list)[k];
        if (!v.is_array() || v.size() != 3 || !v[0].is_number_integer() || !v[1].is_number_integer() ||
            !v[2].is_number_integer())
            throw invalid_input("subset coordinate " + std::to_string(k) + " is not an [x, y, z] integer triple");
        cs.push_back({v[0].get<int>(), v[1].get<int>(), v[2].get<int>()});
    }
    return subset_from_coords(*g, cs);
}

inline VoxelSubset read_subset(const std::string& path, std::size_t m, const VolumeGeometry* g = nullptr) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw invalid_input("subset file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_subset(j, m, g);
}

}  // namespace ptdp::io
