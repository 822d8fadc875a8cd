#pragma once

#include <string>

#include "ptdp/cluster.hpp"
#include "ptdp/io/delimited.hpp"
#include "ptdp/io/nifti.hpp"

namespace ptdp::io {

enum class MapFormat { nifti, csv };

inline MapFormat parse_map_format(std::string_view s) {
    if (s == "nifti" || s == "nii") return MapFormat::nifti;
    if (s == "csv") return MapFormat::csv;
    throw invalid_input("unknown map format '" + std::string(s) + "' (nifti or csv)");
}

/// Writes each voxel's cluster TDP bound (0 outside clusters). NIfTI output is
/// float32 over the full grid; CSV output has one row per in-mask voxel.
inline void write_tdp_map(const ClusterReport& report, const VolumeGeometry& g, const std::string& path,
                          MapFormat format) {
    for (const auto& c : report.clusters)
        if (!c.subset.empty() && c.subset.indices().back() >= g.size())
            throw invalid_input("cluster " + std::to_string(c.id) + " does not fit the geometry");
    const auto values = tdp_map(report, g.size());
    if (format == MapFormat::nifti) {
        const auto& d = g.dims();
        write_nifti(path, {d[0], d[1], d[2], 1}, to_grid(values, g), NiftiType::float32);
        return;
    }
    std::string out = "index,x,y,z,tdp\n";
    for (Index i = 0; i < g.size(); ++i) {
        const Coord c = g.coord_of(i);
        out += std::to_string(i) + ',' + std::to_string(c.x) + ',' + std::to_string(c.y) + ',' + std::to_string(c.z) +
               ',' + format_number(values[i]) + '\n';
    }
    write_file(path, out);
}

}  // namespace ptdp::io
