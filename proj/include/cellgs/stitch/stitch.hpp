#pragma once

#include <algorithm>
#include <filesystem>
#include <vector>

#include "cellgs/core/splat.hpp"
#include "cellgs/ingest/ply.hpp"
#include "cellgs/parallel.hpp"
#include "cellgs/partition/layout.hpp"
#include "cellgs/partition/manifest.hpp"
#include "cellgs/render/renderer.hpp"

namespace cellgs {

/// Keeps the splats whose center lies in `bounds` (XY only), using the same
/// half-open rule as the grid so neighboring crops never share a splat.
inline GaussianField crop_cell(const GaussianField& field, const Rect& bounds) {
    GaussianField out;
    out.sh_degree = field.sh_degree;
    out.scene_extent = field.scene_extent;
    for (const auto& s : field.splats) {
        if (bounds.contains(s.center)) out.splats.push_back(s);
    }
    return out;
}

/// Radius of the bounding sphere of the splat centers; 1 for an empty field.
inline double center_extent(const GaussianField& f) {
    if (f.empty()) return 1.0;
    Vec3 mean = Vec3::Zero();
    for (const auto& s : f.splats) mean += s.center;
    mean /= static_cast<double>(f.size());
    double r = 0.0;
    for (const auto& s : f.splats) r = std::max(r, (s.center - mean).norm());
    return r > 0.0 ? r : 1.0;
}

/// Concatenates fields; a single input comes back unchanged. Mixed SH degrees
/// are raised to the highest one with zero coefficients.
inline GaussianField merge(const std::vector<GaussianField>& parts) {
    if (parts.size() == 1) return parts.front();
    GaussianField out;
    out.sh_degree = 0;
    for (const auto& p : parts) out.sh_degree = std::max(out.sh_degree, p.sh_degree);
    const auto n = static_cast<std::size_t>(sh_coeff_count(out.sh_degree));
    for (const auto& p : parts) {
        for (auto s : p.splats) {
            s.sh.resize(n, Vec3::Zero());
            out.splats.push_back(std::move(s));
        }
    }
    out.scene_extent = center_extent(out);
    return out;
}

/// Crops every cell field to its original bounds and merges the results.
inline GaussianField crop_and_merge(const std::vector<GaussianField>& cell_fields, const CellLayout& layout,
                                    ThreadPool* pool = nullptr) {
    if (cell_fields.size() != layout.cells.size()) throw LayoutError("one field per cell is required");
    std::vector<GaussianField> cropped(cell_fields.size());
    auto job = [&](std::size_t i) { cropped[i] = crop_cell(cell_fields[i], layout.cells[i].bounds); };
    if (pool) {
        pool->parallel_for(cropped.size(), job);
    } else {
        for (std::size_t i = 0; i < cropped.size(); ++i) job(i);
    }
    return merge(cropped);
}

/// Reads `cell_<i>/field.ply` for every cell of a stored partition, crops and merges.
inline GaussianField stitch_cells(const std::filesystem::path& cells_dir, ThreadPool* pool = nullptr) {
    const StoredPartition part = read_partition(cells_dir);
    std::vector<GaussianField> fields;
    for (const auto& c : part.layout.cells) {
        const auto ply = cell_dir(cells_dir, c.id) / "field.ply";
        if (!std::filesystem::exists(ply)) throw IoError("missing trained field " + ply.string());
        fields.push_back(import_field(ply));
    }
    return crop_and_merge(fields, part.layout, pool);
}

struct NovelViewRequest {
    CameraView camera;
    RenderOptions options;
};

inline Image render_novel_view(const GaussianField& field, const NovelViewRequest& req, ThreadPool* pool = nullptr) {
    return render(field, req.camera, req.options, pool).color;
}

}  // namespace cellgs
