#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <set>
#include <unordered_map>
#include <vector>

#include "cellgs/ingest/scene.hpp"
#include "cellgs/parallel.hpp"
#include "cellgs/partition/layout.hpp"
#include "cellgs/partition/polygon.hpp"

namespace cellgs {

inline constexpr double kVisibilityNear = 0.01;

/// Image polygon covered by the box [bounds] x [z_lo, z_hi] seen by `cam`.
///
/// The box is clipped against the camera near plane (surviving corners plus
/// edge/plane intersections), projected, hulled and clipped to the image.
inline polygon::Polygon projected_box(const Rect& bounds, double z_lo, double z_hi, const CameraView& cam,
                                      double near = kVisibilityNear) {
    std::array<Vec3, 8> c;
    for (int i = 0; i < 8; ++i) {
        const Vec3 world((i & 1) ? bounds.x1 : bounds.x0, (i & 2) ? bounds.y1 : bounds.y0, (i & 4) ? z_hi : z_lo);
        c[static_cast<std::size_t>(i)] = cam.pose.to_camera(world);
    }
    std::vector<Vec3> kept;
    for (const auto& p : c) {
        if (p.z() >= near) kept.push_back(p);
    }
    // the 12 box edges join corners differing in exactly one bit
    for (int i = 0; i < 8; ++i) {
        for (int bit = 1; bit < 8; bit <<= 1) {
            const int j = i | bit;
            if (j == i) continue;
            const Vec3& a = c[static_cast<std::size_t>(i)];
            const Vec3& b = c[static_cast<std::size_t>(j)];
            if ((a.z() >= near) != (b.z() >= near)) {
                const double t = (near - a.z()) / (b.z() - a.z());
                Vec3 p = a + t * (b - a);
                p.z() = near;
                kept.push_back(p);
            }
        }
    }
    if (kept.size() < 3) return {};
    polygon::Polygon proj;
    for (const auto& p : kept) proj.push_back(cam.intrinsics.project(p));
    const auto hull = polygon::convex_hull(std::move(proj));
    if (hull.size() < 3) return {};
    return polygon::clip(hull, polygon::rectangle(0.0, 0.0, cam.width(), cam.height()));
}

/// Fraction of the image covered by the projection of a cell's box.
inline VisibilityReport visibility_ratio(const Rect& bounds, const CameraView& cam, double z_lo, double z_hi,
                                         int cell_id = 0) {
    VisibilityReport r;
    r.camera_id = cam.image_id;
    r.cell_id = cell_id;
    r.image_area = static_cast<double>(cam.width()) * cam.height();
    const auto poly = projected_box(bounds, z_lo, z_hi, cam);
    r.projected_area = poly.size() >= 3 ? std::min(polygon::area(poly), r.image_area) : 0.0;
    r.ratio = std::clamp(r.projected_area / r.image_area, 0.0, 1.0);
    return r;
}

/// Z range of a point subset, or of the whole cloud when the subset is empty.
inline std::pair<double, double> z_range(const SceneModel& model, const std::vector<std::size_t>& subset) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    auto take = [&](const Vec3& p) {
        lo = std::min(lo, p.z());
        hi = std::max(hi, p.z());
    };
    if (subset.empty()) {
        for (const auto& p : model.points) take(p.position);
    } else {
        for (std::size_t i : subset) take(model.points[i].position);
    }
    if (lo > hi) return {0.0, 0.0};
    return {lo, hi};
}

inline bool passes_threshold(double ratio, double threshold, VisMode mode) {
    if (mode == VisMode::Positive && !(ratio > 0.0)) return false;
    return ratio >= threshold;
}

/// Assigns cameras to cells: each cell keeps the cameras located in its
/// original bounds and adds every camera whose visibility ratio of the
/// expanded cell passes the threshold.
inline void select_cameras(CellLayout& layout, const SceneModel& model, double threshold,
                           VisMode mode = VisMode::Positive, ThreadPool* pool = nullptr) {
    layout.threshold = threshold;
    layout.vis_mode = mode;
    const std::size_t n_cam = model.cameras.size();
    auto evaluate = [&](std::size_t ci) {
        Cell& cell = layout.cells[ci];
        const auto [z_lo, z_hi] = z_range(model, cell.points);
        cell.visibility.assign(n_cam, {});
        for (std::size_t k = 0; k < n_cam; ++k) {
            cell.visibility[k] = visibility_ratio(cell.expanded, model.cameras[k], z_lo, z_hi, cell.id);
        }
    };
    if (pool) {
        pool->parallel_for(layout.cells.size(), evaluate);
    } else {
        for (std::size_t ci = 0; ci < layout.cells.size(); ++ci) evaluate(ci);
    }
    for (auto& cell : layout.cells) {
        std::set<int> selected, added;
        for (std::size_t k = 0; k < n_cam; ++k) {
            const auto& cam = model.cameras[k];
            const Vec3 p = cam.center();
            const bool inside = layout.cell_at(p.x(), p.y()) == cell.id;
            if (inside) {
                selected.insert(cam.image_id);
            } else if (passes_threshold(cell.visibility[k].ratio, threshold, mode)) {
                selected.insert(cam.image_id);
                added.insert(cam.image_id);
            }
        }
        cell.cameras.assign(selected.begin(), selected.end());
        cell.added_cameras.assign(added.begin(), added.end());
    }
}

/// P_i^f: the dilated points plus every point observed by a camera that
/// joined the cell through visibility.
inline std::vector<std::size_t> extend_points(CellLayout& layout, const SceneModel& model, int cell_id) {
    Cell& cell = layout.cell(cell_id);
    const std::set<int> added(cell.added_cameras.begin(), cell.added_cameras.end());
    std::vector<char> in(model.points.size(), 0);
    for (std::size_t i : cell.dilated_points) in[i] = 1;
    for (std::size_t i = 0; i < model.points.size(); ++i) {
        if (in[i]) continue;
        for (int id : model.points[i].track) {
            if (added.contains(id)) {
                in[i] = 1;
                break;
            }
        }
    }
    cell.final_points.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i]) cell.final_points.push_back(i);
    }
    return cell.final_points;
}

struct PartitionOptions {
    int nx = 2, ny = 2;
    double beta = 0.2;
    double threshold = 0.25;
    VisMode vis_mode = VisMode::Positive;
};

/// Grid, expansion, camera selection and point extension in one call.
inline CellLayout partition_scene(const SceneModel& model, const PartitionOptions& opts,
                                  ThreadPool* pool = nullptr) {
    CellLayout layout = make_grid(model, opts.nx, opts.ny);
    expand_all(layout, model, opts.beta);
    select_cameras(layout, model, opts.threshold, opts.vis_mode, pool);
    for (int i = 0; i < layout.size(); ++i) extend_points(layout, model, i);
    return layout;
}

}  // namespace cellgs
