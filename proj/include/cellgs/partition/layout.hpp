#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cellgs/error.hpp"
#include "cellgs/ingest/scene.hpp"

namespace cellgs {

/// Axis-aligned XY rectangle. Membership is half-open, (lo, hi], so that a
/// point on an internal grid line belongs to the lower-index cell; the low
/// edge is closed on the first row or column of a layout.
struct Rect {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
    bool closed_x0 = true, closed_y0 = true;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }

    bool contains(double x, double y) const {
        const bool in_x = (x > x0 || (closed_x0 && x == x0)) && x <= x1;
        const bool in_y = (y > y0 || (closed_y0 && y == y0)) && y <= y1;
        return in_x && in_y;
    }
    bool contains(const Vec3& p) const { return contains(p.x(), p.y()); }
    bool contains_rect(const Rect& o) const { return x0 <= o.x0 && y0 <= o.y0 && x1 >= o.x1 && y1 >= o.y1; }

    friend bool operator==(const Rect&, const Rect&) = default;
};

/// How much of one camera image a cell box covers.
struct VisibilityReport {
    int camera_id = 0;
    int cell_id = 0;
    double ratio = 0.0;            // projected_area / image_area, in [0, 1]
    double projected_area = 0.0;   // pixels^2
    double image_area = 0.0;       // pixels^2
};

struct Cell {
    int id = 0;
    int ix = 0, iy = 0;
    Rect bounds;
    Rect expanded;
    std::vector<std::size_t> points;           // P_i
    std::vector<std::size_t> dilated_points;   // P_i^d
    std::vector<std::size_t> final_points;     // P_i^f
    std::vector<int> cameras;                  // selected image ids, sorted
    std::vector<int> added_cameras;            // selected by visibility only, sorted
    std::vector<VisibilityReport> visibility;  // one entry per camera
};

enum class VisMode {
    Positive,   // a camera joins when ratio >= threshold and ratio > 0
    Inclusive,  // a camera joins when ratio >= threshold (threshold 0 adds every camera)
};

struct CellLayout {
    int nx = 1, ny = 1;
    double beta = 0.0;
    double threshold = 0.25;
    VisMode vis_mode = VisMode::Positive;
    Rect scene_box;
    std::vector<double> xs, ys;  // grid lines, nx + 1 and ny + 1 values
    std::vector<Cell> cells;     // cell id = iy * nx + ix

    int size() const { return static_cast<int>(cells.size()); }

    /// Cell owning the XY location, or -1 outside the scene box.
    int cell_at(double x, double y) const {
        if (!scene_box.contains(x, y)) return -1;
        auto axis = [](const std::vector<double>& lines, double v) {
            // first cell whose upper line is >= v
            const auto it = std::lower_bound(lines.begin() + 1, lines.end(), v);
            return static_cast<int>(std::min<std::ptrdiff_t>(it - lines.begin() - 1,
                                                             static_cast<std::ptrdiff_t>(lines.size()) - 2));
        };
        return axis(ys, y) * nx + axis(xs, x);
    }

    const Cell& cell(int id) const {
        if (id < 0 || id >= size()) throw LayoutError("cell id " + std::to_string(id) + " out of range");
        return cells[static_cast<std::size_t>(id)];
    }
    Cell& cell(int id) { return const_cast<Cell&>(std::as_const(*this).cell(id)); }
};

/// Splits the XY bounding box of the camera centers into nx x ny equal cells
/// and assigns every point inside the box to exactly one cell.
inline CellLayout make_grid(const SceneModel& model, int nx, int ny) {
    if (nx < 1 || ny < 1) throw InvalidParameter("grid dimensions must be at least 1");
    if (model.cameras.empty()) throw LayoutError("cannot build a grid without cameras");
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
    double x1 = -x0, y1 = -x0;
    for (const auto& c : model.cameras) {
        const Vec3 p = c.center();
        x0 = std::min(x0, p.x());
        y0 = std::min(y0, p.y());
        x1 = std::max(x1, p.x());
        y1 = std::max(y1, p.y());
    }
    if (!(x1 - x0 > 0.0) || !(y1 - y0 > 0.0)) {
        throw LayoutError("camera positions span a degenerate XY box");
    }
    CellLayout layout;
    layout.nx = nx;
    layout.ny = ny;
    layout.scene_box = Rect{x0, y0, x1, y1, true, true};
    for (int i = 0; i <= nx; ++i) layout.xs.push_back(i == nx ? x1 : x0 + (x1 - x0) * i / nx);
    for (int j = 0; j <= ny; ++j) layout.ys.push_back(j == ny ? y1 : y0 + (y1 - y0) * j / ny);
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            Cell c;
            c.id = iy * nx + ix;
            c.ix = ix;
            c.iy = iy;
            c.bounds = Rect{layout.xs[static_cast<std::size_t>(ix)], layout.ys[static_cast<std::size_t>(iy)],
                            layout.xs[static_cast<std::size_t>(ix) + 1], layout.ys[static_cast<std::size_t>(iy) + 1],
                            ix == 0, iy == 0};
            c.expanded = c.bounds;
            layout.cells.push_back(std::move(c));
        }
    }
    for (std::size_t i = 0; i < model.points.size(); ++i) {
        const Vec3& p = model.points[i].position;
        const int id = layout.cell_at(p.x(), p.y());
        if (id >= 0) layout.cells[static_cast<std::size_t>(id)].points.push_back(i);
    }
    for (auto& c : layout.cells) {
        c.dilated_points = c.points;
        c.final_points = c.points;
    }
    for (const auto& cam : model.cameras) {
        const Vec3 p = cam.center();
        const int id = layout.cell_at(p.x(), p.y());
        layout.cells[static_cast<std::size_t>(id)].cameras.push_back(cam.image_id);
    }
    for (auto& c : layout.cells) std::sort(c.cameras.begin(), c.cameras.end());
    return layout;
}

/// Concentric expansion of a cell to (1 + beta) times its width and height.
/// Updates the cell's expanded bounds and dilated point set and returns the bounds.
inline Rect expand_cell(CellLayout& layout, const SceneModel& model, int cell_id, double beta) {
    if (!(beta >= 0.0)) throw InvalidParameter("expansion ratio must be non-negative");
    Cell& c = layout.cell(cell_id);
    const double dx = 0.5 * beta * c.bounds.width();
    const double dy = 0.5 * beta * c.bounds.height();
    c.expanded = c.bounds;
    c.expanded.x0 -= dx;
    c.expanded.x1 += dx;
    c.expanded.y0 -= dy;
    c.expanded.y1 += dy;
    c.dilated_points.clear();
    for (std::size_t i = 0; i < model.points.size(); ++i) {
        if (c.expanded.contains(model.points[i].position)) c.dilated_points.push_back(i);
    }
    c.final_points = c.dilated_points;
    return c.expanded;
}

inline void expand_all(CellLayout& layout, const SceneModel& model, double beta) {
    layout.beta = beta;
    for (int i = 0; i < layout.size(); ++i) expand_cell(layout, model, i, beta);
}

}  // namespace cellgs
