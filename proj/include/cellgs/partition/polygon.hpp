#pragma once

#include <algorithm>
#include <vector>

#include "cellgs/math.hpp"

namespace cellgs::polygon {

using Polygon = std::vector<Vec2>;

inline double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

/// Counter-clockwise convex hull (Andrew's monotone chain); collinear points dropped.
inline Polygon convex_hull(Polygon pts) {
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    Polygon hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

/// Signed shoelace area (positive for counter-clockwise).
inline double signed_area(const Polygon& poly) {
    double s = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % poly.size()];
        s += a.x() * b.y() - b.x() * a.y();
    }
    return 0.5 * s;
}

inline double area(const Polygon& poly) { return std::abs(signed_area(poly)); }

/// Sutherland-Hodgman clipping of `subject` against a convex counter-clockwise `clip`.
inline Polygon clip(const Polygon& subject, const Polygon& clip_poly) {
    Polygon out = subject;
    for (std::size_t e = 0; e < clip_poly.size() && !out.empty(); ++e) {
        const Vec2& a = clip_poly[e];
        const Vec2& b = clip_poly[(e + 1) % clip_poly.size()];
        const Polygon in = std::move(out);
        out.clear();
        for (std::size_t i = 0; i < in.size(); ++i) {
            const Vec2& p = in[i];
            const Vec2& q = in[(i + 1) % in.size()];
            const double sp = cross(a, b, p);
            const double sq = cross(a, b, q);
            if (sp >= 0.0) out.push_back(p);
            if ((sp >= 0.0) != (sq >= 0.0)) {
                const double t = sp / (sp - sq);
                out.push_back(p + t * (q - p));
            }
        }
    }
    return out;
}

/// Counter-clockwise rectangle [x0, x1] x [y0, y1].
inline Polygon rectangle(double x0, double y0, double x1, double y1) {
    return {Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)};
}

}  // namespace cellgs::polygon
