#pragma once

#include "cellgs/camera.hpp"
#include "cellgs/image.hpp"

namespace cellgs {

/// Normals of the surface implied by a depth map (camera space).
///
/// Each pixel is back-projected to P = depth * K^-1 (u, v, 1); the normal is
/// dP/du x dP/dv from central differences (one-sided at borders and next to
/// empty pixels), oriented against the viewing ray. Pixels with zero depth, or
/// without a usable neighbor on either axis, get a zero normal.
inline Image depth_to_normal(const Image& depth, const Intrinsics& k) {
    if (depth.channels() != 1) throw ShapeError("depth_to_normal: depth must have one channel");
    const int h = depth.height(), w = depth.width();
    Image normal(h, w, 3);
    auto point = [&](int y, int x) -> Vec3 { return depth(y, x) * k.pixel_direction(x, y); };
    auto valid = [&](int y, int x) { return x >= 0 && y >= 0 && x < w && y < h && depth(y, x) > 0.0; };

    // Difference along one axis; false when neither neighbor is usable.
    auto diff = [&](int y, int x, int dy, int dx, Vec3& out) {
        const bool fwd = valid(y + dy, x + dx);
        const bool bwd = valid(y - dy, x - dx);
        if (fwd && bwd) {
            out = 0.5 * (point(y + dy, x + dx) - point(y - dy, x - dx));
        } else if (fwd) {
            out = point(y + dy, x + dx) - point(y, x);
        } else if (bwd) {
            out = point(y, x) - point(y - dy, x - dx);
        } else {
            return false;
        }
        return true;
    };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!(depth(y, x) > 0.0)) continue;
            Vec3 du, dv;
            if (!diff(y, x, 0, 1, du) || !diff(y, x, 1, 0, dv)) continue;
            Vec3 n = du.cross(dv);
            const double len = n.norm();
            if (!(len > 0.0)) continue;
            n /= len;
            if (n.dot(k.pixel_direction(x, y)) > 0.0) n = -n;
            for (int c = 0; c < 3; ++c) normal(y, x, c) = n[c];
        }
    }
    return normal;
}

}  // namespace cellgs
