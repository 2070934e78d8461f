#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "cellgs/camera.hpp"
#include "cellgs/core/ray.hpp"
#include "cellgs/core/sh.hpp"
#include "cellgs/core/splat.hpp"
#include "cellgs/image.hpp"
#include "cellgs/parallel.hpp"

namespace cellgs {

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    double near = 0.01;
    double min_weight = 1.0 / 255.0;      // alpha * psi gather threshold
    double min_transmittance = 1e-4;      // compositing stops below this
    int tile_size = 16;
    bool capture_contributions = false;   // training mode
};

/// One splat's share of a pixel, in compositing order.
struct Contribution {
    int splat = 0;
    double weight = 0.0;     // omega_k
    double depth = 0.0;      // camera-space z of the peak
    double t_star = 0.0;     // ray parameter of the peak
    double psi = 0.0;
    double alpha_psi = 0.0;  // alpha_k * psi_k
    Vec3 normal = Vec3::Zero();  // camera space, facing the camera
};

struct RenderOutput {
    Image color;   // H x W x 3
    Image depth;   // H x W x 1, weight-normalized mean depth
    Image normal;  // H x W x 3, camera space
    Image alpha;   // H x W x 1, sum of weights
    Intrinsics intrinsics;
    // Training mode only: contributions of pixel p are
    // contribs[offsets[p] .. offsets[p + 1]), sorted by t*.
    std::vector<std::size_t> offsets;
    std::vector<Contribution> contribs;

    std::span<const Contribution> pixel(int y, int x) const {
        const auto p = static_cast<std::size_t>(y) * color.width() + x;
        return std::span<const Contribution>(contribs).subspan(offsets[p], offsets[p + 1] - offsets[p]);
    }
};

/// Per-view quantities of one splat, shared by the forward and backward passes.
struct ViewSplat {
    WhitenedSplat frame;
    double alpha = 0.0;
    Vec3 view_dir;          // unit, camera center -> splat center (world)
    Vec3 color;             // clamped SH color
    Eigen::Vector3i clamped = Eigen::Vector3i::Zero();  // channel clamped at 0
    int normal_axis = 0;    // column of R used as the normal
    double normal_sign = 1.0;
    Vec3 normal_cam;        // unit normal in camera space, facing the camera
    // Conservative pixel bounding box of the cutoff sphere; empty when culled.
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;

    ViewSplat(const GaussianSplat& s, const CameraView& cam)
        : frame(s, cam.center()) {}
};

namespace detail {

/// Projected x-range of a sphere (camera space) along one image axis.
inline bool sphere_extent(double c_axis, double c_z, double radius, double& lo, double& hi) {
    const double denom = c_z * c_z - radius * radius;
    const double disc = c_axis * c_axis + denom;
    if (denom <= 0.0 || disc <= 0.0) return false;
    const double root = radius * std::sqrt(disc);
    lo = (c_axis * c_z - root) / denom;
    hi = (c_axis * c_z + root) / denom;
    return true;
}

}  // namespace detail

inline std::vector<ViewSplat> prepare_view(const GaussianField& field, const CameraView& cam,
                                           const RenderOptions& opts) {
    std::vector<ViewSplat> out;
    out.reserve(field.size());
    const Vec3 eye = cam.center();
    const auto& k = cam.intrinsics;
    for (const auto& s : field.splats) {
        ViewSplat v(s, cam);
        v.alpha = s.opacity();
        const Vec3 to_splat = s.center - eye;
        const double dist = to_splat.norm();
        v.view_dir = dist > 0.0 ? Vec3(to_splat / dist) : Vec3(Vec3::UnitZ());

        ShBasis basis;
        sh_basis(field.sh_degree, v.view_dir, basis);
        Vec3 raw = Vec3::Constant(0.5);
        for (std::size_t j = 0; j < s.sh.size(); ++j) raw += basis[j] * s.sh[j];
        for (int c = 0; c < 3; ++c) {
            v.clamped[c] = raw[c] < 0.0 ? 1 : 0;
            v.color[c] = std::max(raw[c], 0.0);
        }

        const Mat3 rot = quat_to_rotation(normalized_quat(s.rotation));
        v.normal_axis = shortest_axis(s.log_scale);
        const Vec3 n_world = rot.col(v.normal_axis);
        v.normal_sign = n_world.dot(eye - s.center) >= 0.0 ? 1.0 : -1.0;
        v.normal_cam = cam.pose.rotation * (v.normal_sign * n_world);

        const double radius = cutoff_radius(s, opts.min_weight);
        if (radius > 0.0) {
            const Vec3 c = cam.pose.to_camera(s.center);
            if (c.z() + radius > 0.0) {
                double ulo, uhi, vlo, vhi;
                if (c.z() - radius > 1e-9 && detail::sphere_extent(c.x(), c.z(), radius, ulo, uhi) &&
                    detail::sphere_extent(c.y(), c.z(), radius, vlo, vhi)) {
                    // pixel centers x + 0.5 inside [u_lo, u_hi], one pixel of slack
                    v.x0 = std::max(0, static_cast<int>(std::floor(k.fx * ulo + k.cx - 0.5)) - 1);
                    v.x1 = std::min(k.width - 1, static_cast<int>(std::ceil(k.fx * uhi + k.cx - 0.5)) + 1);
                    v.y0 = std::max(0, static_cast<int>(std::floor(k.fy * vlo + k.cy - 0.5)) - 1);
                    v.y1 = std::min(k.height - 1, static_cast<int>(std::ceil(k.fy * vhi + k.cy - 0.5)) + 1);
                } else {
                    v.x0 = 0;
                    v.x1 = k.width - 1;
                    v.y0 = 0;
                    v.y1 = k.height - 1;
                }
            }
        }
        out.push_back(std::move(v));
    }
    return out;
}

/// Splat indices whose pixel box overlaps each tile (row-major tiles), in index order.
inline std::vector<std::vector<int>> bin_splats(std::span<const ViewSplat> view, int width, int height, int tile) {
    const int tiles_x = (width + tile - 1) / tile, tiles_y = (height + tile - 1) / tile;
    std::vector<std::vector<int>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::size_t i = 0; i < view.size(); ++i) {
        const auto& v = view[i];
        if (v.x1 < v.x0 || v.y1 < v.y0) continue;
        for (int ty = v.y0 / tile; ty <= v.y1 / tile; ++ty) {
            for (int tx = v.x0 / tile; tx <= v.x1 / tile; ++tx) {
                bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<int>(i));
            }
        }
    }
    return bins;
}

namespace detail {

struct Candidate {
    double t_star;
    int splat;
    double psi;
};

/// Composites one pixel's ray from an already gathered candidate set.
/// Candidates are sorted in place by (t*, splat index).
inline void composite_pixel(std::vector<Candidate>& cands, std::span<const ViewSplat> view,
                            double z_per_t, const RenderOptions& opts, double* color, double& depth,
                            double* normal, double& alpha, std::vector<Contribution>* capture) {
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return a.t_star < b.t_star || (a.t_star == b.t_star && a.splat < b.splat);
    });
    double transmittance = 1.0;
    double wsum = 0.0, dsum = 0.0;
    Vec3 csum = Vec3::Zero(), nsum = Vec3::Zero();
    for (const auto& c : cands) {
        const ViewSplat& v = view[static_cast<std::size_t>(c.splat)];
        const double g = v.alpha * c.psi;
        const double w = g * transmittance;
        const double z = c.t_star * z_per_t;
        wsum += w;
        dsum += w * z;
        csum += w * v.color;
        nsum += w * v.normal_cam;
        if (capture) capture->push_back(Contribution{c.splat, w, z, c.t_star, c.psi, g, v.normal_cam});
        transmittance *= 1.0 - g;
        if (transmittance < opts.min_transmittance) break;
    }
    const Vec3 out = csum + (1.0 - wsum) * opts.background;
    for (int ch = 0; ch < 3; ++ch) color[ch] = out[ch];
    alpha = wsum;
    depth = dsum / std::max(wsum, 1e-8);
    const double nn = nsum.norm();
    const Vec3 n = nn > 0.0 ? Vec3(nsum / nn) : Vec3(Vec3::Zero());
    for (int ch = 0; ch < 3; ++ch) normal[ch] = n[ch];
}

}  // namespace detail

/// Ray-Gaussian alpha blending of `field` as seen from `cam`.
///
/// Splats are binned to tiles with a conservative bound of the sphere outside
/// which alpha * psi falls below `min_weight`, so culling never drops a
/// contribution the unculled evaluation would keep.
inline RenderOutput render(const GaussianField& field, const CameraView& cam,
                           const RenderOptions& opts = {}, ThreadPool* pool = nullptr) {
    const int w = cam.width(), h = cam.height();
    RenderOutput out;
    out.color = Image(h, w, 3);
    out.depth = Image(h, w, 1);
    out.normal = Image(h, w, 3);
    out.alpha = Image(h, w, 1);

    out.intrinsics = cam.intrinsics;

    const std::vector<ViewSplat> view = prepare_view(field, cam, opts);
    const int ts = std::max(1, opts.tile_size);
    const int tiles_x = (w + ts - 1) / ts;
    const auto bins = bin_splats(view, w, h, ts);

    const Mat3 cam_to_world = cam.pose.rotation.transpose();
    std::vector<std::vector<Contribution>> tile_contribs(opts.capture_contributions ? bins.size() : 0);
    std::vector<std::vector<std::size_t>> tile_counts(opts.capture_contributions ? bins.size() : 0);

    auto run_tile = [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % tiles_x, ty = static_cast<int>(tile) / tiles_x;
        const auto& bin = bins[tile];
        std::vector<detail::Candidate> cands;
        std::vector<Contribution>* capture = opts.capture_contributions ? &tile_contribs[tile] : nullptr;
        for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                const Vec3 dc = cam.intrinsics.pixel_direction(x, y);
                const double len = dc.norm();
                const Vec3 d = cam_to_world * (dc / len);
                cands.clear();
                for (int si : bin) {
                    const auto& v = view[static_cast<std::size_t>(si)];
                    if (x < v.x0 || x > v.x1 || y < v.y0 || y > v.y1) continue;
                    Vec3 dg;
                    const RayHit hit = v.frame.peak(d, dg);
                    if (hit.t_star <= opts.near || v.alpha * hit.psi < opts.min_weight) continue;
                    cands.push_back({hit.t_star, si, hit.psi});
                }
                const std::size_t before = capture ? capture->size() : 0;
                detail::composite_pixel(cands, view, 1.0 / len, opts, &out.color(y, x, 0),
                                        out.depth(y, x), &out.normal(y, x, 0), out.alpha(y, x), capture);
                if (capture) tile_counts[tile].push_back(capture->size() - before);
            }
        }
    };
    if (pool) {
        pool->parallel_for(bins.size(), run_tile);
    } else {
        for (std::size_t t = 0; t < bins.size(); ++t) run_tile(t);
    }

    if (opts.capture_contributions) {
        // reassemble per-pixel lists in row-major pixel order
        std::vector<std::size_t> count(static_cast<std::size_t>(w) * h, 0);
        std::vector<std::size_t> start(static_cast<std::size_t>(w) * h, 0);
        for (std::size_t tile = 0; tile < bins.size(); ++tile) {
            const int tx = static_cast<int>(tile) % tiles_x, ty = static_cast<int>(tile) / tiles_x;
            std::size_t k = 0, pos = 0;
            for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
                for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                    const auto p = static_cast<std::size_t>(y) * w + x;
                    start[p] = pos;
                    count[p] = tile_counts[tile][k];
                    pos += count[p];
                    ++k;
                }
            }
        }
        out.offsets.assign(count.size() + 1, 0);
        for (std::size_t p = 0; p < count.size(); ++p) out.offsets[p + 1] = out.offsets[p] + count[p];
        out.contribs.resize(out.offsets.back());
        for (std::size_t tile = 0; tile < bins.size(); ++tile) {
            const int tx = static_cast<int>(tile) % tiles_x, ty = static_cast<int>(tile) / tiles_x;
            for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
                for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                    const auto p = static_cast<std::size_t>(y) * w + x;
                    std::copy_n(tile_contribs[tile].begin() + static_cast<std::ptrdiff_t>(start[p]), count[p],
                                out.contribs.begin() + static_cast<std::ptrdiff_t>(out.offsets[p]));
                }
            }
        }
    }
    return out;
}

/// Background-only output of the given size (empty field).
inline RenderOutput render_background(int height, int width, const Vec3& background) {
    RenderOutput out;
    out.color = Image(height, width, 3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) out.color(y, x, c) = background[c];
        }
    }
    out.depth = Image(height, width, 1);
    out.normal = Image(height, width, 3);
    out.alpha = Image(height, width, 1);
    out.offsets.assign(static_cast<std::size_t>(height) * width + 1, 0);
    return out;
}

}  // namespace cellgs
