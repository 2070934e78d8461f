#pragma once

#include <cmath>

#include "cellgs/error.hpp"
#include "cellgs/image.hpp"
#include "cellgs/metrics/metrics.hpp"
#include "cellgs/render/depth_normal.hpp"
#include "cellgs/render/renderer.hpp"

namespace cellgs {

struct LossWeights {
    double depth = 100.0;   // lambda_1, depth distortion
    double normal = 0.05;   // lambda_2, normal consistency
    double dssim = 0.2;     // lambda_3, D-SSIM inside the color term

    void validate() const {
        for (double v : {depth, normal, dssim}) {
            if (!std::isfinite(v) || v < 0.0) throw InvalidParameter("loss weights must be finite and non-negative");
        }
    }
};

struct LossBreakdown {
    double total = 0.0;
    double color = 0.0;   // l1 + lambda_3 * dssim
    double depth = 0.0;   // depth distortion
    double normal = 0.0;  // normal consistency
    double l1 = 0.0;
    double dssim = 0.0;
};

inline double mean_abs_error(const Image& a, const Image& b) {
    require_same_shape(a, b, "L1");
    double s = 0.0;
    const auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) s += std::abs(da[i] - db[i]);
    return da.empty() ? 0.0 : s / static_cast<double>(da.size());
}

/// Mean over pixels of sum_{i<j} w_i w_j |z_i - z_j| over each pixel's contributions.
inline double depth_distortion(const RenderOutput& r) {
    if (r.offsets.empty()) throw InvalidParameter("depth distortion needs captured contributions");
    const std::size_t n_pix = r.offsets.size() - 1;
    double total = 0.0;
    for (std::size_t p = 0; p < n_pix; ++p) {
        // contributions are sorted by depth, so |z_i - z_j| = z_i - z_j for j < i
        double w_before = 0.0, wz_before = 0.0, s = 0.0;
        for (std::size_t k = r.offsets[p]; k < r.offsets[p + 1]; ++k) {
            const auto& c = r.contribs[k];
            s += c.weight * (c.depth * w_before - wz_before);
            w_before += c.weight;
            wz_before += c.weight * c.depth;
        }
        total += s;
    }
    return n_pix ? total / static_cast<double>(n_pix) : 0.0;
}

/// Mean over pixels of sum_i w_i (1 - n_i . N_D) with N_D the depth-derived normal map.
inline double normal_consistency(const RenderOutput& r, const Image& depth_normal) {
    if (r.offsets.empty()) throw InvalidParameter("normal consistency needs captured contributions");
    const std::size_t n_pix = r.offsets.size() - 1;
    if (depth_normal.channels() != 3 || static_cast<std::size_t>(depth_normal.height()) * depth_normal.width() != n_pix) {
        throw ShapeError("normal map does not match the render");
    }
    const auto nd = depth_normal.data();
    double total = 0.0;
    for (std::size_t p = 0; p < n_pix; ++p) {
        const Vec3 n(nd[3 * p], nd[3 * p + 1], nd[3 * p + 2]);
        for (std::size_t k = r.offsets[p]; k < r.offsets[p + 1]; ++k) {
            const auto& c = r.contribs[k];
            total += c.weight * (1.0 - c.normal.dot(n));
        }
    }
    return n_pix ? total / static_cast<double>(n_pix) : 0.0;
}

/// L = L1(I^a, I) + l3 D-SSIM(I^r, I) + l1 L_d + l2 L_n for a render captured
/// with contributions. `adjusted` is the appearance-corrected image I^a.
inline LossBreakdown compute_loss(const RenderOutput& r, const Image& adjusted, const Image& rendered,
                                  const Image& gt, const LossWeights& w) {
    require_same_shape(adjusted, gt, "compute_loss");
    require_same_shape(rendered, gt, "compute_loss");
    LossBreakdown b;
    b.l1 = mean_abs_error(adjusted, gt);
    b.dssim = metrics::d_ssim(rendered, gt);
    b.color = b.l1 + w.dssim * b.dssim;
    b.depth = depth_distortion(r);
    b.normal = normal_consistency(r, depth_to_normal(r.depth, r.intrinsics));
    b.total = b.color + w.depth * b.depth + w.normal * b.normal;
    return b;
}

}  // namespace cellgs
