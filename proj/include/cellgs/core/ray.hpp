#pragma once

#include <cmath>

#include "cellgs/core/splat.hpp"
#include "cellgs/math.hpp"

namespace cellgs {

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();  // unit length

    static Ray through(const Vec3& origin, const Vec3& toward) {
        return Ray{origin, toward.normalized()};
    }
};

/// Peak of the 1D Gaussian a splat induces along a ray.
struct RayHit {
    double psi = 0.0;     // peak value in [0, 1]
    double t_star = 0.0;  // ray parameter of the peak
};

/// A splat expressed in its own whitened frame: x_g = S^-1 R^T (x - center).
///
/// The whitening matrix is shared by every ray; the whitened origin is shared
/// by every ray leaving the same camera center, so per-pixel evaluation costs
/// one 3x3 product.
struct WhitenedSplat {
    Mat3 whiten;  // S^-1 R^T
    Vec3 origin;  // S^-1 R^T (o - center)
    double origin_sq = 0.0;

    WhitenedSplat(const GaussianSplat& s, const Vec3& ray_origin) {
        const Mat3 r = quat_to_rotation(normalized_quat(s.rotation));
        const Vec3 inv_scale = (-s.log_scale).array().exp();
        whiten = inv_scale.asDiagonal() * r.transpose();
        origin = whiten * (ray_origin - s.center);
        origin_sq = origin.squaredNorm();
    }

    /// Peak along direction d; `dir_g` receives S^-1 R^T d.
    RayHit peak(const Vec3& d, Vec3& dir_g) const {
        dir_g = whiten * d;
        const double b = dir_g.squaredNorm();
        if (b <= 1e-24) return RayHit{0.0, 0.0};
        const double a = origin.dot(dir_g);
        const double m = std::max(0.0, origin_sq - a * a / b);
        return RayHit{std::exp(-0.5 * m), -a / b};
    }
};

/// psi = exp(-1/2 (|r|^2 - (r.d)^2/|d|^2)), t* = -(r.d)/|d|^2 with r, d the
/// ray origin and direction in the splat's whitened frame. Hits at or behind
/// `near` are discarded (psi = 0).
inline RayHit ray_gaussian_peak(const GaussianSplat& splat, const Ray& ray, double near = 0.0) {
    const WhitenedSplat w(splat, ray.origin);
    Vec3 dir_g;
    RayHit hit = w.peak(ray.direction, dir_g);
    if (hit.t_star <= near) hit.psi = 0.0;
    return hit;
}

/// Gradients of psi and t* with respect to the whitened origin r and direction d.
struct PeakGrad {
    Vec3 d_origin;
    Vec3 d_dir;
};

/// Back-propagates dL/dpsi and dL/dt* into the whitened ray.
inline PeakGrad peak_backward(const Vec3& r, const Vec3& d, double psi, double grad_psi,
                              double grad_t) {
    const double a = r.dot(d);
    const double b = d.squaredNorm();
    // dm/dr = 2r - 2a d / b ; dm/dd = -2a r / b + 2a^2 d / b^2 ; dpsi = -psi/2 dm
    const double k = -0.5 * psi * grad_psi;
    PeakGrad g;
    g.d_origin = k * (2.0 * r - (2.0 * a / b) * d) - (grad_t / b) * d;
    g.d_dir = k * ((-2.0 * a / b) * r + (2.0 * a * a / (b * b)) * d) +
              grad_t * (-r / b + (2.0 * a / (b * b)) * d);
    return g;
}

}  // namespace cellgs
