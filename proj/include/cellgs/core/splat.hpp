#pragma once

#include <cmath>
#include <vector>

#include "cellgs/error.hpp"
#include "cellgs/math.hpp"

namespace cellgs {

inline constexpr int kMaxShDegree = 3;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// One Gaussian primitive in its unconstrained parameterization.
struct GaussianSplat {
    Vec3 center = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);  // (w, x, y, z), normalized on use
    double opacity_logit = 0.0;
    std::vector<Vec3> sh;  // (degree + 1)^2 RGB coefficients

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }

    friend bool operator==(const GaussianSplat&, const GaussianSplat&) = default;
};

struct GaussianField {
    std::vector<GaussianSplat> splats;
    int sh_degree = 2;
    double scene_extent = 1.0;

    std::size_t size() const noexcept { return splats.size(); }
    bool empty() const noexcept { return splats.empty(); }

    /// Throws InvalidParameter when a field-level invariant is broken.
    void validate() const {
        if (sh_degree < 0 || sh_degree > kMaxShDegree) {
            throw InvalidParameter("sh_degree must be in [0, 3]");
        }
        if (!(scene_extent > 0.0)) throw InvalidParameter("scene_extent must be positive");
        const auto n = static_cast<std::size_t>(sh_coeff_count(sh_degree));
        for (const auto& s : splats) {
            if (s.sh.size() != n) throw InvalidParameter("splat SH length does not match sh_degree");
        }
    }

    friend bool operator==(const GaussianField&, const GaussianField&) = default;
};

/// Sigma = R S S^T R^T with S = diag(exp(log_scale)).
inline Mat3 build_covariance(const Vec3& log_scale, const Vec4& quat) {
    const Mat3 r = quat_to_rotation(normalized_quat(quat));
    const Vec3 s2 = (2.0 * log_scale).array().exp();
    Mat3 cov = r * s2.asDiagonal() * r.transpose();
    return 0.5 * (cov + cov.transpose());
}

/// Index of the shortest scale axis; ties resolve to the lowest index.
inline int shortest_axis(const Vec3& log_scale) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
        if (log_scale[i] < log_scale[best]) best = i;
    }
    return best;
}

/// Radius of the sphere (in world units) outside which alpha * psi < min_weight.
inline double cutoff_radius(const GaussianSplat& s, double min_weight) {
    const double a = s.opacity();
    if (a <= min_weight) return 0.0;
    const double k = std::sqrt(2.0 * std::log(a / min_weight));
    return k * std::exp(s.log_scale.maxCoeff());
}

}  // namespace cellgs
