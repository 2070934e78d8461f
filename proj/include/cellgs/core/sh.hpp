#pragma once

#include <array>
#include <span>

#include "cellgs/math.hpp"

namespace cellgs {

// Real spherical-harmonic constants in the splat-file convention
// (Condon-Shortley phase folded into the signs).
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kShC2 = {1.0925484305920792, -1.0925484305920792,
                                                0.31539156525252005, -1.0925484305920792,
                                                0.5462742152960396};
inline constexpr std::array<double, 7> kShC3 = {-0.5900435899266435, 2.890611442640554,
                                                 -0.4570457994644658, 0.3731763325901154,
                                                 -0.4570457994644658, 1.445305721320277,
                                                 -0.5900435899266435};

using ShBasis = std::array<double, 16>;
using ShBasisGrad = std::array<Vec3, 16>;

/// Evaluates the basis for a unit direction; optionally the gradient of each
/// basis function with respect to the (already unit) direction components.
inline void sh_basis(int degree, const Vec3& dir, ShBasis& b, ShBasisGrad* db = nullptr) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    b[0] = kShC0;
    if (db) (*db)[0] = Vec3::Zero();
    if (degree < 1) return;
    b[1] = -kShC1 * y;
    b[2] = kShC1 * z;
    b[3] = -kShC1 * x;
    if (db) {
        (*db)[1] = Vec3(0.0, -kShC1, 0.0);
        (*db)[2] = Vec3(0.0, 0.0, kShC1);
        (*db)[3] = Vec3(-kShC1, 0.0, 0.0);
    }
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    b[4] = kShC2[0] * x * y;
    b[5] = kShC2[1] * y * z;
    b[6] = kShC2[2] * (2.0 * zz - xx - yy);
    b[7] = kShC2[3] * x * z;
    b[8] = kShC2[4] * (xx - yy);
    if (db) {
        (*db)[4] = kShC2[0] * Vec3(y, x, 0.0);
        (*db)[5] = kShC2[1] * Vec3(0.0, z, y);
        (*db)[6] = kShC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
        (*db)[7] = kShC2[3] * Vec3(z, 0.0, x);
        (*db)[8] = kShC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    }
    if (degree < 3) return;
    b[9] = kShC3[0] * y * (3.0 * xx - yy);
    b[10] = kShC3[1] * x * y * z;
    b[11] = kShC3[2] * y * (4.0 * zz - xx - yy);
    b[12] = kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = kShC3[4] * x * (4.0 * zz - xx - yy);
    b[14] = kShC3[5] * z * (xx - yy);
    b[15] = kShC3[6] * x * (xx - 3.0 * yy);
    if (db) {
        (*db)[9] = kShC3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
        (*db)[10] = kShC3[1] * Vec3(y * z, x * z, x * y);
        (*db)[11] = kShC3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
        (*db)[12] = kShC3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
        (*db)[13] = kShC3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
        (*db)[14] = kShC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
        (*db)[15] = kShC3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
    }
}

/// Degree inferred from the coefficient count, or -1 if the count is not a square.
inline int sh_degree_for_count(std::size_t count) {
    for (int d = 0; d <= 3; ++d) {
        if (static_cast<std::size_t>((d + 1) * (d + 1)) == count) return d;
    }
    return -1;
}

/// View-dependent color: max(sum_j basis_j(dir) * coeff_j + 0.5, 0) per channel.
inline Vec3 eval_sh_color(std::span<const Vec3> coeffs, const Vec3& view_dir) {
    const int degree = sh_degree_for_count(coeffs.size());
    if (degree < 0) throw InvalidParameter("SH coefficient count is not (deg+1)^2 for deg <= 3");
    ShBasis b;
    sh_basis(degree, view_dir, b);
    Vec3 rgb = Vec3::Constant(0.5);
    for (std::size_t j = 0; j < coeffs.size(); ++j) rgb += b[j] * coeffs[j];
    return rgb.cwiseMax(0.0);
}

/// Constant coefficient that reproduces `rgb` in every direction.
inline Vec3 rgb_to_sh_dc(const Vec3& rgb) { return (rgb.array() - 0.5) / kShC0; }

}  // namespace cellgs
