#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "cellgs/error.hpp"

namespace cellgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;  // quaternions are stored (w, x, y, z)
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

/// Normalizes a (w, x, y, z) quaternion. Throws on a zero-norm input.
inline Vec4 normalized_quat(const Vec4& q) {
    const double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw InvalidParameter("quaternion has zero or non-finite norm");
    }
    return q / n;
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 quat_to_rotation(const Vec4& unit_q) {
    const double w = unit_q[0], x = unit_q[1], y = unit_q[2], z = unit_q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

/// Pulls dL/dR back to the raw (unnormalized) quaternion q.
inline Vec4 rotation_grad_to_quat(const Vec4& q, const Mat3& g) {
    const double n = q.norm();
    const Vec4 u = q / n;
    const double w = u[0], x = u[1], y = u[2], z = u[3];
    Vec4 gu;
    gu[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) +
                   x * g(2, 1));
    gu[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) +
                   z * g(2, 0) + w * g(2, 1) - 2.0 * x * g(2, 2));
    gu[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                   w * g(2, 0) + z * g(2, 1) - 2.0 * y * g(2, 2));
    gu[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) -
                   2.0 * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return (gu - u * u.dot(gu)) / n;
}

/// Quaternion (w, x, y, z) of a rotation matrix.
inline Vec4 rotation_to_quat(const Mat3& r) {
    const Eigen::Quaterniond q(r);
    Vec4 out(q.w(), q.x(), q.y(), q.z());
    if (out[0] < 0.0) out = -out;
    return out / out.norm();
}

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
inline Mat3 rotation_between(const Vec3& from, const Vec3& to) {
    const Vec3 a = from.normalized();
    const Vec3 b = to.normalized();
    const Vec3 axis = a.cross(b);
    const double s = axis.norm();
    const double c = a.dot(b);
    if (s < 1e-15) {
        if (c > 0.0) return Mat3::Identity();
        // 180 degrees: any axis orthogonal to a
        Vec3 ortho = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
        ortho = (ortho - a * a.dot(ortho)).normalized();
        return Eigen::AngleAxisd(M_PI, ortho).toRotationMatrix();
    }
    return Eigen::AngleAxisd(std::atan2(s, c), axis / s).toRotationMatrix();
}

}  // namespace cellgs
