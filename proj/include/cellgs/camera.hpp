#pragma once

#include <cmath>
#include <string>

#include "cellgs/core/ray.hpp"
#include "cellgs/error.hpp"
#include "cellgs/image.hpp"
#include "cellgs/math.hpp"

namespace cellgs {

/// Pinhole intrinsics in pixels. Pixel (x, y) has its center at (x + 0.5, y + 0.5).
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.5;
    double cy = 0.5;
    int width = 1;
    int height = 1;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidParameter("focal lengths must be positive");
        if (width <= 0 || height <= 0) throw InvalidParameter("image size must be positive");
        if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
            throw InvalidParameter("principal point must lie inside the image");
        }
    }

    Vec2 project(const Vec3& cam) const {
        return Vec2(fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy);
    }

    /// Camera-space direction (z = 1) through the center of pixel (x, y).
    Vec3 pixel_direction(int x, int y) const {
        return Vec3((x + 0.5 - cx) / fx, (y + 0.5 - cy) / fy, 1.0);
    }

    friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

/// World-to-camera rigid transform: x_cam = rotation * x_world + translation.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
    Vec3 center() const { return -rotation.transpose() * translation; }

    static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ()) {
        const Vec3 forward = (target - eye).normalized();
        Vec3 right = forward.cross(up);
        if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitY());
        right.normalize();
        const Vec3 down = forward.cross(right);
        Pose p;
        p.rotation.row(0) = right.transpose();
        p.rotation.row(1) = down.transpose();
        p.rotation.row(2) = forward.transpose();
        p.translation = -p.rotation * eye;
        return p;
    }

    friend bool operator==(const Pose&, const Pose&) = default;
};

struct CameraView {
    int image_id = 0;
    std::string name;
    Intrinsics intrinsics;
    Pose pose;
    Image image;  // H x W x 3 in [0, 1]; may be empty before images are loaded

    int width() const noexcept { return intrinsics.width; }
    int height() const noexcept { return intrinsics.height; }
    Vec3 center() const { return pose.center(); }

    Ray pixel_ray(int x, int y) const {
        const Vec3 d = pose.rotation.transpose() * intrinsics.pixel_direction(x, y);
        return Ray{center(), d.normalized()};
    }

    void validate() const {
        intrinsics.validate();
        const Mat3 err = pose.rotation * pose.rotation.transpose() - Mat3::Identity();
        if (err.cwiseAbs().maxCoeff() > 1e-6 || pose.rotation.determinant() < 0.0) {
            throw InvalidParameter("camera " + std::to_string(image_id) +
                                   ": pose rotation is not orthonormal");
        }
    }
};

}  // namespace cellgs
