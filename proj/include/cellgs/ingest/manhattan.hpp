#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cellgs/ingest/scene.hpp"

namespace cellgs {

struct ManhattanOptions {
    double lowest_fraction = 0.3;     // RANSAC sees the lowest points by Z
    int iterations = 1000;
    double inlier_fraction_of_extent = 0.01;
    double min_inlier_ratio = 0.2;
    std::uint64_t seed = 0;
};

struct ManhattanResult {
    Mat3 rotation = Mat3::Identity();
    SceneModel model;
};

/// Rotates points and cameras by `rot` about the origin. Camera-to-point
/// distances are unchanged.
inline SceneModel apply_rotation(const SceneModel& model, const Mat3& rot) {
    SceneModel out = model;
    for (auto& p : out.points) p.position = rot * p.position;
    for (auto& c : out.cameras) c.pose.rotation = c.pose.rotation * rot.transpose();
    return out;
}

/// Least-squares plane normal (smallest principal axis) of a point set.
inline Vec3 fit_plane_normal(const std::vector<Vec3>& pts, Vec3* centroid = nullptr) {
    Vec3 mean = Vec3::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    if (centroid) *centroid = mean;
    return eig.eigenvectors().col(0).normalized();
}

/// Estimates the ground plane and rotates the model so its normal becomes +Z.
///
/// A PCA pre-rotation levels the dominant plane of the cloud; a RANSAC plane
/// fit over the lowest points then refines the ground normal, which is
/// oriented toward the cameras (or +Z of the PCA frame without cameras).
inline ManhattanResult manhattan_align(const SceneModel& model, const ManhattanOptions& opts = {}) {
    if (model.points.size() < 50) throw AlignmentFailed("manhattan alignment needs at least 50 points");
    std::vector<Vec3> pts;
    pts.reserve(model.points.size());
    for (const auto& p : model.points) pts.push_back(p.position);

    Vec3 cam_mean = Vec3::Zero();
    for (const auto& c : model.cameras) cam_mean += c.center();
    if (!model.cameras.empty()) cam_mean /= static_cast<double>(model.cameras.size());

    Vec3 centroid;
    Vec3 up = fit_plane_normal(pts, &centroid);
    if (!model.cameras.empty()) {
        if (up.dot(cam_mean - centroid) < 0.0) up = -up;
    } else if (up.z() < 0.0) {
        up = -up;
    }
    const Mat3 pre = rotation_between(up, Vec3::UnitZ());

    std::vector<Vec3> rotated;
    rotated.reserve(pts.size());
    double extent = 0.0;
    for (const auto& p : pts) {
        rotated.push_back(pre * p);
        extent = std::max(extent, (p - centroid).norm());
    }
    std::vector<Vec3> low = rotated;
    std::sort(low.begin(), low.end(), [](const Vec3& a, const Vec3& b) { return a.z() < b.z(); });
    low.resize(std::max<std::size_t>(3, static_cast<std::size_t>(opts.lowest_fraction * static_cast<double>(low.size()))));

    const double thresh = opts.inlier_fraction_of_extent * extent;
    std::mt19937_64 rng(opts.seed);
    std::uniform_int_distribution<std::size_t> pick(0, low.size() - 1);
    std::size_t best_count = 0;
    Vec3 best_n = Vec3::UnitZ();
    Vec3 best_p = Vec3::Zero();
    for (int it = 0; it < opts.iterations; ++it) {
        const Vec3& a = low[pick(rng)];
        const Vec3& b = low[pick(rng)];
        const Vec3& c = low[pick(rng)];
        Vec3 n = (b - a).cross(c - a);
        const double len = n.norm();
        if (len < 1e-12) continue;
        n /= len;
        std::size_t count = 0;
        for (const auto& q : low) count += std::abs(n.dot(q - a)) <= thresh ? 1 : 0;
        if (count > best_count) {
            best_count = count;
            best_n = n;
            best_p = a;
        }
    }
    if (static_cast<double>(best_count) < opts.min_inlier_ratio * static_cast<double>(low.size())) {
        throw AlignmentFailed("no ground plane with at least " +
                              std::to_string(static_cast<int>(opts.min_inlier_ratio * 100)) + "% inliers");
    }
    std::vector<Vec3> inliers;
    for (const auto& q : low) {
        if (std::abs(best_n.dot(q - best_p)) <= thresh) inliers.push_back(q);
    }
    Vec3 n = inliers.size() >= 3 ? fit_plane_normal(inliers) : best_n;
    if (n.z() < 0.0) n = -n;  // the PCA frame already faces the cameras

    ManhattanResult result;
    result.rotation = rotation_between(n, Vec3::UnitZ()) * pre;
    result.model = apply_rotation(model, result.rotation);
    return result;
}

}  // namespace cellgs
