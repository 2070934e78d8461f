#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "cellgs/camera.hpp"
#include "cellgs/math.hpp"

namespace cellgs {

/// One sparse SfM point and the images that observe it.
struct ScenePoint {
    std::uint64_t id = 0;
    Vec3 position = Vec3::Zero();
    std::array<std::uint8_t, 3> rgb{};
    double error = 0.0;
    std::vector<int> track;  // image ids

    friend bool operator==(const ScenePoint&, const ScenePoint&) = default;
};

struct SceneModel {
    std::vector<CameraView> cameras;
    std::vector<ScenePoint> points;

    /// Index into `cameras` of the given image id, if present.
    std::optional<std::size_t> camera_index(int image_id) const {
        for (std::size_t i = 0; i < cameras.size(); ++i) {
            if (cameras[i].image_id == image_id) return i;
        }
        return std::nullopt;
    }

    std::unordered_map<int, std::size_t> camera_lookup() const {
        std::unordered_map<int, std::size_t> m;
        for (std::size_t i = 0; i < cameras.size(); ++i) m.emplace(cameras[i].image_id, i);
        return m;
    }

    /// Radius of the bounding sphere of the camera centers (centered at their mean).
    double camera_extent() const {
        if (cameras.empty()) return 0.0;
        Vec3 mean = Vec3::Zero();
        for (const auto& c : cameras) mean += c.center();
        mean /= static_cast<double>(cameras.size());
        double r = 0.0;
        for (const auto& c : cameras) r = std::max(r, (c.center() - mean).norm());
        return r;
    }

    /// Throws ParseError-style InvalidParameter when a track references an unknown image.
    void validate() const {
        const auto lookup = camera_lookup();
        for (const auto& p : points) {
            if (!p.position.allFinite()) {
                throw InvalidParameter("point " + std::to_string(p.id) + " is not finite");
            }
            for (int id : p.track) {
                if (!lookup.contains(id)) {
                    throw InvalidParameter("point " + std::to_string(p.id) +
                                           " references missing image " + std::to_string(id));
                }
            }
        }
    }
};

}  // namespace cellgs
