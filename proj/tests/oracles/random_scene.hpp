#pragma once

#include <random>

#include "cellgs/camera.hpp"
#include "cellgs/core/splat.hpp"

namespace cellgs::fixture {

/// Camera at the origin looking down +Z.
inline CameraView front_camera(int width, int height, double focal, int id = 1) {
    CameraView cam;
    cam.image_id = id;
    cam.intrinsics = Intrinsics{focal, focal, width / 2.0, height / 2.0, width, height};
    return cam;
}

inline Vec4 random_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    return q / q.norm();
}

struct SceneRanges {
    double z_min = 2.0, z_max = 4.0;
    double half_fov = 0.45;  // |x|, |y| <= half_fov * z
    double log_scale_min = std::log(0.08), log_scale_max = std::log(0.35);
    double logit_min = -1.0, logit_max = 2.5;
    double sh_rest = 0.15;
};

/// Random splats in front of front_camera().
inline GaussianField random_field(std::mt19937_64& rng, int count, int sh_degree = 2, const SceneRanges& r = {}) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto lerp = [&](double a, double b) { return a + (b - a) * u(rng); };
    GaussianField f;
    f.sh_degree = sh_degree;
    f.scene_extent = 2.0;
    for (int i = 0; i < count; ++i) {
        GaussianSplat s;
        const double z = lerp(r.z_min, r.z_max);
        s.center = Vec3(lerp(-r.half_fov, r.half_fov) * z, lerp(-r.half_fov, r.half_fov) * z, z);
        for (int k = 0; k < 3; ++k) s.log_scale[k] = lerp(r.log_scale_min, r.log_scale_max);
        s.rotation = random_quat(rng);
        s.opacity_logit = lerp(r.logit_min, r.logit_max);
        s.sh.assign(static_cast<std::size_t>(sh_coeff_count(sh_degree)), Vec3::Zero());
        for (auto& c : s.sh) {
            for (int ch = 0; ch < 3; ++ch) c[ch] = lerp(-r.sh_rest, r.sh_rest);
        }
        for (int ch = 0; ch < 3; ++ch) s.sh[0][ch] = lerp(-1.2, 1.2);
        f.splats.push_back(std::move(s));
    }
    return f;
}

}  // namespace cellgs::fixture
