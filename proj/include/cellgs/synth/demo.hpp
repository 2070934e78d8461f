#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cellgs/core/sh.hpp"
#include "cellgs/core/splat.hpp"
#include "cellgs/ingest/colmap.hpp"
#include "cellgs/ingest/ply.hpp"
#include "cellgs/ingest/scene_io.hpp"
#include "cellgs/render/pose_file.hpp"
#include "cellgs/render/renderer.hpp"

namespace cellgs::synth {

struct DemoOptions {
    int splats = 64;
    int grid = 5;             // grid x grid cameras
    int size = 64;            // image width and height
    double focal = 64.0;
    double half_width = 1.0;  // splat centers in [-h, h]^2
    double camera_half_width = 1.3;
    double height = 2.5;
    double jitter = 0.05;     // point offset, fraction of the scene extent
    double relief = 0.0;      // height range of the splat centers
    double thickness = 0.005; // scale along the table normal
    std::uint64_t seed = 0;
};

struct DemoScene {
    GaussianField truth;
    SceneModel model;  // cameras carry rendered images; one point per splat
    Split split;
    std::vector<CameraView> novel;  // poses on cell boundaries, absent from the model
};

/// Rounds to the 8-bit grid so in-memory images equal their PNG files.
inline Image quantize(const Image& img) {
    Image q = img;
    for (double& v : q.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    return q;
}

inline CameraView demo_camera(int id, const Vec3& eye, const Vec3& target, const DemoOptions& o) {
    CameraView c;
    c.image_id = id;
    c.intrinsics = Intrinsics{o.focal, o.focal, o.size / 2.0, o.size / 2.0, o.size, o.size};
    c.pose = Pose::look_at(eye, target, Vec3::UnitY());
    return c;
}

/// Flat splats scattered over a square tabletop at z ~ 0, viewed by a grid
/// of downward-looking cameras tilted toward the middle.
inline DemoScene make_demo(const DemoOptions& o = {}) {
    if (o.splats < 1 || o.grid < 2 || o.size < 8) throw InvalidParameter("demo scene is too small");
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    DemoScene d;
    d.truth.sh_degree = 2;
    const double h = o.half_width;
    for (int i = 0; i < o.splats; ++i) {
        GaussianSplat s;
        // flat splats lying on the table, rotated about the vertical axis only
        s.center = Vec3((2.0 * u(rng) - 1.0) * h, (2.0 * u(rng) - 1.0) * h, o.relief * u(rng));
        s.log_scale = Vec3(std::log(0.07 + 0.12 * u(rng)), std::log(0.07 + 0.12 * u(rng)), std::log(o.thickness));
        const double yaw = 2.0 * std::numbers::pi * u(rng);
        s.rotation = Vec4(std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw));
        s.opacity_logit = logit(0.8 + 0.18 * u(rng));
        s.sh.assign(static_cast<std::size_t>(sh_coeff_count(d.truth.sh_degree)), Vec3::Zero());
        s.sh[0] = rgb_to_sh_dc(Vec3(0.1 + 0.85 * u(rng), 0.1 + 0.85 * u(rng), 0.1 + 0.85 * u(rng)));
        d.truth.splats.push_back(std::move(s));
    }
    Vec3 mean = Vec3::Zero();
    for (const auto& s : d.truth.splats) mean += s.center;
    mean /= static_cast<double>(o.splats);
    double r = 0.0;
    for (const auto& s : d.truth.splats) r = std::max(r, (s.center - mean).norm());
    d.truth.scene_extent = r;

    const double ch = o.camera_half_width;
    int id = 1;
    for (int gy = 0; gy < o.grid; ++gy) {
        for (int gx = 0; gx < o.grid; ++gx) {
            const double x = -ch + 2.0 * ch * gx / (o.grid - 1), y = -ch + 2.0 * ch * gy / (o.grid - 1);
            CameraView c = demo_camera(id, Vec3(x, y, o.height), Vec3(0.5 * x, 0.5 * y, 0.0), o);
            c.name = "view_" + std::string(id < 10 ? "0" : "") + std::to_string(id) + ".png";
            c.image = quantize(render(d.truth, c).color);
            // one held-out view per row and per column
            (((gx + 2 * gy) % o.grid == 2) ? d.split.test : d.split.train).push_back(id);
            d.model.cameras.push_back(std::move(c));
            ++id;
        }
    }

    // sparse points: jittered centers with random colors, tracked by the cameras that see them
    for (std::size_t i = 0; i < d.truth.size(); ++i) {
        ScenePoint p;
        p.id = i + 1;
        const Vec3 dir = Vec3(n01(rng), n01(rng), n01(rng)).normalized();
        p.position = d.truth.splats[i].center + o.jitter * r * dir;
        for (auto& ch8 : p.rgb) ch8 = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 255)(rng));
        for (const auto& c : d.model.cameras) {
            const Vec3 pc = c.pose.to_camera(p.position);
            if (pc.z() <= 0.0) continue;
            const Vec2 px = c.intrinsics.project(pc);
            if (px.x() >= 0 && px.y() >= 0 && px.x() < c.width() && px.y() < c.height()) p.track.push_back(c.image_id);
        }
        d.model.points.push_back(std::move(p));
    }

    // novel poses straddling the x = 0 and y = 0 cell boundaries
    const std::vector<Vec3> eyes = {{0.0, 0.0, 2.2}, {0.0, 0.55, 2.4}, {0.55, 0.0, 2.4}, {0.0, -0.6, 2.3}, {-0.6, 0.0, 2.3}};
    for (std::size_t i = 0; i < eyes.size(); ++i) {
        const Vec3 t(0.3 * eyes[i].x(), 0.3 * eyes[i].y(), 0.0);
        CameraView c = demo_camera(1000 + static_cast<int>(i), eyes[i], t, o);
        c.name = "novel_" + std::to_string(i);
        c.image = render(d.truth, c).color;
        d.novel.push_back(std::move(c));
    }
    return d;
}

/// Copy of `truth` with every center moved by `jitter * scene_extent` in a
/// random direction and every color replaced by a random one (view-dependent
/// terms cleared). Shapes and opacities are kept.
inline GaussianField perturb_truth(const GaussianField& truth, double jitter, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    GaussianField f = truth;
    for (auto& s : f.splats) {
        const Vec3 dir = Vec3(n01(rng), n01(rng), n01(rng)).normalized();
        s.center += jitter * truth.scene_extent * dir;
        for (auto& c : s.sh) c.setZero();
        s.sh[0] = rgb_to_sh_dc(Vec3(u(rng), u(rng), u(rng)));
    }
    return f;
}

/// Layout:
///   sparse/            COLMAP text model
///   images/            PNG views
///   split.json         20 train / 5 test image names
///   ground_truth.ply   the field that produced the images
///   novel_poses.txt    boundary-straddling poses (trajectory file)
inline void write_demo(const DemoScene& d, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    write_colmap_text(d.model, dir / "sparse");
    for (const auto& c : d.model.cameras) write_png(dir / "images" / c.name, c.image);
    write_split(dir / "split.json", d.split, d.model);
    export_field(d.truth, dir / "ground_truth.ply");
    write_poses(dir / "novel_poses.txt", d.novel);
}

}  // namespace cellgs::synth
