#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "cellgs/camera.hpp"
#include "cellgs/core/sh.hpp"
#include "cellgs/parallel.hpp"
#include "cellgs/render/renderer.hpp"
#include "cellgs/train/loss.hpp"
#include "cellgs/train/params.hpp"

namespace cellgs {

/// Color-loss gradient reaching one splat at one pixel, expressed at the
/// splat's projected center (pixels).
struct PixelSplatGrad {
    int splat = 0;
    Vec2 grad = Vec2::Zero();
};

/// Per-view inputs of the densification statistic.
struct ViewGradient {
    std::vector<Mat23> jacobian;        // d(projected center)/d(center), per splat
    std::vector<PixelSplatGrad> samples;
    std::vector<double> screen_radius;  // bounding radius / max(W, H), 0 when culled
};

namespace detail {

/// Per-splat sums over the pixels of one tile.
struct SplatAccum {
    Vec3 g_origin = Vec3::Zero();  // dL/d(whitened ray origin)
    Mat3 g_whiten = Mat3::Zero();  // direction part of dL/d(S^-1 R^T)
    Vec3 g_color = Vec3::Zero();
    Vec3 g_normal = Vec3::Zero();  // camera space
    double g_alpha = 0.0;
};

}  // namespace detail

/// Gradients of the loss with respect to every splat parameter, given
/// dL/d(rendered color). The depth-distortion and normal-consistency terms
/// are differentiated here; N_D is treated as a constant.
///
/// `render` must come from render() with contribution capture on the same
/// field, camera and options. Results do not depend on the thread count.
inline FieldGrad backward_render(const GaussianField& field, const CameraView& cam, const RenderOutput& render,
                                 const Image& grad_color, const Image& depth_normal, const LossWeights& weights,
                                 const RenderOptions& opts = {}, ViewGradient* densify = nullptr,
                                 ThreadPool* pool = nullptr) {
    const int w = cam.width(), h = cam.height();
    if (grad_color.height() != h || grad_color.width() != w || grad_color.channels() != 3) {
        throw ShapeError("color gradient does not match the camera");
    }
    if (render.offsets.size() != static_cast<std::size_t>(w) * h + 1) {
        throw InvalidParameter("backward needs a render with captured contributions");
    }
    const std::size_t n = field.size();
    FieldGrad grad(n, field.sh_degree);
    const std::vector<ViewSplat> view = prepare_view(field, cam, opts);
    const int ts = std::max(1, opts.tile_size);
    const int tiles_x = (w + ts - 1) / ts;
    const auto bins = bin_splats(view, w, h, ts);
    const double inv_pix = 1.0 / (static_cast<double>(w) * h);
    const double kd = weights.depth * inv_pix, kn = weights.normal * inv_pix;
    const Mat3 cam_to_world = cam.pose.rotation.transpose();
    const Mat3& world_to_cam = cam.pose.rotation;
    const Vec3 eye = cam.center();
    const auto& K = cam.intrinsics;

    // color-only center derivatives for the densification statistic
    std::vector<Mat3> color_center_jac;
    if (densify) {
        densify->jacobian.assign(n, Mat23::Zero());
        densify->screen_radius.assign(n, 0.0);
        densify->samples.clear();
        color_center_jac.assign(n, Mat3::Zero());
        const int nc = sh_coeff_count(field.sh_degree);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = field.splats[i];
            const auto& v = view[i];
            const Vec3 c = cam.pose.to_camera(s.center);
            if (c.z() > opts.near) {
                Mat23 jc;
                jc << K.fx / c.z(), 0.0, -K.fx * c.x() / (c.z() * c.z()), 0.0, K.fy / c.z(),
                    -K.fy * c.y() / (c.z() * c.z());
                densify->jacobian[i] = jc * world_to_cam;
            }
            if (v.x1 >= v.x0) {
                densify->screen_radius[i] = 0.5 * std::max(v.x1 - v.x0, v.y1 - v.y0) / std::max(w, h);
            }
            ShBasis b;
            ShBasisGrad db;
            sh_basis(field.sh_degree, v.view_dir, b, &db);
            const double dist = (s.center - eye).norm();
            if (dist <= 0.0) continue;
            const Mat3 proj = (Mat3::Identity() - v.view_dir * v.view_dir.transpose()) / dist;
            for (int ch = 0; ch < 3; ++ch) {
                if (v.clamped[ch]) continue;
                Vec3 d_dir = Vec3::Zero();
                for (int j = 0; j < nc; ++j) d_dir += s.sh[static_cast<std::size_t>(j)][ch] * db[static_cast<std::size_t>(j)];
                color_center_jac[i].row(ch) = (proj * d_dir).transpose();
            }
        }
    }

    std::vector<std::vector<detail::SplatAccum>> tile_acc(bins.size());
    std::vector<std::vector<PixelSplatGrad>> tile_samples(densify ? bins.size() : 0);

    auto run_tile = [&](std::size_t tile) {
        const auto& bin = bins[tile];
        if (bin.empty()) return;
        auto& acc = tile_acc[tile];
        acc.assign(bin.size(), {});
        thread_local std::vector<int> local;
        if (local.size() < n) local.assign(n, -1);
        for (std::size_t k = 0; k < bin.size(); ++k) local[static_cast<std::size_t>(bin[k])] = static_cast<int>(k);

        std::vector<double> trans, e_depth;
        const int tx = static_cast<int>(tile) % tiles_x, ty = static_cast<int>(tile) / tiles_x;
        for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                const auto contribs = render.pixel(y, x);
                if (contribs.empty()) continue;
                const Vec3 G(grad_color(y, x, 0), grad_color(y, x, 1), grad_color(y, x, 2));
                const Vec3 nd(depth_normal(y, x, 0), depth_normal(y, x, 1), depth_normal(y, x, 2));
                const Vec3 dc = K.pixel_direction(x, y);
                const double len = dc.norm();
                const Vec3 d = cam_to_world * (dc / len);
                const double z_per_t = 1.0 / len;
                const std::size_t m = contribs.size();

                trans.resize(m);
                e_depth.resize(m);
                double t = 1.0, w_total = 0.0, wz_total = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    trans[i] = t;
                    t *= 1.0 - contribs[i].alpha_psi;
                    w_total += contribs[i].weight;
                    wz_total += contribs[i].weight * contribs[i].depth;
                }
                // e_i = sum_j w_j |z_i - z_j| over the depth-sorted list
                double w_before = 0.0, wz_before = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const auto& c = contribs[i];
                    const double w_after = w_total - w_before - c.weight;
                    const double wz_after = wz_total - wz_before - c.weight * c.depth;
                    e_depth[i] = c.depth * w_before - wz_before + wz_after - c.depth * w_after;
                    w_before += c.weight;
                    wz_before += c.weight * c.depth;
                }

                double tail = 0.0, tail_color = 0.0;
                double w_after = 0.0;
                for (std::size_t i = m; i-- > 0;) {
                    const auto& c = contribs[i];
                    const ViewSplat& v = view[static_cast<std::size_t>(c.splat)];
                    auto& a = acc[static_cast<std::size_t>(local[static_cast<std::size_t>(c.splat)])];
                    const double g = c.alpha_psi;
                    const double a_color = G.dot(v.color - opts.background);
                    const double a_i = a_color + kd * e_depth[i] + kn * (1.0 - c.normal.dot(nd));
                    const double d_g = trans[i] * (a_i - tail);
                    tail = a_i * g + (1.0 - g) * tail;

                    const double w_before_i = w_total - w_after - c.weight;
                    const double d_z = kd * c.weight * (w_before_i - w_after);
                    w_after += c.weight;

                    a.g_alpha += c.psi * d_g;
                    a.g_color += c.weight * G;
                    a.g_normal -= kn * c.weight * nd;

                    Vec3 dir_g;
                    v.frame.peak(d, dir_g);
                    const PeakGrad pg = peak_backward(v.frame.origin, dir_g, c.psi, v.alpha * d_g, d_z * z_per_t);
                    a.g_origin += pg.d_origin;
                    a.g_whiten += pg.d_dir * d.transpose();

                    if (densify) {
                        const double d_g_color = trans[i] * (a_color - tail_color);
                        tail_color = a_color * g + (1.0 - g) * tail_color;
                        const PeakGrad pc = peak_backward(v.frame.origin, dir_g, c.psi, v.alpha * d_g_color, 0.0);
                        const Vec3 g3 = -v.frame.whiten.transpose() * pc.d_origin +
                                        color_center_jac[static_cast<std::size_t>(c.splat)].transpose() * (c.weight * G);
                        const Vec3 g3c = world_to_cam * g3;
                        const double zc = cam.pose.to_camera(field.splats[static_cast<std::size_t>(c.splat)].center).z();
                        if (zc > opts.near) {
                            tile_samples[tile].push_back({c.splat, Vec2(g3c.x() * zc / K.fx, g3c.y() * zc / K.fy)});
                        }
                    }
                }
            }
        }
        for (int si : bin) local[static_cast<std::size_t>(si)] = -1;
    };
    if (pool) {
        pool->parallel_for(bins.size(), run_tile);
    } else {
        for (std::size_t t = 0; t < bins.size(); ++t) run_tile(t);
    }

    // reduce per-tile sums in tile order
    std::vector<detail::SplatAccum> total(n);
    for (std::size_t tile = 0; tile < bins.size(); ++tile) {
        const auto& acc = tile_acc[tile];
        for (std::size_t k = 0; k < acc.size(); ++k) {
            auto& dst = total[static_cast<std::size_t>(bins[tile][k])];
            dst.g_origin += acc[k].g_origin;
            dst.g_whiten += acc[k].g_whiten;
            dst.g_color += acc[k].g_color;
            dst.g_normal += acc[k].g_normal;
            dst.g_alpha += acc[k].g_alpha;
        }
        if (densify) {
            densify->samples.insert(densify->samples.end(), tile_samples[tile].begin(), tile_samples[tile].end());
        }
    }

    const int nc = sh_coeff_count(field.sh_degree);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& acc = total[i];
        const auto& s = field.splats[i];
        const auto& v = view[i];
        double* out = grad.splat(i);
        const Mat3& M = v.frame.whiten;

        // whitened origin r = M (eye - center)
        const Mat3 g_M = acc.g_origin * (eye - s.center).transpose() + acc.g_whiten;
        Vec3 g_center = -M.transpose() * acc.g_origin;
        const Vec3 inv_scale = (-s.log_scale).array().exp();
        for (int r = 0; r < 3; ++r) out[layout::kLogScale + r] = -(g_M.row(r).dot(M.row(r)));
        Mat3 g_R = (inv_scale.asDiagonal() * g_M).transpose();
        g_R.col(v.normal_axis) += v.normal_sign * (world_to_cam.transpose() * acc.g_normal);
        const Vec4 g_q = rotation_grad_to_quat(s.rotation, g_R);
        for (int r = 0; r < 4; ++r) out[layout::kRotation + r] = g_q[r];

        out[layout::kOpacity] = acc.g_alpha * v.alpha * (1.0 - v.alpha);

        Vec3 g_raw = acc.g_color;
        for (int ch = 0; ch < 3; ++ch) {
            if (v.clamped[ch]) g_raw[ch] = 0.0;
        }
        if (g_raw != Vec3::Zero()) {
            ShBasis b;
            ShBasisGrad db;
            sh_basis(field.sh_degree, v.view_dir, b, &db);
            Vec3 g_dir = Vec3::Zero();
            for (int j = 0; j < nc; ++j) {
                const auto jj = static_cast<std::size_t>(j);
                for (int ch = 0; ch < 3; ++ch) out[layout::kSh + 3 * j + ch] = b[jj] * g_raw[ch];
                g_dir += s.sh[jj].dot(g_raw) * db[jj];
            }
            const double dist = (s.center - eye).norm();
            if (dist > 0.0) g_center += (g_dir - v.view_dir * v.view_dir.dot(g_dir)) / dist;
        }
        for (int r = 0; r < 3; ++r) out[layout::kCenter + r] = g_center[r];
    }
    return grad;
}

/// Splat-wise accumulation of the view-position gradient magnitude.
struct DensifyStats {
    std::vector<double> accum;       // sum over views of sum over pixels of |g J|
    std::vector<double> classic;     // sum over views of |sum over pixels of g J|
    std::vector<int> count;          // views in which the splat received a sample
    std::vector<Vec3> direction;     // sum of g J, used to nudge clones
    std::vector<double> max_radius;  // largest screen radius seen (fraction of image size)

    explicit DensifyStats(std::size_t n = 0) { reset(n); }

    void reset(std::size_t n) {
        accum.assign(n, 0.0);
        classic.assign(n, 0.0);
        count.assign(n, 0);
        direction.assign(n, Vec3::Zero());
        max_radius.assign(n, 0.0);
    }
    std::size_t size() const { return accum.size(); }

    double mean(std::size_t i) const { return count[i] > 0 ? accum[i] / count[i] : 0.0; }
    double mean_classic(std::size_t i) const { return count[i] > 0 ? classic[i] / count[i] : 0.0; }
};

/// Adds sum over pixels of |(dL/dp_v)(dp_v/dx)| per splat. The per-pixel
/// product is formed before the norm, so opposing pixels do not cancel.
/// The norm of the per-view sum is kept alongside as the classical statistic.
inline void accumulate_view_gradient(DensifyStats& stats, const ViewGradient& view) {
    if (view.jacobian.size() != stats.size()) throw ShapeError("densify statistics and view gradient differ in size");
    std::vector<char> touched(stats.size(), 0);
    std::vector<Vec3> sum(stats.size(), Vec3::Zero());
    for (const auto& s : view.samples) {
        const auto i = static_cast<std::size_t>(s.splat);
        const Vec3 v = (s.grad.transpose() * view.jacobian[i]).transpose();
        stats.accum[i] += v.norm();
        sum[i] += v;
        touched[i] = 1;
    }
    for (std::size_t i = 0; i < stats.size(); ++i) {
        if (touched[i]) {
            stats.count[i] += 1;
            stats.classic[i] += sum[i].norm();
            stats.direction[i] += sum[i];
        }
        if (i < view.screen_radius.size()) stats.max_radius[i] = std::max(stats.max_radius[i], view.screen_radius[i]);
    }
}

}  // namespace cellgs
