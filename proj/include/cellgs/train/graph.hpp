#pragma once

#include <optional>
#include <vector>

#include "cellgs/appearance/model.hpp"
#include "cellgs/metrics/metrics.hpp"
#include "cellgs/render/depth_normal.hpp"
#include "cellgs/render/renderer.hpp"
#include "cellgs/train/backward.hpp"
#include "cellgs/train/loss.hpp"

namespace cellgs {

struct GraphOptions {
    RenderOptions render;
    bool gradients = true;
    bool densify_samples = false;
    // Normal map to use instead of the one derived from this render's depth.
    const Image* depth_normal = nullptr;
};

struct GraphResult {
    LossBreakdown loss;
    RenderOutput render;
    Image adjusted;                      // I^a (equals the render without an appearance model)
    FieldGrad field_grad;
    std::vector<double> appearance_grad;  // empty without an appearance model
    ViewGradient view_grad;
    Image depth_normal;  // N_D used by the normal term
};

/// dL/dI^a of the mean absolute error term.
inline Image l1_gradient(const Image& adjusted, const Image& gt) {
    Image g(adjusted.height(), adjusted.width(), adjusted.channels());
    const auto a = adjusted.data(), b = gt.data();
    auto out = g.data();
    const double inv = 1.0 / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] > b[i] ? inv : (a[i] < b[i] ? -inv : 0.0);
    }
    return g;
}

/// Full training loss of one view and, optionally, its gradients with
/// respect to the field and the appearance model.
///
/// The L1 term sees the appearance-corrected image; the D-SSIM term sees
/// the raw render, so it never reaches the appearance parameters.
inline GraphResult evaluate_view(const GaussianField& field, const AppearanceModel* appearance, const CameraView& cam,
                                 const Image& gt, const LossWeights& weights, const GraphOptions& opts = {},
                                 ThreadPool* pool = nullptr) {
    GraphResult r;
    RenderOptions ro = opts.render;
    ro.capture_contributions = true;
    r.render = render(field, cam, ro, pool);
    std::optional<AppearanceResult> app;
    if (appearance) {
        app = appearance->forward(r.render.color, cam.image_id);
        r.adjusted = app->adjusted;
    } else {
        r.adjusted = r.render.color;
    }
    const Image normals = opts.depth_normal ? *opts.depth_normal : depth_to_normal(r.render.depth, cam.intrinsics);
    r.depth_normal = normals;
    r.loss.l1 = mean_abs_error(r.adjusted, gt);
    Image grad_rendered;
    r.loss.dssim = metrics::d_ssim(r.render.color, gt, opts.gradients ? &grad_rendered : nullptr);
    r.loss.color = r.loss.l1 + weights.dssim * r.loss.dssim;
    r.loss.depth = depth_distortion(r.render);
    r.loss.normal = normal_consistency(r.render, normals);
    r.loss.total = r.loss.color + weights.depth * r.loss.depth + weights.normal * r.loss.normal;
    if (!std::isfinite(r.loss.total)) throw NanGuard("loss is not finite");
    if (!opts.gradients) return r;

    for (double& v : grad_rendered.data()) v *= weights.dssim;
    const Image g_adjusted = l1_gradient(r.adjusted, gt);
    if (appearance) {
        r.appearance_grad.assign(appearance->param_count(), 0.0);
        const Image through = appearance->backward(*app, g_adjusted, r.appearance_grad);
        auto dst = grad_rendered.data();
        const auto src = through.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        check_finite(r.appearance_grad, "appearance");
    } else {
        auto dst = grad_rendered.data();
        const auto src = g_adjusted.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    r.field_grad = backward_render(field, cam, r.render, grad_rendered, normals, weights, ro,
                                   opts.densify_samples ? &r.view_grad : nullptr, pool);
    check_finite(r.field_grad);
    return r;
}

}  // namespace cellgs
