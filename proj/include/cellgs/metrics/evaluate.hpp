#pragma once

#include <string>
#include <vector>

#include "cellgs/camera.hpp"
#include "cellgs/metrics/metrics.hpp"
#include "cellgs/parallel.hpp"
#include "cellgs/render/renderer.hpp"

namespace cellgs::metrics {

struct ViewScore {
    int image_id = 0;
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::vector<ViewScore> views;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

/// Renders the field at every view and scores it against the view's image.
inline EvalReport evaluate(const GaussianField& field, const std::vector<const CameraView*>& views,
                           const RenderOptions& opts = {}, ThreadPool* pool = nullptr) {
    EvalReport r;
    for (const auto* v : views) {
        if (v->image.empty()) throw ShapeError("view " + v->name + " has no image to compare against");
        const Image img = render(field, *v, opts, pool).color;
        ViewScore s{v->image_id, v->name, psnr(img, v->image), ssim(img, v->image)};
        r.mean_psnr += s.psnr;
        r.mean_ssim += s.ssim;
        r.views.push_back(std::move(s));
    }
    if (!r.views.empty()) {
        r.mean_psnr /= static_cast<double>(r.views.size());
        r.mean_ssim /= static_cast<double>(r.views.size());
    }
    return r;
}

}  // namespace cellgs::metrics
