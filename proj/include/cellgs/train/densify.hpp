#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "cellgs/core/splat.hpp"
#include "cellgs/error.hpp"
#include "cellgs/math.hpp"
#include "cellgs/train/backward.hpp"
#include "cellgs/train/config.hpp"

namespace cellgs {

struct DensifyReport {
    int iteration = 0;
    std::size_t before = 0;
    std::size_t after = 0;
    int cloned = 0;
    int split = 0;
    int pruned = 0;
    bool opacity_reset = false;
    double classic_ratio = 0.0;    // fraction of splats whose classical statistic reached the threshold
    double abs_threshold = 0.0;    // quantile threshold applied to the accumulated-norm statistic
    // origin[j]: index in the old field that splat j continues, -1 if new.
    std::vector<int> origin;
};

inline bool is_densify_iteration(const TrainConfig& cfg, int iteration) {
    return iteration >= cfg.densify_start && iteration <= cfg.densify_stop && iteration % cfg.densify_interval == 0;
}

inline bool is_opacity_reset_iteration(const TrainConfig& cfg, int iteration) {
    return iteration > 0 && iteration <= cfg.densify_stop && iteration % cfg.opacity_reset_interval == 0;
}

/// Clamps every opacity to at most `cfg.reset_opacity` in logit space.
/// Returns the indices that changed.
inline std::vector<std::size_t> reset_opacities(GaussianField& field, double max_opacity) {
    const double cap = logit(max_opacity);
    std::vector<std::size_t> changed;
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (field.splats[i].opacity_logit > cap) {
            field.splats[i].opacity_logit = cap;
            changed.push_back(i);
        }
    }
    return changed;
}

/// Linear-interpolated quantile, q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Which splats densify. A splat is selected when its classical statistic
/// reaches the threshold, or when its accumulated-norm statistic is in the
/// top fraction of the field equal to the classical selection ratio.
inline std::vector<char> densify_selection(const DensifyStats& stats, double threshold, DensifyReport* rep = nullptr) {
    const std::size_t n = stats.size();
    std::vector<char> sel(n, 0);
    if (n == 0) return sel;
    std::vector<double> abs(n);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        abs[i] = stats.mean(i);
        if (stats.count[i] > 0 && stats.mean_classic(i) >= threshold) {
            sel[i] = 1;
            ++hits;
        }
    }
    const double ratio = static_cast<double>(hits) / static_cast<double>(n);
    const double q = hits > 0 ? quantile(abs, 1.0 - ratio) : std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (stats.count[i] > 0 && abs[i] >= q) sel[i] = 1;
    }
    if (rep) {
        rep->classic_ratio = ratio;
        rep->abs_threshold = q;
    }
    return sel;
}

/// Clone/split splats selected by densify_selection,
/// prune faint or oversized ones, optionally reset opacities, then reset stats.
inline DensifyReport densify_and_prune(GaussianField& field, DensifyStats& stats, const TrainConfig& cfg, int iteration,
                                       std::mt19937_64& rng) {
    if (!is_densify_iteration(cfg, iteration)) {
        throw InvalidParameter("densify_and_prune called outside the densification schedule at iteration " +
                               std::to_string(iteration));
    }
    if (stats.size() != field.size()) throw ShapeError("densify statistics do not match the field");
    DensifyReport rep;
    rep.iteration = iteration;
    rep.before = field.size();

    const double cutoff = cfg.clone_scale_fraction * field.scene_extent;
    const double shrink = std::log(cfg.split_scale_divisor);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::vector<char> selected = densify_selection(stats, cfg.grad_threshold, &rep);

    std::vector<GaussianSplat> out;
    std::vector<int> origin;
    std::vector<double> radius;
    std::vector<GaussianSplat> added;
    out.reserve(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
        const GaussianSplat& s = field.splats[i];
        const bool hot = selected[i] != 0;
        const double max_scale = std::exp(s.log_scale.maxCoeff());
        if (hot && max_scale >= cutoff) {
            // split: parent is dropped
            const Mat3 r = quat_to_rotation(normalized_quat(s.rotation));
            const Vec3 sc = s.scale();
            for (int c = 0; c < 2; ++c) {
                GaussianSplat child = s;
                const Vec3 z(normal(rng), normal(rng), normal(rng));
                child.center = s.center + r * sc.cwiseProduct(z);
                child.log_scale = s.log_scale.array() - shrink;
                added.push_back(std::move(child));
            }
            ++rep.split;
            continue;
        }
        out.push_back(s);
        origin.push_back(static_cast<int>(i));
        radius.push_back(stats.max_radius[i]);
        if (hot) {
            GaussianSplat clone = s;
            const Vec3 d = stats.direction[i];
            if (d.norm() > 0.0) clone.center -= 0.5 * max_scale * d.normalized();
            added.push_back(std::move(clone));
            ++rep.cloned;
        }
    }
    for (auto& s : added) {
        out.push_back(std::move(s));
        origin.push_back(-1);
        radius.push_back(0.0);
    }

    const bool after_first_reset = iteration > cfg.opacity_reset_interval;
    std::vector<GaussianSplat> kept;
    kept.reserve(out.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        const bool faint = out[j].opacity() < cfg.prune_opacity;
        const bool huge = after_first_reset && radius[j] > cfg.screen_prune_fraction;
        if (faint || huge) {
            ++rep.pruned;
            continue;
        }
        kept.push_back(std::move(out[j]));
        rep.origin.push_back(origin[j]);
    }
    field.splats = std::move(kept);

    if (is_opacity_reset_iteration(cfg, iteration)) {
        reset_opacities(field, cfg.reset_opacity);
        rep.opacity_reset = true;
    }
    rep.after = field.size();
    stats.reset(field.size());
    return rep;
}

}  // namespace cellgs
