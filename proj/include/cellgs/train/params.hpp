#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cellgs/core/splat.hpp"
#include "cellgs/error.hpp"

namespace cellgs {

/// Flat per-splat parameter layout shared by gradients and the optimizer:
/// center(3) log_scale(3) rotation(4) opacity_logit(1) sh(3 * count, coefficient-major).
namespace layout {
inline constexpr int kCenter = 0;
inline constexpr int kLogScale = 3;
inline constexpr int kRotation = 6;
inline constexpr int kOpacity = 10;
inline constexpr int kSh = 11;

constexpr int stride(int sh_degree) { return kSh + 3 * sh_coeff_count(sh_degree); }

enum class Group { Center, LogScale, Rotation, Opacity, ShDc, ShRest };

inline Group group_of(int k) {
    if (k < kLogScale) return Group::Center;
    if (k < kRotation) return Group::LogScale;
    if (k < kOpacity) return Group::Rotation;
    if (k < kSh) return Group::Opacity;
    return k < kSh + 3 ? Group::ShDc : Group::ShRest;
}

inline const char* group_name(Group g) {
    switch (g) {
        case Group::Center: return "center";
        case Group::LogScale: return "log_scale";
        case Group::Rotation: return "rotation";
        case Group::Opacity: return "opacity";
        case Group::ShDc: return "sh_dc";
        case Group::ShRest: return "sh_rest";
    }
    return "unknown";
}
}  // namespace layout

inline double& splat_param(GaussianSplat& s, int k) {
    if (k < layout::kLogScale) return s.center[k];
    if (k < layout::kRotation) return s.log_scale[k - layout::kLogScale];
    if (k < layout::kOpacity) return s.rotation[k - layout::kRotation];
    if (k == layout::kOpacity) return s.opacity_logit;
    const int j = (k - layout::kSh) / 3, c = (k - layout::kSh) % 3;
    return s.sh[static_cast<std::size_t>(j)][c];
}

inline double splat_param(const GaussianSplat& s, int k) { return splat_param(const_cast<GaussianSplat&>(s), k); }

/// Gradient of every splat parameter, n x stride values.
struct FieldGrad {
    int stride = 0;
    std::vector<double> values;

    FieldGrad() = default;
    FieldGrad(std::size_t n, int sh_degree) : stride(layout::stride(sh_degree)), values(n * static_cast<std::size_t>(stride), 0.0) {}

    std::size_t size() const { return stride ? values.size() / static_cast<std::size_t>(stride) : 0; }
    double* splat(std::size_t i) { return values.data() + i * static_cast<std::size_t>(stride); }
    const double* splat(std::size_t i) const { return values.data() + i * static_cast<std::size_t>(stride); }
};

/// Throws NanGuard naming the first parameter group with a non-finite entry.
inline void check_finite(const FieldGrad& g) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double* p = g.splat(i);
        for (int k = 0; k < g.stride; ++k) {
            if (!std::isfinite(p[k])) {
                throw NanGuard(std::string("non-finite gradient in parameter group '") +
                               layout::group_name(layout::group_of(k)) + "' of splat " + std::to_string(i));
            }
        }
    }
}

inline void check_finite(std::span<const double> g, const char* group) {
    for (double v : g) {
        if (!std::isfinite(v)) throw NanGuard(std::string("non-finite gradient in parameter group '") + group + "'");
    }
}

}  // namespace cellgs
