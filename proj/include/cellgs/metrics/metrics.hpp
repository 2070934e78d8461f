#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cellgs/image.hpp"

namespace cellgs::metrics {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

inline double mse(const Image& a, const Image& b) {
    require_same_shape(a, b, "mse");
    double sum = 0.0;
    const auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = da[i] - db[i];
        sum += d * d;
    }
    return da.empty() ? 0.0 : sum / static_cast<double>(da.size());
}

/// 10 log10(1 / MSE) over all pixels and channels, capped at 100 dB.
inline double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

/// Normalized 1D Gaussian taps. The window shrinks to `size` when the image
/// is smaller than the nominal 11 pixels.
inline std::vector<double> gaussian_taps(int size, double sigma = kSsimSigma) {
    std::vector<double> g(static_cast<std::size_t>(size));
    const double mid = 0.5 * (size - 1);
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double x = i - mid;
        g[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
        sum += g[static_cast<std::size_t>(i)];
    }
    for (double& v : g) v /= sum;
    return g;
}

inline int ssim_window_for(int height, int width) {
    return std::max(1, std::min({kSsimWindow, height, width}));
}

namespace detail {

/// Plane of one channel (row-major h x w).
using Plane = std::vector<double>;

inline Plane channel_plane(const Image& img, int c) {
    Plane p(static_cast<std::size_t>(img.height()) * img.width());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) p[static_cast<std::size_t>(y) * img.width() + x] = img(y, x, c);
    }
    return p;
}

/// Valid-mode separable filtering: output is (h - n + 1) x (w - n + 1).
inline Plane filter_valid(const Plane& in, int h, int w, const std::vector<double>& g) {
    const int n = static_cast<int>(g.size());
    const int hv = h - n + 1, wv = w - n + 1;
    Plane tmp(static_cast<std::size_t>(h) * wv);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wv; ++x) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += g[static_cast<std::size_t>(k)] * in[static_cast<std::size_t>(y) * w + x + k];
            tmp[static_cast<std::size_t>(y) * wv + x] = s;
        }
    }
    Plane out(static_cast<std::size_t>(hv) * wv);
    for (int y = 0; y < hv; ++y) {
        for (int x = 0; x < wv; ++x) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += g[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * wv + x];
            out[static_cast<std::size_t>(y) * wv + x] = s;
        }
    }
    return out;
}

/// Adjoint of filter_valid: scatters a valid-size map back onto the h x w grid.
inline Plane filter_valid_adjoint(const Plane& in, int h, int w, const std::vector<double>& g) {
    const int n = static_cast<int>(g.size());
    const int hv = h - n + 1, wv = w - n + 1;
    Plane tmp(static_cast<std::size_t>(h) * wv, 0.0);
    for (int y = 0; y < hv; ++y) {
        for (int x = 0; x < wv; ++x) {
            const double v = in[static_cast<std::size_t>(y) * wv + x];
            for (int k = 0; k < n; ++k) tmp[static_cast<std::size_t>(y + k) * wv + x] += g[static_cast<std::size_t>(k)] * v;
        }
    }
    Plane out(static_cast<std::size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wv; ++x) {
            const double v = tmp[static_cast<std::size_t>(y) * wv + x];
            for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(y) * w + x + k] += g[static_cast<std::size_t>(k)] * v;
        }
    }
    return out;
}

}  // namespace detail

/// Mean SSIM over valid window positions and channels; when `grad_a` is
/// non-null it receives d(SSIM)/d(a).
inline double ssim(const Image& a, const Image& b, Image* grad_a = nullptr) {
    require_same_shape(a, b, "ssim");
    const int h = a.height(), w = a.width();
    const int n = ssim_window_for(h, w);
    const auto g = gaussian_taps(n);
    const int hv = h - n + 1, wv = w - n + 1;
    const double count = static_cast<double>(hv) * wv * a.channels();
    if (grad_a) *grad_a = Image(h, w, a.channels());

    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        const auto pa = detail::channel_plane(a, c);
        const auto pb = detail::channel_plane(b, c);
        detail::Plane paa(pa.size()), pbb(pa.size()), pab(pa.size());
        for (std::size_t i = 0; i < pa.size(); ++i) {
            paa[i] = pa[i] * pa[i];
            pbb[i] = pb[i] * pb[i];
            pab[i] = pa[i] * pb[i];
        }
        const auto mu_a = detail::filter_valid(pa, h, w, g);
        const auto mu_b = detail::filter_valid(pb, h, w, g);
        const auto e_aa = detail::filter_valid(paa, h, w, g);
        const auto e_bb = detail::filter_valid(pbb, h, w, g);
        const auto e_ab = detail::filter_valid(pab, h, w, g);

        detail::Plane g_mu, g_eaa, g_eab;
        if (grad_a) {
            g_mu.resize(mu_a.size());
            g_eaa.resize(mu_a.size());
            g_eab.resize(mu_a.size());
        }
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double va = e_aa[i] - ma * ma;
            const double vb = e_bb[i] - mb * mb;
            const double cov = e_ab[i] - ma * mb;
            const double a1 = 2.0 * ma * mb + kSsimC1;
            const double a2 = 2.0 * cov + kSsimC2;
            const double b1 = ma * ma + mb * mb + kSsimC1;
            const double b2 = va + vb + kSsimC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (grad_a) {
                const double ds_dma = 2.0 * mb * a2 / (b1 * b2) - s * 2.0 * ma / b1;
                const double ds_dva = -s / b2;
                const double ds_dcov = 2.0 * a1 / (b1 * b2);
                g_mu[i] = (ds_dma - 2.0 * ma * ds_dva - mb * ds_dcov) / count;
                g_eaa[i] = ds_dva / count;
                g_eab[i] = ds_dcov / count;
            }
        }
        if (grad_a) {
            const auto s_mu = detail::filter_valid_adjoint(g_mu, h, w, g);
            const auto s_eaa = detail::filter_valid_adjoint(g_eaa, h, w, g);
            const auto s_eab = detail::filter_valid_adjoint(g_eab, h, w, g);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const auto i = static_cast<std::size_t>(y) * w + x;
                    (*grad_a)(y, x, c) = s_mu[i] + 2.0 * pa[i] * s_eaa[i] + pb[i] * s_eab[i];
                }
            }
        }
    }
    return total / count;
}

/// (1 - SSIM) / 2; `grad_a` receives its gradient with respect to `a`.
inline double d_ssim(const Image& a, const Image& b, Image* grad_a = nullptr) {
    const double s = ssim(a, b, grad_a);
    if (grad_a) {
        for (double& v : grad_a->data()) v *= -0.5;
    }
    return 0.5 * (1.0 - s);
}

}  // namespace cellgs::metrics
