#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "cellgs/appearance/bspline.hpp"
#include "cellgs/error.hpp"
#include "cellgs/image.hpp"
#include "cellgs/math.hpp"

namespace cellgs {

/// Channel-major feature map (C x H x W).
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int channels, int height, int width, double fill = 0.0)
        : c(channels), h(height), w(width), v(static_cast<std::size_t>(channels) * height * width, fill) {}

    double& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    std::size_t size() const noexcept { return v.size(); }
};

inline Tensor image_to_tensor(const Image& img) {
    Tensor t(img.channels(), img.height(), img.width());
    for (int ch = 0; ch < img.channels(); ++ch) {
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) t.at(ch, y, x) = img(y, x, ch);
        }
    }
    return t;
}

/// 3x3 convolution with zero padding 1. Weights are laid out [out][in][ky][kx].
struct Conv3x3 {
    int in = 0, out = 0, stride = 1;

    std::size_t weight_count() const { return static_cast<std::size_t>(out) * in * 9; }
    std::size_t param_count() const { return weight_count() + static_cast<std::size_t>(out); }

    int out_size(int n) const { return stride == 1 ? n : (n + 1) / 2; }

    /// `p` points at weights followed by biases.
    Tensor forward(const double* p, const Tensor& x) const {
        if (x.c != in) throw ShapeError("conv: expected " + std::to_string(in) + " input channels, got " + std::to_string(x.c));
        const int ho = out_size(x.h), wo = out_size(x.w);
        Tensor y(out, ho, wo);
        const double* bias = p + weight_count();
        for (int o = 0; o < out; ++o) {
            for (int yy = 0; yy < ho; ++yy) {
                for (int xx = 0; xx < wo; ++xx) {
                    double s = bias[o];
                    for (int i = 0; i < in; ++i) {
                        const double* wk = p + (static_cast<std::size_t>(o) * in + i) * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int sy = yy * stride + ky - 1;
                            if (sy < 0 || sy >= x.h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sx = xx * stride + kx - 1;
                                if (sx < 0 || sx >= x.w) continue;
                                s += wk[ky * 3 + kx] * x.at(i, sy, sx);
                            }
                        }
                    }
                    y.at(o, yy, xx) = s;
                }
            }
        }
        return y;
    }

    /// Accumulates parameter gradients into `gp` and returns dL/dx.
    Tensor backward(const double* p, const Tensor& x, const Tensor& gy, double* gp) const {
        Tensor gx(x.c, x.h, x.w);
        double* gbias = gp + weight_count();
        for (int o = 0; o < out; ++o) {
            for (int yy = 0; yy < gy.h; ++yy) {
                for (int xx = 0; xx < gy.w; ++xx) {
                    const double g = gy.at(o, yy, xx);
                    if (g == 0.0) continue;
                    gbias[o] += g;
                    for (int i = 0; i < in; ++i) {
                        const std::size_t base = (static_cast<std::size_t>(o) * in + i) * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int sy = yy * stride + ky - 1;
                            if (sy < 0 || sy >= x.h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sx = xx * stride + kx - 1;
                                if (sx < 0 || sx >= x.w) continue;
                                gp[base + ky * 3 + kx] += g * x.at(i, sy, sx);
                                gx.at(i, sy, sx) += g * p[base + ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
        return gx;
    }
};

/// 3x3 convolution whose kernel entries are learnable univariate functions
/// phi(v) = w_b * silu(v) + spline(clamp(v, -1, 1)); zero padding, stride 1.
///
/// Parameters per (out, in, kernel position): one base weight, then
/// `basis_count` spline coefficients.
struct KanConv3x3 {
    int in = 0, out = 0;
    CubicBSpline spline{5};

    std::size_t per_edge() const { return 1 + static_cast<std::size_t>(spline.basis_count()); }
    std::size_t param_count() const { return static_cast<std::size_t>(out) * in * 9 * per_edge(); }
    std::size_t edge_offset(int o, int i, int k) const {
        return ((static_cast<std::size_t>(o) * in + i) * 9 + k) * per_edge();
    }

    /// phi of one edge evaluated at v.
    double phi(const double* p, int o, int i, int k, double v) const {
        const double* e = p + edge_offset(o, i, k);
        return e[0] * silu(v) + spline(e + 1, v);
    }

    Tensor forward(const double* p, const Tensor& x) const {
        if (x.c != in) {
            throw ShapeError("KAN conv: expected " + std::to_string(in) + " input channels, got " + std::to_string(x.c));
        }
        // padded samples are zeros and still pass through phi
        std::array<double, 4> b0;
        const int first0 = spline.evaluate(0.0, b0);
        Tensor y(out, x.h, x.w);
        std::vector<std::array<double, 4>> basis(x.size());
        std::vector<int> first(x.size());
        std::vector<double> base(x.size());
        for (std::size_t n = 0; n < x.size(); ++n) {
            first[n] = spline.evaluate(x.v[n], basis[n]);
            base[n] = silu(x.v[n]);
        }
        for (int o = 0; o < out; ++o) {
            for (int yy = 0; yy < x.h; ++yy) {
                for (int xx = 0; xx < x.w; ++xx) {
                    double s = 0.0;
                    for (int i = 0; i < in; ++i) {
                        for (int k = 0; k < 9; ++k) {
                            const double* e = p + edge_offset(o, i, k);
                            const int sy = yy + k / 3 - 1, sx = xx + k % 3 - 1;
                            if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) {
                                for (int m = 0; m < 4; ++m) s += e[1 + first0 + m] * b0[static_cast<std::size_t>(m)];
                                continue;
                            }
                            const std::size_t n = (static_cast<std::size_t>(i) * x.h + sy) * x.w + sx;
                            s += e[0] * base[n];
                            for (int m = 0; m < 4; ++m) s += e[1 + first[n] + m] * basis[n][static_cast<std::size_t>(m)];
                        }
                    }
                    y.at(o, yy, xx) = s;
                }
            }
        }
        return y;
    }

    Tensor backward(const double* p, const Tensor& x, const Tensor& gy, double* gp) const {
        std::array<double, 4> b0;
        const int first0 = spline.evaluate(0.0, b0);
        Tensor gx(x.c, x.h, x.w);
        std::vector<std::array<double, 4>> basis(x.size()), dbasis(x.size());
        std::vector<int> first(x.size());
        std::vector<double> base(x.size()), dbase(x.size());
        std::vector<char> inside(x.size());
        for (std::size_t n = 0; n < x.size(); ++n) {
            first[n] = spline.evaluate(x.v[n], basis[n], &dbasis[n]);
            base[n] = silu(x.v[n]);
            dbase[n] = silu_grad(x.v[n]);
            inside[n] = x.v[n] > -1.0 && x.v[n] < 1.0;  // clamp blocks the spline gradient outside
        }
        for (int o = 0; o < out; ++o) {
            for (int yy = 0; yy < x.h; ++yy) {
                for (int xx = 0; xx < x.w; ++xx) {
                    const double g = gy.at(o, yy, xx);
                    if (g == 0.0) continue;
                    for (int i = 0; i < in; ++i) {
                        for (int k = 0; k < 9; ++k) {
                            const std::size_t off = edge_offset(o, i, k);
                            const double* e = p + off;
                            double* ge = gp + off;
                            const int sy = yy + k / 3 - 1, sx = xx + k % 3 - 1;
                            if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) {
                                for (int m = 0; m < 4; ++m) ge[1 + first0 + m] += g * b0[static_cast<std::size_t>(m)];
                                continue;
                            }
                            const std::size_t n = (static_cast<std::size_t>(i) * x.h + sy) * x.w + sx;
                            ge[0] += g * base[n];
                            double dphi = e[0] * dbase[n];
                            for (int m = 0; m < 4; ++m) {
                                const auto mm = static_cast<std::size_t>(m);
                                ge[1 + first[n] + m] += g * basis[n][mm];
                                if (inside[n]) dphi += e[1 + first[n] + m] * dbasis[n][mm];
                            }
                            gx.v[n] += g * dphi;
                        }
                    }
                }
            }
        }
        return gx;
    }
};

}  // namespace cellgs
