#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "cellgs/error.hpp"

namespace cellgs {

/// Cubic B-spline basis on a uniform grid of `intervals` cells over [-1, 1],
/// extended by three knots on each side so that grid + 3 basis functions are
/// active on the interval. Inputs are clamped to [-1, 1].
class CubicBSpline {
public:
    static constexpr int kOrder = 3;
    static constexpr int kMaxIntervals = 64;

    explicit CubicBSpline(int intervals = 5) : intervals_(intervals) {
        if (intervals < 1 || intervals > kMaxIntervals) throw InvalidParameter("spline grid must have 1..64 intervals");
        h_ = 2.0 / intervals;
    }

    int intervals() const noexcept { return intervals_; }
    int basis_count() const noexcept { return intervals_ + kOrder; }

    double knot(int j) const { return -1.0 + (j - kOrder) * h_; }

    /// The four nonzero basis values at x (after clamping) and their
    /// derivatives with respect to the clamped x. Returns the index of the
    /// first nonzero basis function.
    int evaluate(double x, std::array<double, 4>& value, std::array<double, 4>* deriv = nullptr) const {
        x = std::clamp(x, -1.0, 1.0);
        // NaN passes the clamp; keep the index valid and let the values carry it
        const int cell = std::isnan(x) ? 0 : std::min(static_cast<int>(std::floor((x + 1.0) / h_)), intervals_ - 1);
        // uniform cubic B-spline in local coordinate u in [0, 1]
        const double u = (x + 1.0) / h_ - cell;
        const double u2 = u * u, u3 = u2 * u;
        const double w = 1.0 - u;
        value[0] = w * w * w / 6.0;
        value[1] = (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0;
        value[2] = (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0;
        value[3] = u3 / 6.0;
        if (deriv) {
            const double s = 1.0 / h_;
            (*deriv)[0] = -0.5 * w * w * s;
            (*deriv)[1] = (1.5 * u2 - 2.0 * u) * s;
            (*deriv)[2] = (-1.5 * u2 + u + 0.5) * s;
            (*deriv)[3] = 0.5 * u2 * s;
        }
        return cell;
    }

    /// Sum of coeff[j] * B_j(x) over all basis_count() coefficients.
    double operator()(const double* coeff, double x) const {
        std::array<double, 4> b;
        const int first = evaluate(x, b);
        double s = 0.0;
        for (int k = 0; k < 4; ++k) s += coeff[first + k] * b[static_cast<std::size_t>(k)];
        return s;
    }

private:
    int intervals_;
    double h_;
};

}  // namespace cellgs
