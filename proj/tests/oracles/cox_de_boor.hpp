#pragma once

#include <vector>

namespace cellgs::oracle {

/// B-spline basis N_{j,p}(x) by the Cox-de Boor recursion on an arbitrary knot vector.
inline double cox_de_boor(const std::vector<double>& knots, int j, int p, double x) {
    if (p == 0) {
        return (knots[static_cast<std::size_t>(j)] <= x && x < knots[static_cast<std::size_t>(j) + 1]) ? 1.0 : 0.0;
    }
    double v = 0.0;
    const double l = knots[static_cast<std::size_t>(j + p)] - knots[static_cast<std::size_t>(j)];
    const double r = knots[static_cast<std::size_t>(j + p + 1)] - knots[static_cast<std::size_t>(j + 1)];
    if (l > 0.0) v += (x - knots[static_cast<std::size_t>(j)]) / l * cox_de_boor(knots, j, p - 1, x);
    if (r > 0.0) v += (knots[static_cast<std::size_t>(j + p + 1)] - x) / r * cox_de_boor(knots, j + 1, p - 1, x);
    return v;
}

/// Uniform knots for `intervals` cells on [-1, 1] extended by `order` on both sides.
inline std::vector<double> extended_knots(int intervals, int order = 3) {
    std::vector<double> k;
    const double h = 2.0 / intervals;
    for (int j = -order; j <= intervals + order; ++j) k.push_back(-1.0 + j * h);
    return k;
}

}  // namespace cellgs::oracle
