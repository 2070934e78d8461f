#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "cellgs/error.hpp"

namespace cellgs {

/// Adam over a flat parameter vector with a per-element learning rate.
class Adam {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;

    explicit Adam(std::size_t n = 0) : m_(n, 0.0), v_(n, 0.0), steps_(n, 0) {}

    std::size_t size() const noexcept { return m_.size(); }

    /// p[i] -= lr(i) * mhat / (sqrt(vhat) + eps). Bias correction uses each
    /// element's own step count, so elements added later start fresh.
    void step(std::span<double> params, std::span<const double> grad, const std::function<double(std::size_t)>& lr) {
        if (params.size() != m_.size() || grad.size() != m_.size()) throw ShapeError("Adam: size mismatch");
        for (std::size_t i = 0; i < m_.size(); ++i) {
            const double g = grad[i];
            m_[i] = beta1 * m_[i] + (1.0 - beta1) * g;
            v_[i] = beta2 * v_[i] + (1.0 - beta2) * g * g;
            const int t = ++steps_[i];
            const double mhat = m_[i] / (1.0 - std::pow(beta1, t));
            const double vhat = v_[i] / (1.0 - std::pow(beta2, t));
            params[i] -= lr(i) * mhat / (std::sqrt(vhat) + eps);
        }
    }

    /// Rebuilds the state for a resized parameter set. `origin[j]` is the old
    /// block index that new block j continues, or -1 for a fresh block.
    void remap(const std::vector<int>& origin, std::size_t block) {
        std::vector<double> m(origin.size() * block, 0.0), v(origin.size() * block, 0.0);
        std::vector<int> s(origin.size() * block, 0);
        for (std::size_t j = 0; j < origin.size(); ++j) {
            if (origin[j] < 0) continue;
            const std::size_t src = static_cast<std::size_t>(origin[j]) * block;
            for (std::size_t k = 0; k < block; ++k) {
                m[j * block + k] = m_[src + k];
                v[j * block + k] = v_[src + k];
                s[j * block + k] = steps_[src + k];
            }
        }
        m_ = std::move(m);
        v_ = std::move(v);
        steps_ = std::move(s);
    }

    /// Clears the state of one block (used when its parameter is overwritten).
    void reset_element(std::size_t i) {
        m_[i] = 0.0;
        v_[i] = 0.0;
        steps_[i] = 0;
    }

private:
    std::vector<double> m_, v_;
    std::vector<int> steps_;
};

/// Log-linear interpolation from `start` to `end` over `steps` iterations.
inline double exponential_decay(double start, double end, int iteration, int steps) {
    if (steps <= 0 || iteration >= steps) return end;
    if (iteration <= 0) return start;
    const double t = static_cast<double>(iteration) / steps;
    return std::exp(std::log(start) * (1.0 - t) + std::log(end) * t);
}

}  // namespace cellgs
