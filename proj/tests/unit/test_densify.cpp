#include <gtest/gtest.h>

#include <random>

#include "cellgs/train/adam.hpp"
#include "cellgs/train/densify.hpp"
#include "oracles/random_scene.hpp"

using namespace cellgs;

namespace {

GaussianField three_splats(double log_scale) {
    GaussianField f;
    f.sh_degree = 0;
    f.scene_extent = 10.0;
    for (int i = 0; i < 3; ++i) {
        GaussianSplat s;
        s.center = Vec3(i, 0, 5);
        s.log_scale = Vec3::Constant(log_scale);
        s.rotation = Vec4(1, 0, 0, 0);
        s.opacity_logit = 2.0;
        s.sh = {Vec3(0.1 * i, 0.2, 0.3)};
        f.splats.push_back(s);
    }
    return f;
}

// only splat 0 saw a gradient, above the default threshold
DensifyStats hot_first(std::size_t n, double value = 1e-2) {
    DensifyStats st(n);
    st.accum[0] = value;
    st.classic[0] = value;
    st.count[0] = 1;
    st.direction[0] = Vec3(1, 0, 0);
    return st;
}

ViewGradient random_view(std::mt19937_64& rng, std::size_t n, int samples) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(n) - 1);
    ViewGradient v;
    for (std::size_t i = 0; i < n; ++i) {
        Mat23 j;
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 3; ++c) j(r, c) = g(rng);
        v.jacobian.push_back(j);
        v.screen_radius.push_back(std::abs(g(rng)) * 0.1);
    }
    for (int s = 0; s < samples; ++s) v.samples.push_back({pick(rng), Vec2(g(rng), g(rng))});
    return v;
}

}  // namespace

TEST(Accumulate, OpposingPixelsDoNotCancel) {
    DensifyStats st(1);
    ViewGradient v;
    Mat23 j;
    j << 2, 0, 1, 0, 3, -1;
    v.jacobian = {j};
    const Vec2 g(0.3, -0.7);
    v.samples = {{0, g}, {0, -g}};
    accumulate_view_gradient(st, v);
    const double z = (g.transpose() * j).norm();
    EXPECT_NEAR(st.accum[0], 2.0 * z, 1e-15);
    EXPECT_EQ(st.classic[0], 0.0);
    EXPECT_EQ(st.count[0], 1);
}

TEST(Accumulate, SinglePixelIsNormOfProduct) {
    DensifyStats st(2);
    ViewGradient v;
    Mat23 j = Mat23::Random();
    v.jacobian = {Mat23::Zero(), j};
    v.samples = {{1, Vec2(0.5, 0.25)}};
    accumulate_view_gradient(st, v);
    EXPECT_NEAR(st.accum[1], (Vec2(0.5, 0.25).transpose() * j).norm(), 1e-15);
    EXPECT_EQ(st.count[0], 0);
    EXPECT_EQ(st.accum[0], 0.0);
}

TEST(Accumulate, MatchesReferenceLoop) {
    std::mt19937_64 rng(3);
    const std::size_t n = 12;
    DensifyStats st(n);
    std::vector<double> accum(n, 0.0), classic(n, 0.0), radius(n, 0.0);
    std::vector<int> count(n, 0);
    for (int view = 0; view < 8; ++view) {
        const auto v = random_view(rng, n, 60);
        accumulate_view_gradient(st, v);
        for (std::size_t i = 0; i < n; ++i) {
            double sx = 0, sy = 0, sz = 0;
            bool hit = false;
            for (const auto& s : v.samples) {
                if (static_cast<std::size_t>(s.splat) != i) continue;
                hit = true;
                double p[3];
                for (int c = 0; c < 3; ++c) p[c] = s.grad[0] * v.jacobian[i](0, c) + s.grad[1] * v.jacobian[i](1, c);
                accum[i] += std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
                sx += p[0];
                sy += p[1];
                sz += p[2];
            }
            if (hit) {
                ++count[i];
                classic[i] += std::sqrt(sx * sx + sy * sy + sz * sz);
            }
            radius[i] = std::max(radius[i], v.screen_radius[i]);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        EXPECT_NEAR(st.accum[i], accum[i], 1e-12);
        EXPECT_NEAR(st.classic[i], classic[i], 1e-12);
        EXPECT_EQ(st.count[i], count[i]);
        EXPECT_EQ(st.max_radius[i], radius[i]);
        EXPECT_GE(st.accum[i], st.classic[i] - 1e-12);  // triangle inequality
    }
    DensifyStats wrong(3);
    EXPECT_THROW(accumulate_view_gradient(wrong, random_view(rng, n, 1)), ShapeError);
}

TEST(Densify, NothingAboveThresholdOnlyPrunes) {
    auto f = three_splats(std::log(0.01));
    f.splats[2].opacity_logit = logit(0.001);
    DensifyStats st(3);
    st.classic = {1e-5, 1e-6, 0};
    st.accum = {1e-4, 1e-5, 0};
    st.count = {1, 1, 0};
    std::mt19937_64 rng(1);
    const auto before = f;
    const auto rep = densify_and_prune(f, st, TrainConfig{}, 500, rng);
    ASSERT_EQ(f.size(), 2u);
    EXPECT_EQ(f.splats[0], before.splats[0]);
    EXPECT_EQ(f.splats[1], before.splats[1]);
    EXPECT_EQ(rep.cloned, 0);
    EXPECT_EQ(rep.split, 0);
    EXPECT_EQ(rep.pruned, 1);
    EXPECT_EQ(rep.origin, (std::vector<int>{0, 1}));
    EXPECT_EQ(st.size(), 2u);
    EXPECT_EQ(st.count[0], 0);
}

TEST(Densify, SmallSplatClones) {
    auto f = three_splats(std::log(0.05));  // 0.05 < 0.01 * extent 10
    auto st = hot_first(3);
    std::mt19937_64 rng(1);
    const auto rep = densify_and_prune(f, st, TrainConfig{}, 500, rng);
    ASSERT_EQ(f.size(), 4u);
    EXPECT_EQ(rep.cloned, 1);
    EXPECT_EQ(rep.split, 0);
    EXPECT_EQ(rep.origin, (std::vector<int>{0, 1, 2, -1}));
    EXPECT_EQ(f.splats[3].log_scale, f.splats[0].log_scale);
    EXPECT_EQ(f.splats[3].sh, f.splats[0].sh);
    EXPECT_LT((f.splats[3].center - f.splats[0].center).norm(), 0.05);
}

TEST(Densify, LargeSplatSplitsInTwo) {
    auto f = three_splats(std::log(0.5));
    const auto parent = f.splats[0];
    auto st = hot_first(3);
    std::mt19937_64 rng(1);
    const auto rep = densify_and_prune(f, st, TrainConfig{}, 600, rng);
    ASSERT_EQ(f.size(), 4u);
    EXPECT_EQ(rep.split, 1);
    EXPECT_EQ(rep.cloned, 0);
    EXPECT_EQ(rep.origin, (std::vector<int>{1, 2, -1, -1}));
    for (int c : {2, 3}) {
        const auto& child = f.splats[static_cast<std::size_t>(c)];
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(std::exp(child.log_scale[k]), 0.5 / 1.6, 1e-12);
        EXPECT_NE(child.center, parent.center);
        EXPECT_LT((child.center - parent.center).norm(), 5 * 0.5);
        EXPECT_EQ(child.opacity_logit, parent.opacity_logit);
    }
    // parent is gone
    for (const auto& s : f.splats) EXPECT_NE(s.center, parent.center);
}

TEST(Densify, SelectionUsesAccumulatedQuantile) {
    // classical statistic selects one of four; the accumulated one then takes the top quarter too
    DensifyStats st(4);
    st.count = {1, 1, 1, 1};
    st.classic = {1e-3, 0, 0, 0};
    st.accum = {1e-6, 5e-3, 1e-4, 2e-4};
    DensifyReport rep;
    const auto sel = densify_selection(st, 2e-4, &rep);
    EXPECT_EQ(sel, (std::vector<char>{1, 1, 0, 0}));
    EXPECT_DOUBLE_EQ(rep.classic_ratio, 0.25);
    EXPECT_GT(rep.abs_threshold, 2e-4);
    EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.5), 3.0);
    EXPECT_DOUBLE_EQ(quantile({1, 2}, 0.25), 1.25);
}

TEST(Densify, ScreenSizePruneAfterFirstReset) {
    auto f = three_splats(std::log(0.01));
    DensifyStats st(3);
    st.max_radius = {0.1, 0.9, 0.2};
    auto g = f;
    auto st2 = st;
    std::mt19937_64 rng(1);
    densify_and_prune(f, st, TrainConfig{}, 2000, rng);
    EXPECT_EQ(f.size(), 3u);
    densify_and_prune(g, st2, TrainConfig{}, 3100, rng);
    EXPECT_EQ(g.size(), 2u);
}

TEST(Schedule, DefaultWindow) {
    const TrainConfig cfg;
    EXPECT_FALSE(is_densify_iteration(cfg, 400));
    EXPECT_FALSE(is_densify_iteration(cfg, 499));
    EXPECT_TRUE(is_densify_iteration(cfg, 500));
    EXPECT_FALSE(is_densify_iteration(cfg, 550));
    EXPECT_TRUE(is_densify_iteration(cfg, 15000));
    for (int it = 15001; it <= 60000; ++it) ASSERT_FALSE(is_densify_iteration(cfg, it)) << it;
    EXPECT_TRUE(is_opacity_reset_iteration(cfg, 3000));
    EXPECT_TRUE(is_opacity_reset_iteration(cfg, 15000));
    EXPECT_FALSE(is_opacity_reset_iteration(cfg, 18000));
    auto f = three_splats(0.0);
    DensifyStats st(3);
    std::mt19937_64 rng(1);
    EXPECT_THROW(densify_and_prune(f, st, cfg, 15100, rng), InvalidParameter);
    EXPECT_THROW(densify_and_prune(f, st, cfg, 501, rng), InvalidParameter);
    DensifyStats small(2);
    EXPECT_THROW(densify_and_prune(f, small, cfg, 500, rng), ShapeError);
}

TEST(Schedule, OpacityResetClamps) {
    auto f = three_splats(std::log(0.01));
    f.splats[1].opacity_logit = logit(0.006);
    DensifyStats st(3);
    std::mt19937_64 rng(1);
    const auto rep = densify_and_prune(f, st, TrainConfig{}, 3000, rng);
    EXPECT_TRUE(rep.opacity_reset);
    for (const auto& s : f.splats) EXPECT_LE(s.opacity(), 0.01 + 1e-15);
    EXPECT_NEAR(f.splats[1].opacity(), 0.006, 1e-12);  // already below the cap
    auto g = three_splats(0.0);
    EXPECT_EQ(reset_opacities(g, 0.5).size(), 3u);
    EXPECT_TRUE(reset_opacities(g, 0.5).empty());
}

TEST(AdamOptimizer, FirstStepMovesByLearningRate) {
    Adam opt(3);
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -4.0, 0.0};
    opt.step(p, g, [](std::size_t i) { return i == 0 ? 0.1 : 0.01; });
    EXPECT_NEAR(p[0], 0.9, 1e-12);
    EXPECT_NEAR(p[1], -1.99, 1e-12);
    EXPECT_EQ(p[2], 0.5);
    EXPECT_THROW(opt.step(p, std::vector<double>(2), [](std::size_t) { return 0.1; }), ShapeError);
}

TEST(AdamOptimizer, MinimizesQuadratic) {
    Adam opt(2);
    std::vector<double> p{3.0, -5.0};
    for (int it = 0; it < 3000; ++it) {
        const std::vector<double> g{2 * (p[0] - 1), 4 * (p[1] + 2)};
        opt.step(p, g, [](std::size_t) { return 0.05; });
    }
    EXPECT_NEAR(p[0], 1.0, 1e-3);
    EXPECT_NEAR(p[1], -2.0, 1e-3);
}

TEST(AdamOptimizer, RemapKeepsSurvivorState) {
    Adam a(4), b(2);
    std::vector<double> pa{0, 0, 0, 0}, pb{0, 0};
    for (int it = 0; it < 5; ++it) {
        a.step(pa, std::vector<double>{1, 1, 2, 2}, [](std::size_t) { return 0.1; });
        b.step(pb, std::vector<double>{2, 2}, [](std::size_t) { return 0.1; });
    }
    // keep block 1 (elements 2, 3) and add a fresh block
    a.remap({1, -1}, 2);
    ASSERT_EQ(a.size(), 4u);
    std::vector<double> q{pb[0], pb[1], 0, 0};
    a.step(q, std::vector<double>{2, 2, 1, 1}, [](std::size_t) { return 0.1; });
    b.step(pb, std::vector<double>{2, 2}, [](std::size_t) { return 0.1; });
    EXPECT_DOUBLE_EQ(q[0], pb[0]);
    EXPECT_NEAR(q[2], -0.1, 1e-12);  // fresh state: a full first step
}

TEST(AdamOptimizer, ExponentialDecayEndpoints) {
    EXPECT_DOUBLE_EQ(exponential_decay(1e-2, 1e-4, 0, 100), 1e-2);
    EXPECT_DOUBLE_EQ(exponential_decay(1e-2, 1e-4, 100, 100), 1e-4);
    EXPECT_NEAR(exponential_decay(1e-2, 1e-4, 50, 100), 1e-3, 1e-15);
}
