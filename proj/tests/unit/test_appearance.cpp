#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <fstream>
#include <random>

#include "cellgs/appearance/model.hpp"
#include "cellgs/train/graph.hpp"
#include "oracles/cox_de_boor.hpp"
#include "oracles/random_scene.hpp"
#include "oracles/temp_dir.hpp"

using namespace cellgs;

namespace {

Image random_image(std::mt19937_64& rng, int h, int w, double lo = 0.05, double hi = 0.45) {
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(h, w, 3);
    for (double& v : img.data()) v = u(rng);
    return img;
}

Tensor random_tensor(std::mt19937_64& rng, int c, int h, int w, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(c, h, w);
    for (double& v : t.v) v = u(rng);
    return t;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
    return s;
}

double dot(const Image& a, const Image& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

AppearanceConfig small_config() { return AppearanceConfig{4, 4, 2, 5}; }

// random KAN weights so the map actually depends on its input
void perturb_kan(AppearanceModel& m, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> n(0.0, scale);
    for (std::size_t k = m.kan_offset(); k < m.param_count(); ++k) m.params()[k] = n(rng);
}

}  // namespace

TEST(BSpline, MatchesCoxDeBoor) {
    for (int grid : {1, 3, 5, 8}) {
        const CubicBSpline s(grid);
        const auto knots = oracle::extended_knots(grid);
        for (int step = 0; step <= 400; ++step) {
            const double x = -1.0 + 2.0 * step / 400.0;
            std::array<double, 4> b, db;
            const int first = s.evaluate(x, b, &db);
            // the recursion is right-open, so evaluate the right end just inside
            const double xe = std::min(x, 1.0 - 1e-12);
            double sum = 0;
            for (int j = 0; j < s.basis_count(); ++j) {
                const double ref = oracle::cox_de_boor(knots, j, 3, xe);
                const double got = (j >= first && j < first + 4) ? b[static_cast<std::size_t>(j - first)] : 0.0;
                EXPECT_NEAR(got, ref, 1e-9) << "grid " << grid << " x " << x << " j " << j;
                sum += got;
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
            for (int m = 0; m < 4; ++m) {
                const double j = first + m;
                const double h = 1e-6;
                const double fd = (oracle::cox_de_boor(knots, static_cast<int>(j), 3, std::clamp(xe + h, -1.0, 1.0 - 1e-12)) -
                                   oracle::cox_de_boor(knots, static_cast<int>(j), 3, std::clamp(xe - h, -1.0, 1.0 - 1e-12))) /
                                  (std::clamp(xe + h, -1.0, 1.0 - 1e-12) - std::clamp(xe - h, -1.0, 1.0 - 1e-12));
                EXPECT_NEAR(db[static_cast<std::size_t>(m)], fd, 1e-4);
            }
        }
        for (int j = 0; j < s.basis_count() + 1; ++j) EXPECT_DOUBLE_EQ(s.knot(j), knots[static_cast<std::size_t>(j)]);
    }
    EXPECT_THROW(CubicBSpline(0), InvalidParameter);
}

TEST(KanConv, ZeroParametersGiveZeros) {
    std::mt19937_64 rng(1);
    const KanConv3x3 kan{3, 2, CubicBSpline(5)};
    const std::vector<double> p(kan.param_count(), 0.0);
    const Tensor x = random_tensor(rng, 3, 6, 7, -2, 2);
    const Tensor y = kan.forward(p.data(), x);
    EXPECT_EQ(y.c, 2);
    EXPECT_EQ(y.h, 6);
    EXPECT_EQ(y.w, 7);
    for (double v : y.v) EXPECT_EQ(v, 0.0);
}

TEST(KanConv, ChannelMismatchThrows) {
    const KanConv3x3 kan{3, 2, CubicBSpline(5)};
    const std::vector<double> p(kan.param_count(), 0.0);
    EXPECT_THROW(kan.forward(p.data(), Tensor(2, 4, 4)), ShapeError);
}

TEST(KanConv, IdentityFitReproducesClampedInput) {
    for (int grid : {3, 5, 8}) {
        const KanConv3x3 kan{1, 1, CubicBSpline(grid)};
        const int nb = kan.spline.basis_count();
        // least-squares fit of the center edge's spline to f(x) = x on [-1, 1]
        const int samples = 401;
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(samples, nb);
        Eigen::VectorXd rhs(samples);
        for (int s = 0; s < samples; ++s) {
            const double x = -1.0 + 2.0 * s / (samples - 1);
            std::array<double, 4> b;
            const int first = kan.spline.evaluate(x, b);
            for (int m = 0; m < 4; ++m) A(s, first + m) = b[static_cast<std::size_t>(m)];
            rhs(s) = x;
        }
        const Eigen::VectorXd coeff = A.colPivHouseholderQr().solve(rhs);
        std::vector<double> p(kan.param_count(), 0.0);
        const std::size_t off = kan.edge_offset(0, 0, 4);
        for (int j = 0; j < nb; ++j) p[off + 1 + static_cast<std::size_t>(j)] = coeff(j);

        std::mt19937_64 rng(static_cast<std::uint64_t>(grid));
        const Tensor x = random_tensor(rng, 1, 9, 9, -1.5, 1.5);
        const Tensor y = kan.forward(p.data(), x);
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.v[i], std::clamp(x.v[i], -1.0, 1.0), 1e-3);
    }
}

TEST(KanConv, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    const KanConv3x3 kan{2, 3, CubicBSpline(5)};
    std::normal_distribution<double> n(0.0, 0.5);
    std::vector<double> p(kan.param_count());
    for (double& v : p) v = n(rng);
    const Tensor x = random_tensor(rng, 2, 5, 4, -1.4, 1.4);
    const Tensor gy = random_tensor(rng, 3, 5, 4, -1, 1);
    std::vector<double> gp(p.size(), 0.0);
    const Tensor gx = kan.backward(p.data(), x, gy, gp.data());

    const double eps = 1e-4;
    for (std::size_t k = 0; k < p.size(); ++k) {
        auto q = p;
        q[k] += eps;
        const double up = dot(kan.forward(q.data(), x), gy);
        q[k] -= 2 * eps;
        const double dn = dot(kan.forward(q.data(), x), gy);
        const double fd = (up - dn) / (2 * eps);
        EXPECT_NEAR(gp[k], fd, 1e-3 * std::max(1.0, std::abs(fd))) << k;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        // skip samples next to the clamp or a knot where the one-sided slopes differ
        if (std::abs(std::abs(x.v[i]) - 1.0) < 2 * eps) continue;
        auto xp = x, xm = x;
        xp.v[i] += eps;
        xm.v[i] -= eps;
        const double fd = (dot(kan.forward(p.data(), xp), gy) - dot(kan.forward(p.data(), xm), gy)) / (2 * eps);
        EXPECT_NEAR(gx.v[i], fd, 1e-3 * std::max(1.0, std::abs(fd))) << i;
    }
}

TEST(Appearance, IdentityAtInitialization) {
    std::mt19937_64 rng(2);
    const AppearanceModel model(AppearanceConfig{}, {3, 5, 9}, 42);
    const Image img = random_image(rng, 64, 48, 0.0, 0.5);
    for (int id : {3, 5, 9}) {
        const auto r = model.forward(img, id);
        for (double v : r.map.data()) EXPECT_EQ(v, 0.5);
        EXPECT_EQ(r.adjusted, img);
    }
}

TEST(Appearance, DefaultConfigStaysSmall) {
    const AppearanceModel model(AppearanceConfig{}, {1});
    EXPECT_LT(model.param_count() - model.embed_count(), 200'000u);
    // resolution does not change the parameter count
    std::mt19937_64 rng(3);
    const auto before = model.param_count();
    model.forward(random_image(rng, 37, 91), 1);
    EXPECT_EQ(model.param_count(), before);
}

TEST(Appearance, MapStrictlyInsideUnitInterval) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        AppearanceModel model(small_config(), {1, 2}, static_cast<std::uint64_t>(trial));
        perturb_kan(model, rng, 0.3 + trial * 0.1);
        const Image img = random_image(rng, 20 + trial, 17, 0.0, 1.0);
        const auto r = model.forward(img, 1 + trial % 2);
        for (double v : r.map.data()) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
        for (double v : r.adjusted.data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Appearance, MissingEmbeddingThrows) {
    const AppearanceModel model(small_config(), {1, 2});
    EXPECT_THROW(model.forward(Image(16, 16, 3), 7), MissingEmbedding);
    EXPECT_THROW(model.embedding_offset(7), MissingEmbedding);
    EXPECT_THROW(model.forward(Image(16, 16, 1), 1), ShapeError);
}

TEST(Appearance, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    AppearanceModel model(small_config(), {1, 2}, 11);
    perturb_kan(model, rng, 0.4);
    const Image img = random_image(rng, 16, 16);
    Image w(16, 16, 3);
    std::uniform_real_distribution<double> u(-1, 1);
    for (double& v : w.data()) v = u(rng);
    auto loss = [&](const AppearanceModel& m, const Image& in) { return dot(m.forward(in, 2).adjusted, w); };

    const auto r = model.forward(img, 2);
    std::vector<double> grad;
    const Image g_in = model.backward(r, w, grad);
    ASSERT_EQ(grad.size(), model.param_count());

    const double eps = 1e-4;
    auto fd_param = [&](std::size_t k) {
        AppearanceModel m = model;
        m.params()[k] += eps;
        const double up = loss(m, img);
        m.params()[k] -= 2 * eps;
        return (up - loss(m, img)) / (2 * eps);
    };
    // every entry of the embedding of image 2, none of image 1
    const std::size_t e2 = model.embedding_offset(2), e1 = model.embedding_offset(1);
    for (int k = 0; k < model.config().embed_dim; ++k) {
        const double fd = fd_param(e2 + static_cast<std::size_t>(k));
        ASSERT_GT(std::abs(fd), 1e-8);
        EXPECT_NEAR(grad[e2 + static_cast<std::size_t>(k)], fd, 1e-3 * std::abs(fd)) << k;
        EXPECT_EQ(grad[e1 + static_cast<std::size_t>(k)], 0.0);
    }
    // a sample of network weights
    std::uniform_int_distribution<std::size_t> pick(model.network_offset(), model.param_count() - 1);
    for (int s = 0; s < 40; ++s) {
        const std::size_t k = pick(rng);
        const double fd = fd_param(k);
        EXPECT_NEAR(grad[k], fd, 1e-3 * std::max(std::abs(fd), 1e-4)) << k;
    }
    // input image, through the multiplicative path and the pooled network input
    for (int s = 0; s < 30; ++s) {
        const int y = static_cast<int>(pick(rng) % 16), x = static_cast<int>(pick(rng) % 16), c = s % 3;
        Image a = img, b = img;
        a(y, x, c) += eps;
        b(y, x, c) -= eps;
        const double fd = (loss(model, a) - loss(model, b)) / (2 * eps);
        EXPECT_NEAR(g_in(y, x, c), fd, 1e-3 * std::max(std::abs(fd), 1e-4));
    }
}

TEST(Appearance, CheckpointRoundTrip) {
    std::mt19937_64 rng(6);
    AppearanceModel model(small_config(), {4, 8, 15}, 99);
    perturb_kan(model, rng, 0.2);
    fixture::TempDir dir("appearance");
    model.save(dir / "app.bin");
    const auto back = AppearanceModel::load(dir / "app.bin");
    EXPECT_EQ(back.config(), model.config());
    EXPECT_EQ(back.image_ids(), model.image_ids());
    EXPECT_EQ(back.params(), model.params());
    const Image img = random_image(rng, 16, 16);
    EXPECT_EQ(back.forward(img, 8).adjusted, model.forward(img, 8).adjusted);

    // truncated value block
    std::ifstream in(dir / "app.bin", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream(dir / "short.bin", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 16));
    EXPECT_THROW(AppearanceModel::load(dir / "short.bin"), FormatError);
    EXPECT_THROW(AppearanceModel::load(dir / "missing.bin"), IoError);
}

TEST(Appearance, StructuralSimilarityTermDoesNotReachModel) {
    std::mt19937_64 rng(8);
    const GaussianField field = fixture::random_field(rng, 12, 1);
    const CameraView cam = fixture::front_camera(24, 24, 20, 1);
    AppearanceModel model(small_config(), {1}, 3);
    perturb_kan(model, rng, 0.3);
    const Image gt = random_image(rng, 24, 24, 0.0, 1.0);

    LossWeights a{0.0, 0.0, 0.0}, b{0.0, 0.0, 5.0};
    const auto ra = evaluate_view(field, &model, cam, gt, a);
    const auto rb = evaluate_view(field, &model, cam, gt, b);
    EXPECT_GT(rb.loss.total, ra.loss.total);
    EXPECT_EQ(ra.appearance_grad, rb.appearance_grad);
    // while the field gradient does change
    bool differs = false;
    for (std::size_t k = 0; k < ra.field_grad.values.size(); ++k) differs |= ra.field_grad.values[k] != rb.field_grad.values[k];
    EXPECT_TRUE(differs);
}

TEST(Appearance, RenderDoesNotDependOnModel) {
    std::mt19937_64 rng(9);
    const GaussianField field = fixture::random_field(rng, 10, 1);
    const CameraView cam = fixture::front_camera(16, 16, 14, 1);
    const auto before = render(field, cam).color;
    {
        AppearanceModel model(small_config(), {1}, 3);
        perturb_kan(model, rng, 1.0);
        evaluate_view(field, &model, cam, before, LossWeights{});
    }
    EXPECT_EQ(render(field, cam).color, before);
}
