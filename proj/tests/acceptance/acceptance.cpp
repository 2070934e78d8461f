// Acceptance checks. Prints one PASS/FAIL line per criterion; exit code 0 iff
// every requested criterion passed.
//
//   acceptance [--cache DIR] [criterion ...]
//
// With no criterion names every check runs. The synthetic recovery run is
// shared by `recovery` and `densify_schedule`; with --cache its summary is
// stored in DIR/recovery.json and reused; `prepare` recomputes it.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cellgs/cellgs.hpp"
#include "oracles/brute_render.hpp"
#include "oracles/finite_diff.hpp"
#include "oracles/naive_metrics.hpp"
#include "oracles/peak_sampling.hpp"
#include "oracles/random_scene.hpp"

using namespace cellgs;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::vector<const CameraView*> views_of(const SceneModel& m, const std::vector<int>& ids) {
    std::vector<const CameraView*> v;
    for (int id : ids) v.push_back(&m.cameras[*m.camera_index(id)]);
    return v;
}

// ---------------------------------------------------------------- gradients

Verdict gradients() {
    std::mt19937_64 rng(2024);
    const LossWeights variants[] = {LossWeights{}, LossWeights{1000, 0.5, 0.2}, LossWeights{10, 5, 1}};
    std::map<std::string, double> worst;
    std::size_t checked = 0;
    for (int scene = 0; scene < 20; ++scene) {
        const int splats = 5 + static_cast<int>(rng() % 16);  // 5..20
        const auto s = oracle::make_grad_scene(rng, splats, 16, static_cast<int>(rng() % 3));
        for (const auto& e : oracle::check_gradients(s, variants[scene % 3])) {
            worst[e.group] = std::max(worst[e.group], e.max_error);
            checked += e.checked;
        }
    }
    double max_err = 0.0;
    std::string groups;
    for (const auto& [g, e] : worst) {
        max_err = std::max(max_err, e);
        groups += (groups.empty() ? "" : " ") + g + fmt("=%.1e", e);
    }
    const bool all_groups = worst.size() == 9;
    return {max_err < 1e-3 && all_groups,
            fmt("20 scenes, %zu parameters, %zu groups, max relative error %.2e (%s)", checked, worst.size(), max_err,
                groups.c_str())};
}

// ------------------------------------------------------------- intersection

Verdict intersection() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst_psi = 0.0, worst_t = 0.0;
    for (int i = 0; i < 1000; ++i) {
        GaussianSplat s;
        s.center = Vec3(u(rng), u(rng), u(rng));
        s.log_scale = Vec3(u(rng), u(rng), u(rng)) * 1.2;
        s.rotation = fixture::random_quat(rng);
        s.sh = {Vec3::Zero()};
        const Vec3 origin = Vec3(u(rng), u(rng), u(rng)).normalized() * 6.0;
        const Vec3 aim = s.center + 1.5 * Vec3(u(rng), u(rng), u(rng));
        const Ray ray = Ray::through(origin, aim - origin);
        const RayHit h = ray_gaussian_peak(s, ray);
        const auto o = oracle::sample_peak(s, ray.origin, ray.direction, 0.0, 14.0);
        worst_psi = std::max(worst_psi, std::abs(h.psi - o.psi));
        // the argmax is only defined to the precision the peak allows; skip flat tails
        if (o.psi > 1e-6) worst_t = std::max(worst_t, std::abs(h.t_star - o.t_star));
    }
    return {worst_psi <= 1e-6 && worst_t <= 1e-6,
            fmt("1000 pairs, max |psi - oracle| %.2e, max |t* - oracle| %.2e", worst_psi, worst_t)};
}

// ----------------------------------------------------------------- renderer

Verdict renderer() {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int scene = 0; scene < 50; ++scene) {
        const auto f = fixture::random_field(rng, 1 + static_cast<int>(rng() % 40), static_cast<int>(rng() % 4));
        CameraView cam = fixture::front_camera(8, 8, 7.0);
        if (scene % 2) cam.pose = Pose::look_at(Vec3(u(rng), u(rng), -0.5 + 0.3 * u(rng)), Vec3(0.2 * u(rng), 0.2 * u(rng), 3.0));
        RenderOptions o;
        o.background = Vec3(0.3, 0.2, 0.1);
        o.tile_size = 1 + static_cast<int>(rng() % 8);
        const auto got = render(f, cam, o);
        const auto want = oracle::brute_render(f, cam, o.background);
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(got.color(y, x, c) - want.at(y, x).color[c]));
            }
        }
    }
    return {worst <= 1e-6, fmt("50 scenes at 8x8, max per-pixel difference %.2e", worst)};
}

// ---------------------------------------------------------------- recovery

struct RecoverySummary {
    double psnr = 0.0, ssim = 0.0, seconds = 0.0;
    std::size_t initial = 0, final_count = 0;
    std::vector<int> densify_iterations;
    bool increased = false;
};

RecoverySummary run_recovery() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto d = synth::make_demo();
    const auto train = views_of(d.model, d.split.train);
    const auto test = views_of(d.model, d.split.test);
    std::vector<Vec3> points;
    for (const auto& p : d.model.points) points.push_back(p.position);

    GaussianField init = synth::perturb_truth(d.truth, 0.05, 7);
    init.scene_extent = training_extent(train, points);
    const TrainConfig cfg;  // defaults: 2000 iterations
    ThreadPool pool(ThreadPool::default_threads());
    const TrainResult r = train_field(init, train, cfg, &pool);

    RecoverySummary s;
    const auto rep = metrics::evaluate(r.field, test, cfg.render, &pool);
    s.psnr = rep.mean_psnr;
    s.ssim = rep.mean_ssim;
    s.initial = init.size();
    s.final_count = r.field.size();
    for (const auto& e : r.densify) {
        s.densify_iterations.push_back(e.iteration);
        s.increased |= e.after > e.before;
    }
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return s;
}

class RecoveryCache {
public:
    explicit RecoveryCache(std::optional<fs::path> dir) : dir_(std::move(dir)) {}

    const RecoverySummary& get() {
        if (value_) return *value_;
        const auto file = dir_ ? std::optional(*dir_ / "recovery.json") : std::nullopt;
        if (file && fs::exists(*file)) {
            const auto j = nlohmann::json::parse(std::ifstream(*file));
            RecoverySummary s;
            s.psnr = j.at("psnr");
            s.ssim = j.at("ssim");
            s.seconds = j.at("seconds");
            s.initial = j.at("initial");
            s.final_count = j.at("final");
            s.densify_iterations = j.at("densify_iterations").get<std::vector<int>>();
            s.increased = j.at("increased");
            value_ = s;
            return *value_;
        }
        value_ = run_recovery();
        if (file) {
            fs::create_directories(*dir_);
            const auto& s = *value_;
            std::ofstream(*file) << nlohmann::json{{"psnr", s.psnr},
                                                   {"ssim", s.ssim},
                                                   {"seconds", s.seconds},
                                                   {"initial", s.initial},
                                                   {"final", s.final_count},
                                                   {"densify_iterations", s.densify_iterations},
                                                   {"increased", s.increased}}
                                        .dump(2);
        }
        return *value_;
    }

private:
    std::optional<fs::path> dir_;
    std::optional<RecoverySummary> value_;
};

Verdict recovery(RecoveryCache& cache) {
    const auto& s = cache.get();
    return {s.psnr >= 30.0 && s.ssim >= 0.90,
            fmt("held-out PSNR %.2f dB (need 30), SSIM %.4f (need 0.90), %zu -> %zu splats, %.0f s", s.psnr, s.ssim,
                s.initial, s.final_count, s.seconds)};
}

Verdict densify_schedule(RecoveryCache& cache) {
    // every iteration a default run could reach
    const TrainConfig cfg;
    int last = 0;
    for (int it = 1; it <= 60000; ++it) {
        if (is_densify_iteration(cfg, it)) last = it;
    }
    const auto& s = cache.get();
    int last_run = 0;
    for (int it : s.densify_iterations) last_run = std::max(last_run, it);
    return {last <= 15000 && last_run <= 15000 && s.increased,
            fmt("last scheduled event %d of 60000, last event in the recovery run %d, count increased: %s", last,
                last_run, s.increased ? "yes" : "no")};
}

// -------------------------------------------------------- partition/stitch

Verdict partition_stitch() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto d = synth::make_demo();
    PartitionOptions po;
    po.nx = po.ny = 2;
    po.beta = 0.2;
    po.threshold = 0.25;
    ThreadPool pool(ThreadPool::default_threads());
    const CellLayout layout = partition_scene(d.model, po, &pool);

    std::vector<GaussianField> fields;
    for (const auto& c : layout.cells) {
        TrainConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(c.id);
        fields.push_back(train_cell(c, d.model, d.split, cfg, &pool).field);
    }
    const GaussianField merged = crop_and_merge(fields, layout, &pool);

    std::set<std::array<double, 3>> centers;
    for (const auto& s : merged.splats) centers.insert({s.center.x(), s.center.y(), s.center.z()});
    const std::size_t duplicates = merged.size() - centers.size();

    double sum = 0.0, lo = 1e9;
    for (const auto& cam : d.novel) {
        const double p = metrics::psnr(render_novel_view(merged, {cam, RenderOptions{}}, &pool), cam.image);
        sum += p;
        lo = std::min(lo, p);
    }
    const double mean = sum / static_cast<double>(d.novel.size());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {mean >= 25.0 && duplicates == 0,
            fmt("%zu novel views, mean PSNR %.2f dB (min %.2f, need 25), %zu merged splats, %zu duplicate centers, %.0f s",
                d.novel.size(), mean, lo, merged.size(), duplicates, secs)};
}

// -------------------------------------------------------------- visibility

bool nested(const CellLayout& big, const CellLayout& small) {
    for (std::size_t i = 0; i < big.cells.size(); ++i) {
        const auto& a = big.cells[i].cameras;
        const auto& b = small.cells[i].cameras;
        if (!std::includes(a.begin(), a.end(), b.begin(), b.end())) return false;
    }
    return true;
}

SceneModel random_layout(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SceneModel m;
    const double w = 2.0 + 8.0 * u(rng), h = 2.0 + 8.0 * u(rng);
    const int cams = 6 + static_cast<int>(rng() % 20);
    for (int k = 0; k < cams; ++k) {
        CameraView c;
        c.image_id = k + 1;
        c.name = "c" + std::to_string(k);
        c.intrinsics = Intrinsics{40, 40, 32, 24, 64, 48};
        const Vec3 eye(w * u(rng), h * u(rng), 1.0 + 3.0 * u(rng));
        const Vec3 at(w * u(rng), h * u(rng), 0.0);
        c.pose = Pose::look_at(eye, at, Vec3::UnitZ());
        m.cameras.push_back(c);
    }
    for (int k = 0; k < 300; ++k) {
        ScenePoint p;
        p.id = static_cast<std::uint64_t>(k);
        p.position = Vec3(w * u(rng), h * u(rng), 0.3 * u(rng));
        m.points.push_back(p);
    }
    return m;
}

Verdict visibility() {
    std::vector<SceneModel> scenes{synth::make_demo().model};
    std::mt19937_64 rng(5);
    for (int i = 0; i < 20; ++i) scenes.push_back(random_layout(rng));
    int layouts = 0, failures = 0;
    for (const auto& m : scenes) {
        for (VisMode mode : {VisMode::Positive, VisMode::Inclusive}) {
            PartitionOptions po;
            po.nx = 1 + static_cast<int>(rng() % 3);
            po.ny = 1 + static_cast<int>(rng() % 3);
            po.vis_mode = mode;
            std::vector<CellLayout> runs;
            for (double t : {0.0, 0.25, 0.5}) {
                po.threshold = t;
                runs.push_back(partition_scene(m, po));
            }
            failures += !nested(runs[0], runs[1]) + !nested(runs[1], runs[2]);
            ++layouts;
        }
    }
    return {failures == 0, fmt("%zu scenes, %d partitions, %d non-nested pairs among 0 > 0.25 > 0.50", scenes.size(),
                               layouts, failures)};
}

// ------------------------------------------------------------ accumulation

Verdict accumulation() {
    // direct: the same product with opposite signs at two pixels
    DensifyStats st(1);
    ViewGradient v;
    Mat23 j;
    j << 1.5, 0.0, -0.4, 0.2, 2.0, 0.7;
    v.jacobian = {j};
    const Vec2 g(0.8, -0.3);
    v.samples = {{0, g}, {0, -g}};
    accumulate_view_gradient(st, v);
    const double z = (g.transpose() * j).norm();
    const bool direct = std::abs(st.accum[0] - 2.0 * z) <= 1e-12 * z && st.classic[0] == 0.0;

    // through the renderer: one splat centered between two pixels, both too dark
    GaussianField f;
    f.sh_degree = 0;
    GaussianSplat s;
    s.center = Vec3(0, 0, 3);
    s.log_scale = Vec3::Constant(std::log(0.4));
    s.opacity_logit = 0.0;
    s.sh = {rgb_to_sh_dc(Vec3(0.3, 0.3, 0.3))};
    f.splats.push_back(s);
    const CameraView cam = fixture::front_camera(2, 1, 2.0);
    const Image gt(1, 2, 3, 1.0);
    GraphOptions go;
    go.densify_samples = true;
    const auto r = evaluate_view(f, nullptr, cam, gt, LossWeights{0, 0, 0}, go);
    DensifyStats rs(1);
    accumulate_view_gradient(rs, r.view_grad);
    const bool pipeline = r.view_grad.samples.size() == 2 && rs.accum[0] > 0.0 && rs.classic[0] <= 1e-12 * rs.accum[0];
    return {direct && pipeline, fmt("direct: accumulated %.6g vs 2|z| %.6g, summed norm %.1g; rendered pair: "
                                    "accumulated %.3e, summed norm %.1e",
                                    st.accum[0], 2.0 * z, st.classic[0], rs.accum[0], rs.classic[0])};
}

// ----------------------------------------------------------------- metrics

Verdict metric_check() {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_psnr = 0.0, worst_ssim = 0.0, self = 0.0;
    for (int i = 0; i < 100; ++i) {
        const int h = 11 + static_cast<int>(rng() % 30), w = 11 + static_cast<int>(rng() % 30);
        Image a(h, w, 3), b(h, w, 3);
        for (double& x : a.data()) x = u(rng);
        const double noise = 0.3 * u(rng);
        for (std::size_t k = 0; k < a.data().size(); ++k) b.data()[k] = std::clamp(a.data()[k] + noise * (u(rng) - 0.5), 0.0, 1.0);
        worst_psnr = std::max(worst_psnr, std::abs(metrics::psnr(a, b) - oracle::naive_psnr(a, b)));
        worst_ssim = std::max(worst_ssim, std::abs(metrics::ssim(a, b) - oracle::naive_ssim(a, b)));
        self = std::max(self, std::abs(metrics::ssim(a, a) - 1.0));
    }
    return {worst_psnr <= 1e-6 && worst_ssim <= 1e-6 && self == 0.0,
            fmt("100 pairs, max PSNR difference %.2e, max SSIM difference %.2e, max |SSIM(a,a) - 1| %.1e", worst_psnr,
                worst_ssim, self)};
}

// -------------------------------------------------------------- appearance

Verdict appearance() {
    std::mt19937_64 rng(17);
    const auto field = fixture::random_field(rng, 30, 2);
    const CameraView cam = fixture::front_camera(64, 48, 50, 4);
    const Image rendered = render(field, cam).color;
    const AppearanceModel fresh(AppearanceConfig{}, {4}, 99);
    const auto out = fresh.forward(rendered, 4);
    double diff = 0.0;
    for (std::size_t k = 0; k < rendered.data().size(); ++k) diff = std::max(diff, std::abs(out.adjusted.data()[k] - rendered.data()[k]));

    // D-SSIM weight must not move the appearance gradient
    auto s = oracle::make_grad_scene(rng, 12, 24, 1);
    const auto a = evaluate_view(s.field, &s.appearance, s.camera, s.target, LossWeights{0, 0, 0});
    const auto b = evaluate_view(s.field, &s.appearance, s.camera, s.target, LossWeights{0, 0, 10});
    double gdiff = 0.0, gnorm = 0.0;
    for (std::size_t k = 0; k < a.appearance_grad.size(); ++k) {
        gdiff = std::max(gdiff, std::abs(a.appearance_grad[k] - b.appearance_grad[k]));
        gnorm = std::max(gnorm, std::abs(a.appearance_grad[k]));
    }
    return {diff == 0.0 && gdiff == 0.0 && gnorm > 0.0 && b.loss.total > a.loss.total,
            fmt("identity max abs diff %.1e; appearance gradient change under D-SSIM weight %.1e (gradient scale %.1e)",
                diff, gdiff, gnorm)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks", "acceptance"};
    std::string cache_dir;
    std::vector<std::string> wanted;
    app.add_option("--cache", cache_dir, "Directory for the shared recovery run summary");
    app.add_option("criteria", wanted, "Criteria to run (default: all)");
    CLI11_PARSE(app, argc, argv);

    RecoveryCache cache(cache_dir.empty() ? std::nullopt : std::optional<fs::path>(cache_dir));
    const std::vector<std::pair<std::string, std::function<Verdict()>>> all{
        {"gradients", gradients},
        {"intersection", intersection},
        {"renderer", renderer},
        {"recovery", [&] { return recovery(cache); }},
        {"partition_stitch", partition_stitch},
        {"visibility", visibility},
        {"accumulation", accumulation},
        {"densify_schedule", [&] { return densify_schedule(cache); }},
        {"metrics", metric_check},
        {"appearance", appearance},
    };
    if (wanted.size() == 1 && wanted[0] == "prepare") {
        // always a fresh run
        if (!cache_dir.empty()) fs::remove(fs::path(cache_dir) / "recovery.json");
        const auto& s = cache.get();
        std::cout << "recovery run: " << s.initial << " -> " << s.final_count << " splats in " << s.seconds << " s\n";
        return 0;
    }
    for (const auto& w : wanted) {
        if (std::none_of(all.begin(), all.end(), [&](const auto& c) { return c.first == w; })) {
            std::cerr << "unknown criterion '" << w << "'\n";
            return 2;
        }
    }
    bool ok = true;
    for (const auto& [name, check] : all) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
        ok &= v.pass;
    }
    return ok ? 0 : 1;
}
