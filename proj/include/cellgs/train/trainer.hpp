#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "cellgs/appearance/model.hpp"
#include "cellgs/core/sh.hpp"
#include "cellgs/ingest/ply.hpp"
#include "cellgs/ingest/scene.hpp"
#include "cellgs/ingest/scene_io.hpp"
#include "cellgs/parallel.hpp"
#include "cellgs/partition/manifest.hpp"
#include "cellgs/train/adam.hpp"
#include "cellgs/train/config.hpp"
#include "cellgs/train/densify.hpp"
#include "cellgs/train/graph.hpp"
#include "cellgs/train/params.hpp"

namespace cellgs {

/// Mean distance from each point to its k nearest other points.
/// Sweep over points sorted by x; exact.
inline std::vector<double> mean_neighbor_distance(const std::vector<Vec3>& pts, int k = 3) {
    const std::size_t n = pts.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pts[a].x() < pts[b].x(); });
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), n - 1);
    std::vector<double> best;
    for (std::size_t r = 0; r < n; ++r) {
        const Vec3& p = pts[order[r]];
        best.clear();
        auto consider = [&](std::size_t q) {
            const double d2 = (pts[order[q]] - p).squaredNorm();
            if (best.size() < kk) {
                best.push_back(d2);
                std::push_heap(best.begin(), best.end());
            } else if (d2 < best.front()) {
                std::pop_heap(best.begin(), best.end());
                best.back() = d2;
                std::push_heap(best.begin(), best.end());
            }
        };
        auto bound = [&](std::size_t q) {
            const double dx = pts[order[q]].x() - p.x();
            return best.size() == kk && dx * dx > best.front();
        };
        for (std::size_t q = r + 1; q < n && !bound(q); ++q) consider(q);
        for (std::size_t q = r; q-- > 0 && !bound(q);) consider(q);
        double sum = 0.0;
        for (double d2 : best) sum += std::sqrt(d2);
        out[order[r]] = sum / static_cast<double>(best.size());
    }
    return out;
}

/// Radius of the camera-center bounding sphere, times 1.1; falls back to the
/// point cloud when the cameras are (nearly) coincident.
inline double training_extent(const std::vector<const CameraView*>& cams, const std::vector<Vec3>& pts) {
    auto sphere = [](const std::vector<Vec3>& v) {
        if (v.empty()) return 0.0;
        Vec3 mean = Vec3::Zero();
        for (const auto& p : v) mean += p;
        mean /= static_cast<double>(v.size());
        double r = 0.0;
        for (const auto& p : v) r = std::max(r, (p - mean).norm());
        return r;
    };
    std::vector<Vec3> centers;
    for (const auto* c : cams) centers.push_back(c->center());
    double r = 1.1 * sphere(centers);
    if (r < 1e-6) r = sphere(pts);
    return r > 1e-6 ? r : 1.0;
}

/// One isotropic splat per point: scale from the 3-nearest-neighbor distance,
/// constant color from the point rgb, uniform opacity.
inline GaussianField init_field_from_points(const std::vector<ScenePoint>& points, int sh_degree, double opacity,
                                            double scene_extent) {
    GaussianField f;
    f.sh_degree = sh_degree;
    f.scene_extent = scene_extent;
    std::vector<Vec3> pos;
    pos.reserve(points.size());
    for (const auto& p : points) pos.push_back(p.position);
    const auto dist = mean_neighbor_distance(pos, 3);
    const double fallback = 0.01 * scene_extent;
    const double op = logit(opacity);
    for (std::size_t i = 0; i < points.size(); ++i) {
        GaussianSplat s;
        s.center = pos[i];
        const double d = dist[i] > 1e-7 ? dist[i] : fallback;
        s.log_scale = Vec3::Constant(std::log(d));
        s.opacity_logit = op;
        s.sh.assign(static_cast<std::size_t>(sh_coeff_count(sh_degree)), Vec3::Zero());
        const Vec3 rgb(points[i].rgb[0] / 255.0, points[i].rgb[1] / 255.0, points[i].rgb[2] / 255.0);
        s.sh[0] = rgb_to_sh_dc(rgb);
        f.splats.push_back(std::move(s));
    }
    return f;
}

inline std::vector<double> pack_field(const GaussianField& f) {
    const int stride = layout::stride(f.sh_degree);
    std::vector<double> p(f.size() * static_cast<std::size_t>(stride));
    for (std::size_t i = 0; i < f.size(); ++i)
        for (int k = 0; k < stride; ++k) p[i * stride + k] = splat_param(f.splats[i], k);
    return p;
}

inline void unpack_field(GaussianField& f, std::span<const double> p) {
    const int stride = layout::stride(f.sh_degree);
    if (p.size() != f.size() * static_cast<std::size_t>(stride)) throw ShapeError("parameter vector size mismatch");
    for (std::size_t i = 0; i < f.size(); ++i)
        for (int k = 0; k < stride; ++k) splat_param(f.splats[i], k) = p[i * stride + k];
}

struct LossRow {
    int iteration = 0;
    LossBreakdown loss;
    std::size_t splats = 0;
    LossWeights weights;  // in effect at this step
};

struct TrainResult {
    GaussianField field;
    std::optional<AppearanceModel> appearance;
    std::vector<LossRow> losses;
    std::vector<DensifyReport> densify;
};

using TrainProgress = std::function<void(const LossRow&)>;

/// Optimizes `field` against the given training views (each with its image).
inline TrainResult train_field(GaussianField field, const std::vector<const CameraView*>& views, const TrainConfig& cfg,
                               ThreadPool* pool = nullptr, const TrainProgress& progress = {}) {
    cfg.validate();
    field.validate();
    if (views.empty()) throw InvalidParameter("no training views");
    for (const auto* v : views) {
        if (v->image.height() != v->height() || v->image.width() != v->width()) {
            throw ShapeError("training view " + v->name + " has no matching image");
        }
    }
    TrainResult res;
    std::mt19937_64 rng(cfg.seed);
    if (cfg.appearance_enabled) {
        std::vector<int> ids;
        for (const auto* v : views) ids.push_back(v->image_id);
        res.appearance.emplace(cfg.appearance, ids, cfg.seed);
    }
    AppearanceModel* app = res.appearance ? &*res.appearance : nullptr;

    const int stride = layout::stride(field.sh_degree);
    Adam field_opt(field.size() * static_cast<std::size_t>(stride));
    Adam app_opt(app ? app->param_count() : 0);
    DensifyStats stats(field.size());
    const double extent = field.scene_extent;
    const int decay_steps = cfg.lr.center_decay_steps > 0 ? cfg.lr.center_decay_steps : cfg.iterations;

    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    for (int it = 1; it <= cfg.iterations; ++it) {
        if (cursor == order.size()) {
            order.resize(views.size());
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const CameraView& cam = *views[order[cursor++]];
        const bool collect = it <= cfg.densify_stop;

        GraphOptions go;
        go.render = cfg.render;
        go.densify_samples = collect;
        const LossWeights w = cfg.weights_at(it);
        GraphResult g = evaluate_view(field, app, cam, cam.image, w, go, pool);

        LossRow row{it, g.loss, field.size(), w};
        if (it == 1 || it == cfg.iterations || it % std::max(1, cfg.log_interval) == 0) res.losses.push_back(row);
        if (progress) progress(row);

        if (!field.empty()) {
            const double lr_center = exponential_decay(cfg.lr.center_init * extent, cfg.lr.center_final * extent,
                                                       it - 1, decay_steps);
            auto lr = [&](std::size_t i) {
                switch (layout::group_of(static_cast<int>(i % static_cast<std::size_t>(stride)))) {
                    case layout::Group::Center: return lr_center;
                    case layout::Group::LogScale: return cfg.lr.scale;
                    case layout::Group::Rotation: return cfg.lr.rotation;
                    case layout::Group::Opacity: return cfg.lr.opacity;
                    case layout::Group::ShDc: return cfg.lr.sh;
                    case layout::Group::ShRest: return cfg.lr.sh * cfg.lr.sh_rest_factor;
                }
                return 0.0;
            };
            std::vector<double> p = pack_field(field);
            field_opt.step(p, g.field_grad.values, lr);
            unpack_field(field, p);
        }
        if (app) {
            const double a = cfg.lr.appearance;
            app_opt.step(app->params(), g.appearance_grad, [a](std::size_t) { return a; });
        }
        if (collect) accumulate_view_gradient(stats, g.view_grad);

        if (is_densify_iteration(cfg, it)) {
            DensifyReport rep = densify_and_prune(field, stats, cfg, it, rng);
            field_opt.remap(rep.origin, static_cast<std::size_t>(stride));
            if (rep.opacity_reset) {
                for (std::size_t i = 0; i < field.size(); ++i) field_opt.reset_element(i * stride + layout::kOpacity);
            }
            res.densify.push_back(std::move(rep));
        } else if (is_opacity_reset_iteration(cfg, it)) {
            for (std::size_t i : reset_opacities(field, cfg.reset_opacity)) {
                field_opt.reset_element(i * stride + layout::kOpacity);
            }
        }
    }
    res.field = std::move(field);
    return res;
}

inline void write_losses_csv(const std::filesystem::path& path, const std::vector<LossRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "iteration,L,L_c,L_d,L_n,lambda_d,lambda_n\n";
    out.precision(10);
    for (const auto& r : rows) {
        out << r.iteration << "," << r.loss.total << "," << r.loss.color << "," << r.loss.depth << ","
            << r.loss.normal << "," << r.weights.depth << "," << r.weights.normal << "\n";
    }
}

inline void write_densify_csv(const std::filesystem::path& path, const std::vector<DensifyReport>& reps) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "iteration,before,after,cloned,split,pruned,opacity_reset\n";
    for (const auto& r : reps) {
        out << r.iteration << "," << r.before << "," << r.after << "," << r.cloned << "," << r.split << ","
            << r.pruned << "," << (r.opacity_reset ? 1 : 0) << "\n";
    }
}

/// Writes field.ply, appearance.ckpt (when present), losses.csv, densify.csv and config.json.
inline void write_train_outputs(const std::filesystem::path& dir, const TrainResult& r, const TrainConfig& cfg) {
    std::filesystem::create_directories(dir);
    export_field(r.field, dir / "field.ply");
    if (r.appearance) r.appearance->save(dir / "appearance.ckpt");
    write_losses_csv(dir / "losses.csv", r.losses);
    write_densify_csv(dir / "densify.csv", r.densify);
    std::ofstream out(dir / "config.json");
    out << config_to_json(cfg).dump(2) << "\n";
}

/// Training inputs of one cell: its final point set and its selected cameras
/// that belong to the training split.
struct CellData {
    std::vector<ScenePoint> points;
    std::vector<const CameraView*> views;
};

inline CellData cell_data(const Cell& cell, const SceneModel& model, const Split& split) {
    CellData d;
    for (std::size_t i : cell.final_points) {
        if (i >= model.points.size()) throw LayoutError("manifest point index out of range");
        d.points.push_back(model.points[i]);
    }
    const auto lookup = model.camera_lookup();
    for (int id : cell.cameras) {
        if (!std::binary_search(split.train.begin(), split.train.end(), id)) continue;
        auto it = lookup.find(id);
        if (it == lookup.end()) throw LayoutError("manifest references unknown image " + std::to_string(id));
        d.views.push_back(&model.cameras[it->second]);
    }
    return d;
}

inline TrainResult train_cell(const Cell& cell, const SceneModel& model, const Split& split, const TrainConfig& cfg,
                              ThreadPool* pool = nullptr, const TrainProgress& progress = {}) {
    const CellData d = cell_data(cell, model, split);
    if (d.points.empty()) throw LayoutError("cell " + std::to_string(cell.id) + " has no points");
    if (d.views.empty()) throw LayoutError("cell " + std::to_string(cell.id) + " has no training cameras");
    std::vector<Vec3> pos;
    for (const auto& p : d.points) pos.push_back(p.position);
    GaussianField init = init_field_from_points(d.points, cfg.sh_degree, cfg.init_opacity, training_extent(d.views, pos));
    return train_field(std::move(init), d.views, cfg, pool, progress);
}

/// Trains one cell of a stored partition and writes its outputs into the cell directory.
inline TrainResult train_cell(const std::filesystem::path& cells_dir, int cell_id, const TrainConfig& cfg,
                              const std::filesystem::path& split_file = {}, ThreadPool* pool = nullptr,
                              const TrainProgress& progress = {}) {
    const StoredPartition part = read_partition(cells_dir);
    if (cell_id < 0 || cell_id >= static_cast<int>(part.layout.cells.size())) {
        throw InvalidParameter("no cell " + std::to_string(cell_id));
    }
    const SceneModel model = read_scene(part.scene_dir);
    const Split split = resolve_split(model, part.scene_dir, split_file);
    TrainResult r = train_cell(part.layout.cells[static_cast<std::size_t>(cell_id)], model, split, cfg, pool, progress);
    write_train_outputs(cell_dir(cells_dir, cell_id), r, cfg);
    return r;
}

}  // namespace cellgs
