#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "cellgs/ingest/colmap.hpp"
#include "cellgs/ingest/manhattan.hpp"
#include "cellgs/ingest/ply.hpp"
#include "cellgs/ingest/scene_io.hpp"
#include "cellgs/metrics/evaluate.hpp"
#include "cellgs/parallel.hpp"
#include "cellgs/partition/manifest.hpp"
#include "cellgs/partition/visibility.hpp"
#include "cellgs/render/pose_file.hpp"
#include "cellgs/render/renderer.hpp"
#include "cellgs/stitch/stitch.hpp"
#include "cellgs/synth/demo.hpp"
#include "cellgs/train/config.hpp"
#include "cellgs/train/trainer.hpp"

namespace cellgs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitPipeline = 2;

namespace fs = std::filesystem;

/// Reads nine numbers (row-major 3x3 rotation).
inline Mat3 read_rotation_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    Mat3 r;
    for (int i = 0; i < 9; ++i) {
        if (!(in >> r(i / 3, i % 3))) throw FormatError(path.string() + ": expected 9 numbers");
    }
    if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || r.determinant() < 0.0) {
        throw FormatError(path.string() + ": not a rotation matrix");
    }
    return r;
}

inline std::uint64_t cell_seed(std::uint64_t seed, int cell) {
    return seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(cell) + 1;
}

inline Vec3 parse_background(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        double x = 0.0;
        if (!text::parse(text::trim(tok), x)) throw InvalidParameter("bad background component '" + tok + "'");
        v.push_back(x);
    }
    if (v.size() != 3) throw InvalidParameter("background needs three comma-separated values");
    return Vec3(v[0], v[1], v[2]);
}

/// Pipeline driver. Returns 0 on success, 1 on usage error, 2 on pipeline error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Cell-partitioned Gaussian splatting reconstruction toolkit", "cellgs"};
    app.require_subcommand(1);
    app.fallthrough();
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker threads per task (0: all cores)");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Read a COLMAP text model, align it and write a scene directory");
    std::string colmap_dir, images_dir, ingest_out, manhattan = "auto", ingest_split;
    std::uint64_t ingest_seed = 0;
    ingest->add_option("--colmap", colmap_dir, "COLMAP text model directory")->required();
    ingest->add_option("--images", images_dir, "Image directory")->required();
    ingest->add_option("--out", ingest_out, "Output scene directory")->required();
    ingest->add_option("--manhattan", manhattan, "auto | off | path to a 3x3 rotation file");
    ingest->add_option("--split", ingest_split, "Split file copied into the scene");
    ingest->add_option("--seed", ingest_seed, "Random seed");

    // partition
    auto* part = app.add_subcommand("partition", "Split a scene into cells and select cameras");
    std::string part_scene, part_out, vis_mode = "positive";
    PartitionOptions popts;
    part->add_option("--scene", part_scene, "Scene directory")->required();
    part->add_option("--nx", popts.nx, "Cells along x")->check(CLI::PositiveNumber);
    part->add_option("--ny", popts.ny, "Cells along y")->check(CLI::PositiveNumber);
    part->add_option("--beta", popts.beta, "Boundary expansion fraction")->check(CLI::NonNegativeNumber);
    part->add_option("--vis-threshold", popts.threshold, "Camera visibility threshold")->check(CLI::Range(0.0, 1.0));
    part->add_option("--vis-mode", vis_mode, "positive | inclusive")->check(CLI::IsMember({"positive", "inclusive"}));
    part->add_option("--out", part_out, "Output cells directory")->required();

    // train
    auto* train = app.add_subcommand("train", "Train one cell or all cells");
    std::string train_cells = "out/cells", train_config, train_split;
    std::optional<int> train_cell_id;
    bool train_all = false;
    int jobs = 1;
    std::optional<int> iterations;
    std::uint64_t train_seed = 0;
    bool quiet = false;
    auto* cell_opt = train->add_option("--cell", train_cell_id, "Cell id");
    auto* all_opt = train->add_flag("--all", train_all, "Train every cell");
    cell_opt->excludes(all_opt);
    train->add_option("--cells", train_cells, "Cells directory");
    train->add_option("--config", train_config, "Training config (JSON)");
    train->add_option("--split", train_split, "Split file");
    train->add_option("--jobs", jobs, "Cells trained concurrently with --all")->check(CLI::PositiveNumber);
    train->add_option("--iterations", iterations, "Override the configured iteration count")->check(CLI::NonNegativeNumber);
    train->add_option("--seed", train_seed, "Random seed");
    train->add_flag("--quiet", quiet, "No progress output");

    // stitch
    auto* stitch = app.add_subcommand("stitch", "Crop trained cells and merge them into one field");
    std::string stitch_dir, stitch_out;
    stitch->add_option("--cells", stitch_dir, "Cells directory")->required();
    stitch->add_option("--out", stitch_out, "Merged PLY path")->required();

    // render
    auto* rend = app.add_subcommand("render", "Render a field at poses");
    std::string render_field, pose_file, traj_file, render_out, background = "0,0,0";
    rend->add_option("--field", render_field, "Field PLY")->required();
    auto* pose_opt = rend->add_option("--pose", pose_file, "Pose file");
    auto* traj_opt = rend->add_option("--traj", traj_file, "Trajectory file");
    pose_opt->excludes(traj_opt);
    rend->add_option("--out", render_out, "Output directory")->required();
    rend->add_option("--background", background, "Background color r,g,b in [0,1]");

    // eval
    auto* eval = app.add_subcommand("eval", "Score a field on the held-out views of a scene");
    std::string eval_field, eval_scene, eval_split, eval_json;
    eval->add_option("--field", eval_field, "Field PLY")->required();
    eval->add_option("--scene", eval_scene, "Scene directory")->required();
    eval->add_option("--split", eval_split, "Split file");
    eval->add_option("--json", eval_json, "Also write the scores as JSON");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
    std::string demo = "small", synth_out = "synth";
    std::uint64_t synth_seed = 0;
    synth->add_option("--demo", demo, "Demo preset")->check(CLI::IsMember({"small"}));
    synth->add_option("--out", synth_out, "Output directory");
    synth->add_option("--seed", synth_seed, "Random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << "run with --help for usage\n";
        return kExitUsage;
    }
    if (*rend && !*pose_opt && !*traj_opt) {
        err << "error: render needs --pose or --traj\n";
        return kExitUsage;
    }
    if (*train && !train_all && !train_cell_id) {
        err << "error: train needs --cell ID or --all\n";
        return kExitUsage;
    }

    const unsigned nthreads = threads ? threads : ThreadPool::default_threads();
    try {
        if (*ingest) {
            SceneModel model = parse_colmap_text(colmap_dir);
            model.validate();
            load_images(model, images_dir);
            SceneInfo info;
            if (manhattan == "auto") {
                ManhattanOptions mo;
                mo.seed = ingest_seed;
                try {
                    ManhattanResult r = manhattan_align(model, mo);
                    info.alignment = r.rotation;
                    model = std::move(r.model);
                } catch (const AlignmentFailed& e) {
                    err << "warning: Manhattan alignment skipped: " << e.what() << "\n";
                }
            } else if (manhattan != "off") {
                info.alignment = read_rotation_file(manhattan);
                model = apply_rotation(model, info.alignment);
            }
            write_scene(model, ingest_out, info);
            if (!ingest_split.empty()) write_split(fs::path(ingest_out) / "split.json", read_split(ingest_split, model), model);
            out << "ingested " << model.cameras.size() << " cameras and " << model.points.size() << " points into "
                << ingest_out << "\n";
        } else if (*part) {
            popts.vis_mode = parse_vis_mode(vis_mode);
            const SceneModel model = read_scene(part_scene, false);
            ThreadPool pool(nthreads);
            const CellLayout layout = partition_scene(model, popts, &pool);
            write_partition(layout, part_out, part_scene);
            for (const auto& c : layout.cells) {
                out << "cell " << c.id << ": " << c.final_points.size() << " points, " << c.cameras.size()
                    << " cameras (" << c.added_cameras.size() << " by visibility)\n";
            }
        } else if (*train) {
            TrainConfig cfg = train_config.empty() ? TrainConfig{} : load_config(train_config);
            if (iterations) cfg.iterations = *iterations;
            const StoredPartition stored = read_partition(train_cells);
            std::vector<int> ids;
            if (train_all) {
                for (const auto& c : stored.layout.cells) ids.push_back(c.id);
            } else {
                ids.push_back(*train_cell_id);
            }
            const int njobs = std::max(1, std::min<int>(jobs, static_cast<int>(ids.size())));
            const unsigned per_job = std::max(1u, nthreads / static_cast<unsigned>(njobs));
            std::mutex io;
            std::atomic<std::size_t> next{0};
            std::exception_ptr failure;
            auto worker = [&] {
                ThreadPool pool(per_job);
                for (std::size_t k = next++; k < ids.size(); k = next++) {
                    const int id = ids[k];
                    TrainConfig c = cfg;
                    c.seed = cell_seed(train_seed, id);
                    try {
                        TrainProgress progress;
                        if (!quiet) {
                            progress = [&, id](const LossRow& row) {
                                if (row.iteration % 100 != 0 && row.iteration != c.iterations) return;
                                std::lock_guard lock(io);
                                out << "cell " << id << " it " << row.iteration << " loss " << row.loss.total
                                    << " splats " << row.splats << "\n";
                            };
                        }
                        const TrainResult r = train_cell(train_cells, id, c, train_split, &pool, progress);
                        std::lock_guard lock(io);
                        out << "cell " << id << ": " << r.field.size() << " splats -> "
                            << (cell_dir(train_cells, id) / "field.ply").string() << "\n";
                    } catch (...) {
                        std::lock_guard lock(io);
                        if (!failure) failure = std::current_exception();
                    }
                }
            };
            std::vector<std::thread> pool_threads;
            for (int j = 1; j < njobs; ++j) pool_threads.emplace_back(worker);
            worker();
            for (auto& t : pool_threads) t.join();
            if (failure) std::rethrow_exception(failure);
        } else if (*stitch) {
            ThreadPool pool(nthreads);
            const GaussianField merged = stitch_cells(stitch_dir, &pool);
            if (fs::path(stitch_out).has_parent_path()) fs::create_directories(fs::path(stitch_out).parent_path());
            export_field(merged, stitch_out);
            out << "merged " << merged.size() << " splats into " << stitch_out << "\n";
        } else if (*rend) {
            const GaussianField field = import_field(render_field);
            const auto poses = read_poses(*pose_opt ? pose_file : traj_file);
            RenderOptions ro;
            ro.background = parse_background(background);
            ThreadPool pool(nthreads);
            fs::create_directories(render_out);
            for (std::size_t i = 0; i < poses.size(); ++i) {
                std::ostringstream name;
                name << "frame_" << std::setw(4) << std::setfill('0') << i << ".png";
                write_png(fs::path(render_out) / name.str(), render_novel_view(field, {poses[i], ro}, &pool));
            }
            out << "rendered " << poses.size() << " frame(s) into " << render_out << "\n";
        } else if (*eval) {
            const GaussianField field = import_field(eval_field);
            const SceneModel model = read_scene(eval_scene);
            const Split split = resolve_split(model, eval_scene, eval_split);
            std::vector<const CameraView*> views;
            for (int id : split.test) views.push_back(&model.cameras[*model.camera_index(id)]);
            if (views.empty()) throw InvalidParameter("the split has no test views");
            ThreadPool pool(nthreads);
            const auto report = metrics::evaluate(field, views, {}, &pool);
            out << std::fixed << std::setprecision(4);
            for (const auto& v : report.views) out << v.name << " PSNR " << v.psnr << " SSIM " << v.ssim << "\n";
            out << "mean PSNR " << report.mean_psnr << " SSIM " << report.mean_ssim << "\n";
            if (!eval_json.empty()) {
                nlohmann::json j{{"mean_psnr", report.mean_psnr}, {"mean_ssim", report.mean_ssim}, {"views", nlohmann::json::array()}};
                for (const auto& v : report.views) j["views"].push_back({{"name", v.name}, {"psnr", v.psnr}, {"ssim", v.ssim}});
                std::ofstream(eval_json) << j.dump(2) << "\n";
            }
        } else if (*synth) {
            synth::DemoOptions o;
            o.seed = synth_seed;
            const auto d = synth::make_demo(o);
            synth::write_demo(d, synth_out);
            out << "wrote demo scene (" << d.truth.size() << " splats, " << d.split.train.size() << " train / "
                << d.split.test.size() << " test views) to " << synth_out << "\n";
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitPipeline;
    }
    return kExitOk;
}

}  // namespace cellgs::cli
