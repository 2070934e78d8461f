#include <gtest/gtest.h>

#include <sstream>

#include "cellgs/cli/app.hpp"
#include "oracles/temp_dir.hpp"

using namespace cellgs;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = 0;
    std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "cellgs");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Outcome o;
    o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::vector<std::vector<int>> cameras_per_cell(const fs::path& cells) {
    std::vector<std::vector<int>> out;
    for (const auto& c : read_partition(cells).layout.cells) out.push_back(c.cameras);
    return out;
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
    for (const auto& args : std::vector<std::vector<std::string>>{
             {}, {"frobnicate"}, {"partition"}, {"partition", "--scene", "x", "--out", "y", "--nx", "0"},
             {"partition", "--scene", "x", "--out", "y", "--vis-threshold", "1.5"},
             {"train", "--cells", "x"}, {"train", "--cell", "0", "--all"},
             {"render", "--field", "f.ply", "--out", "o"}}) {
        const auto r = invoke(args);
        EXPECT_EQ(r.code, cli::kExitUsage) << (args.empty() ? "" : args[0]);
        EXPECT_FALSE(r.err.empty());
    }
    const auto help = invoke({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("partition"), std::string::npos);
}

TEST(Cli, PipelineErrorsExitTwo) {
    fixture::TempDir dir("cli_err");
    const auto r = invoke({"partition", "--scene", (dir / "missing").string(), "--out", (dir / "cells").string()});
    EXPECT_EQ(r.code, cli::kExitPipeline);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
    EXPECT_EQ(invoke({"stitch", "--cells", (dir / "nothing").string(), "--out", (dir / "m.ply").string()}).code,
              cli::kExitPipeline);
    EXPECT_EQ(invoke({"render", "--field", (dir / "none.ply").string(), "--pose", "p.txt", "--out", dir.path().string()}).code,
              cli::kExitPipeline);
}

TEST(Cli, LowerThresholdSelectsMoreCameras) {
    fixture::TempDir dir("cli_thr");
    const auto scene = dir / "scene";
    ASSERT_EQ(invoke({"synth", "--out", (dir / "demo").string(), "--seed", "1"}).code, 0);
    ASSERT_EQ(invoke({"ingest", "--colmap", (dir / "demo" / "sparse").string(), "--images",
                   (dir / "demo" / "images").string(), "--out", scene.string(), "--manhattan", "off"})
                  .code,
              0);
    const auto run_at = [&](const std::string& thr, const std::string& mode) {
        const auto out = dir / ("cells_" + thr + mode);
        const auto r = invoke({"partition", "--scene", scene.string(), "--nx", "2", "--ny", "2", "--beta", "0.2",
                            "--vis-threshold", thr, "--vis-mode", mode, "--out", out.string(), "--threads", "1"});
        EXPECT_EQ(r.code, 0) << r.err;
        return cameras_per_cell(out);
    };
    const auto loose = run_at("0", "inclusive");
    const auto mid = run_at("0.5", "positive");
    const auto strict = run_at("1", "positive");
    ASSERT_EQ(loose.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(loose[i].size(), 25u);  // every camera
        EXPECT_TRUE(std::includes(loose[i].begin(), loose[i].end(), mid[i].begin(), mid[i].end()));
        EXPECT_TRUE(std::includes(mid[i].begin(), mid[i].end(), strict[i].begin(), strict[i].end()));
    }
}

TEST(Cli, EndToEndOnTinyBudget) {
    fixture::TempDir dir("cli_e2e");
    const auto demo = dir / "demo", scene = dir / "scene", cells = dir / "cells";
    ASSERT_EQ(invoke({"synth", "--out", demo.string()}).code, 0);
    ASSERT_TRUE(fs::exists(demo / "split.json"));
    auto r = invoke({"ingest", "--colmap", (demo / "sparse").string(), "--images", (demo / "images").string(), "--out",
                  scene.string(), "--manhattan", "off", "--split", (demo / "split.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    r = invoke({"partition", "--scene", scene.string(), "--nx", "2", "--ny", "1", "--out", cells.string()});
    ASSERT_EQ(r.code, 0) << r.err;

    const fs::path config = dir / "config.json";
    std::ofstream(config) << R"({"appearance": {"embed_dim": 4, "channels": 4, "depth": 2, "grid": 5}})";
    r = invoke({"train", "--all", "--cells", cells.string(), "--iterations", "5", "--quiet", "--config", config.string(),
             "--seed", "3", "--threads", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (int id : {0, 1}) EXPECT_TRUE(fs::exists(cell_dir(cells, id) / "field.ply"));
    const auto first = import_field(cell_dir(cells, 0) / "field.ply");

    // same seed, same cell result
    r = invoke({"train", "--cell", "0", "--cells", cells.string(), "--iterations", "5", "--quiet", "--config",
             config.string(), "--seed", "3", "--threads", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(import_field(cell_dir(cells, 0) / "field.ply"), first);

    r = invoke({"stitch", "--cells", cells.string(), "--out", (dir / "merged.ply").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto merged = import_field(dir / "merged.ply");
    EXPECT_GT(merged.size(), 0u);

    r = invoke({"render", "--field", (dir / "merged.ply").string(), "--traj", (demo / "novel_poses.txt").string(), "--out",
             (dir / "frames").string(), "--background", "0.1,0.1,0.1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "frames" / "frame_0000.png"));

    r = invoke({"eval", "--field", (dir / "merged.ply").string(), "--scene", scene.string(), "--json",
             (dir / "scores.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("mean PSNR"), std::string::npos);
    const auto scores = nlohmann::json::parse(std::ifstream(dir / "scores.json"));
    EXPECT_GT(scores.at("mean_psnr").get<double>(), 0.0);

    EXPECT_EQ(invoke({"render", "--field", (dir / "merged.ply").string(), "--pose", (demo / "novel_poses.txt").string(),
                   "--out", (dir / "f2").string(), "--background", "1,2"})
                  .code,
              cli::kExitPipeline);
}
