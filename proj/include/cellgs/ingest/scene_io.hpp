#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cellgs/image.hpp"
#include "cellgs/ingest/colmap.hpp"
#include "cellgs/ingest/scene.hpp"

namespace cellgs {

/// Ingested scene directory:
///   sparse/{cameras,images,points3D}.txt   aligned COLMAP text model
///   images/<name>                          PNG pixels (kept under the original name)
///   scene.json                             alignment rotation and counts
///   split.json                             optional train/test split
struct SceneInfo {
    Mat3 alignment = Mat3::Identity();
};

inline void write_scene(const SceneModel& model, const std::filesystem::path& dir, const SceneInfo& info = {}) {
    namespace fs = std::filesystem;
    write_colmap_text(model, dir / "sparse");
    for (const auto& cam : model.cameras) {
        if (cam.image.empty()) continue;
        const fs::path p = dir / "images" / cam.name;
        fs::create_directories(p.parent_path());
        write_png(p, cam.image);
    }
    nlohmann::json rot = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) rot.push_back({info.alignment(r, 0), info.alignment(r, 1), info.alignment(r, 2)});
    const nlohmann::json j{{"alignment", rot}, {"cameras", model.cameras.size()}, {"points", model.points.size()}};
    std::ofstream out(dir / "scene.json");
    if (!out) throw IoError("cannot write " + (dir / "scene.json").string());
    out << j.dump(2) << "\n";
}

inline SceneInfo read_scene_info(const std::filesystem::path& dir) {
    SceneInfo info;
    std::ifstream in(dir / "scene.json");
    if (!in) return info;
    try {
        const auto j = nlohmann::json::parse(in);
        const auto& rot = j.at("alignment");
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) info.alignment(r, c) = rot.at(r).at(c).get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "scene.json").string() + ": " + e.what());
    }
    return info;
}

inline SceneModel read_scene(const std::filesystem::path& dir, bool with_images = true) {
    if (!std::filesystem::is_directory(dir / "sparse")) {
        throw IoError(dir.string() + " is not a scene directory (no sparse/)");
    }
    SceneModel m = parse_colmap_text(dir / "sparse");
    if (with_images) load_images(m, dir / "images");
    return m;
}

/// Image ids of the training and held-out views.
struct Split {
    std::vector<int> train;
    std::vector<int> test;
};

/// Every `every`-th image in name order is held out, starting with the first.
inline Split default_split(const SceneModel& model, int every = 8) {
    if (every < 2) throw InvalidParameter("split interval must be at least 2");
    std::vector<const CameraView*> cams;
    for (const auto& c : model.cameras) cams.push_back(&c);
    std::sort(cams.begin(), cams.end(), [](auto a, auto b) { return a->name < b->name; });
    Split s;
    for (std::size_t i = 0; i < cams.size(); ++i) {
        (i % static_cast<std::size_t>(every) == 0 ? s.test : s.train).push_back(cams[i]->image_id);
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

/// Split file: {"train": [names], "test": [names]}. Images named in neither list are ignored.
inline Split read_split(const std::filesystem::path& path, const SceneModel& model) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split file " + path.string());
    Split s;
    try {
        const auto j = nlohmann::json::parse(in);
        auto resolve = [&](const char* key, std::vector<int>& out) {
            for (const auto& name : j.at(key).get<std::vector<std::string>>()) {
                auto it = std::find_if(model.cameras.begin(), model.cameras.end(),
                                       [&](const CameraView& c) { return c.name == name; });
                if (it == model.cameras.end()) throw FormatError(path.string() + ": unknown image '" + name + "'");
                out.push_back(it->image_id);
            }
            std::sort(out.begin(), out.end());
        };
        resolve("train", s.train);
        resolve("test", s.test);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    for (int id : s.test) {
        if (std::binary_search(s.train.begin(), s.train.end(), id)) {
            throw FormatError(path.string() + ": image id " + std::to_string(id) + " is in both train and test");
        }
    }
    return s;
}

inline void write_split(const std::filesystem::path& path, const Split& split, const SceneModel& model) {
    auto names = [&](const std::vector<int>& ids) {
        std::vector<std::string> out;
        for (int id : ids) {
            const auto idx = model.camera_index(id);
            if (!idx) throw InvalidParameter("split references unknown image id " + std::to_string(id));
            out.push_back(model.cameras[*idx].name);
        }
        return out;
    };
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << nlohmann::json{{"train", names(split.train)}, {"test", names(split.test)}}.dump(2) << "\n";
}

/// Explicit file, else `scene_dir/split.json`, else every 8th image held out.
inline Split resolve_split(const SceneModel& model, const std::filesystem::path& scene_dir,
                           const std::filesystem::path& explicit_file = {}) {
    if (!explicit_file.empty()) return read_split(explicit_file, model);
    if (!scene_dir.empty() && std::filesystem::exists(scene_dir / "split.json")) {
        return read_split(scene_dir / "split.json", model);
    }
    return default_split(model);
}

}  // namespace cellgs
