#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cellgs/error.hpp"
#include "cellgs/partition/layout.hpp"

namespace cellgs {

using Json = nlohmann::json;

inline Json rect_to_json(const Rect& r) {
    return Json{{"x0", r.x0}, {"y0", r.y0}, {"x1", r.x1}, {"y1", r.y1}, {"closed_x0", r.closed_x0},
                {"closed_y0", r.closed_y0}};
}

inline Rect rect_from_json(const Json& j) {
    return Rect{j.at("x0").get<double>(), j.at("y0").get<double>(), j.at("x1").get<double>(),
                j.at("y1").get<double>(), j.value("closed_x0", true), j.value("closed_y0", true)};
}

inline const char* vis_mode_name(VisMode m) { return m == VisMode::Positive ? "positive" : "inclusive"; }

inline VisMode parse_vis_mode(const std::string& s) {
    if (s == "positive") return VisMode::Positive;
    if (s == "inclusive") return VisMode::Inclusive;
    throw InvalidParameter("unknown vis-mode '" + s + "' (expected positive or inclusive)");
}

inline Json cell_to_json(const Cell& c, const CellLayout& layout) {
    Json vis = Json::array();
    for (const auto& v : c.visibility) {
        vis.push_back({{"camera", v.camera_id}, {"ratio", v.ratio}, {"projected_area", v.projected_area},
                       {"image_area", v.image_area}});
    }
    return Json{{"cell", c.id},
                {"ix", c.ix},
                {"iy", c.iy},
                {"bounds", rect_to_json(c.bounds)},
                {"expanded", rect_to_json(c.expanded)},
                {"beta", layout.beta},
                {"threshold", layout.threshold},
                {"vis_mode", vis_mode_name(layout.vis_mode)},
                {"cameras", c.cameras},
                {"added_cameras", c.added_cameras},
                {"points", c.points},
                {"dilated_points", c.dilated_points},
                {"final_points", c.final_points},
                {"visibility", vis}};
}

inline Cell cell_from_json(const Json& j) {
    Cell c;
    c.id = j.at("cell").get<int>();
    c.ix = j.at("ix").get<int>();
    c.iy = j.at("iy").get<int>();
    c.bounds = rect_from_json(j.at("bounds"));
    c.expanded = rect_from_json(j.at("expanded"));
    c.cameras = j.at("cameras").get<std::vector<int>>();
    c.added_cameras = j.at("added_cameras").get<std::vector<int>>();
    c.points = j.at("points").get<std::vector<std::size_t>>();
    c.dilated_points = j.at("dilated_points").get<std::vector<std::size_t>>();
    c.final_points = j.at("final_points").get<std::vector<std::size_t>>();
    if (j.contains("visibility")) {
        for (const auto& v : j.at("visibility")) {
            c.visibility.push_back(VisibilityReport{v.at("camera").get<int>(), c.id, v.at("ratio").get<double>(),
                                                    v.at("projected_area").get<double>(),
                                                    v.at("image_area").get<double>()});
        }
    }
    return c;
}

inline std::filesystem::path cell_dir(const std::filesystem::path& cells_dir, int id) {
    return cells_dir / ("cell_" + std::to_string(id));
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed writing " + path.string());
}

inline Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

/// Writes `cells_dir/layout.json` and `cells_dir/cell_<i>/manifest` for every cell.
inline void write_partition(const CellLayout& layout, const std::filesystem::path& cells_dir,
                            const std::filesystem::path& scene_dir) {
    std::filesystem::create_directories(cells_dir);
    Json cells = Json::array();
    for (const auto& c : layout.cells) {
        const auto dir = cell_dir(cells_dir, c.id);
        std::filesystem::create_directories(dir);
        Json m = cell_to_json(c, layout);
        m["scene"] = std::filesystem::absolute(scene_dir).string();
        write_json(dir / "manifest", m);
        cells.push_back(c.id);
    }
    write_json(cells_dir / "layout.json",
               Json{{"scene", std::filesystem::absolute(scene_dir).string()},
                    {"nx", layout.nx},
                    {"ny", layout.ny},
                    {"beta", layout.beta},
                    {"threshold", layout.threshold},
                    {"vis_mode", vis_mode_name(layout.vis_mode)},
                    {"scene_box", rect_to_json(layout.scene_box)},
                    {"xs", layout.xs},
                    {"ys", layout.ys},
                    {"cells", cells}});
}

struct StoredPartition {
    CellLayout layout;
    std::filesystem::path scene_dir;
};

inline StoredPartition read_partition(const std::filesystem::path& cells_dir) {
    try {
        const Json j = read_json(cells_dir / "layout.json");
        StoredPartition p;
        p.scene_dir = j.at("scene").get<std::string>();
        auto& l = p.layout;
        l.nx = j.at("nx").get<int>();
        l.ny = j.at("ny").get<int>();
        l.beta = j.at("beta").get<double>();
        l.threshold = j.at("threshold").get<double>();
        l.vis_mode = parse_vis_mode(j.at("vis_mode").get<std::string>());
        l.scene_box = rect_from_json(j.at("scene_box"));
        l.xs = j.at("xs").get<std::vector<double>>();
        l.ys = j.at("ys").get<std::vector<double>>();
        for (int id : j.at("cells").get<std::vector<int>>()) {
            l.cells.push_back(cell_from_json(read_json(cell_dir(cells_dir, id) / "manifest")));
        }
        for (std::size_t i = 0; i < l.cells.size(); ++i) {
            if (l.cells[i].id != static_cast<int>(i)) throw LayoutError("cell manifests are not numbered 0..N-1");
        }
        return p;
    } catch (const Json::exception& e) {
        throw FormatError(cells_dir.string() + ": malformed partition manifest: " + e.what());
    }
}

}  // namespace cellgs
