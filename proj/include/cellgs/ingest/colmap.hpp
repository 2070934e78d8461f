#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>

#include "cellgs/ingest/scene.hpp"
#include "cellgs/ingest/text.hpp"

namespace cellgs {

namespace detail {

struct LineReader {
    std::ifstream in;
    std::string file;
    std::size_t line_no = 0;
    std::string line;

    explicit LineReader(const std::filesystem::path& path) : in(path), file(path.string()) {
        if (!in) throw IoError("cannot open " + file);
    }

    bool next() {
        if (!std::getline(in, line)) return false;
        ++line_no;
        return true;
    }

    /// Next line that is neither empty nor a comment.
    bool next_data() {
        while (next()) {
            const auto t = text::trim(line);
            if (!t.empty() && t.front() != '#') return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(file, line_no, what); }

    template <typename T>
    T number(std::string_view tok, const char* field) const {
        T v{};
        if (!text::parse(tok, v)) {
            throw ParseError(file, line_no, std::string("invalid ") + field + " '" + std::string(tok) + "'");
        }
        return v;
    }
};

}  // namespace detail

/// Reads cameras.txt, images.txt and points3D.txt from a COLMAP text model.
/// Supports PINHOLE and SIMPLE_PINHOLE cameras. Image pixels are not loaded.
inline SceneModel parse_colmap_text(const std::filesystem::path& dir) {
    std::unordered_map<int, Intrinsics> intrinsics;
    {
        detail::LineReader r(dir / "cameras.txt");
        while (r.next_data()) {
            const auto tok = text::split_ws(r.line);
            if (tok.size() < 4) r.fail("expected CAMERA_ID MODEL WIDTH HEIGHT PARAMS...");
            const int id = r.number<int>(tok[0], "camera id");
            const std::string model(tok[1]);
            Intrinsics k;
            k.width = r.number<int>(tok[2], "width");
            k.height = r.number<int>(tok[3], "height");
            if (model == "PINHOLE") {
                if (tok.size() != 8) r.fail("PINHOLE expects fx fy cx cy");
                k.fx = r.number<double>(tok[4], "fx");
                k.fy = r.number<double>(tok[5], "fy");
                k.cx = r.number<double>(tok[6], "cx");
                k.cy = r.number<double>(tok[7], "cy");
            } else if (model == "SIMPLE_PINHOLE") {
                if (tok.size() != 7) r.fail("SIMPLE_PINHOLE expects f cx cy");
                k.fx = k.fy = r.number<double>(tok[4], "f");
                k.cx = r.number<double>(tok[5], "cx");
                k.cy = r.number<double>(tok[6], "cy");
            } else {
                throw UnsupportedModel(r.file + ":" + std::to_string(r.line_no) +
                                       ": unsupported camera model " + model);
            }
            intrinsics[id] = k;
        }
    }

    SceneModel model;
    {
        detail::LineReader r(dir / "images.txt");
        while (r.next_data()) {
            const auto tok = text::split_ws(r.line);
            if (tok.size() < 10) r.fail("expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME");
            CameraView cam;
            cam.image_id = r.number<int>(tok[0], "image id");
            Vec4 q;
            for (int i = 0; i < 4; ++i) q[i] = r.number<double>(tok[1 + i], "quaternion");
            Vec3 t;
            for (int i = 0; i < 3; ++i) t[i] = r.number<double>(tok[5 + i], "translation");
            const int cam_id = r.number<int>(tok[8], "camera id");
            // names may contain spaces: everything after CAMERA_ID
            const auto name_start = static_cast<std::size_t>(tok[9].data() - r.line.data());
            cam.name = std::string(text::trim(std::string_view(r.line).substr(name_start)));
            const auto it = intrinsics.find(cam_id);
            if (it == intrinsics.end()) r.fail("image references unknown camera " + std::to_string(cam_id));
            cam.intrinsics = it->second;
            try {
                cam.pose.rotation = quat_to_rotation(normalized_quat(q));
            } catch (const InvalidParameter& e) {
                r.fail(e.what());
            }
            cam.pose.translation = t;
            model.cameras.push_back(std::move(cam));
            r.next();  // POINTS2D line, possibly empty
        }
    }

    {
        const auto lookup = model.camera_lookup();
        detail::LineReader r(dir / "points3D.txt");
        while (r.next_data()) {
            const auto tok = text::split_ws(r.line);
            if (tok.size() < 8 || (tok.size() - 8) % 2 != 0) {
                r.fail("expected POINT3D_ID X Y Z R G B ERROR (IMAGE_ID POINT2D_IDX)...");
            }
            ScenePoint p;
            p.id = r.number<std::uint64_t>(tok[0], "point id");
            for (int i = 0; i < 3; ++i) p.position[i] = r.number<double>(tok[1 + i], "coordinate");
            for (int i = 0; i < 3; ++i) {
                const int c = r.number<int>(tok[4 + i], "color");
                if (c < 0 || c > 255) r.fail("color out of range");
                p.rgb[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(c);
            }
            p.error = r.number<double>(tok[7], "error");
            if (!p.position.allFinite()) r.fail("non-finite point position");
            for (std::size_t i = 8; i < tok.size(); i += 2) {
                const int image_id = r.number<int>(tok[i], "track image id");
                (void)r.number<long long>(tok[i + 1], "track point2D index");
                if (!lookup.contains(image_id)) {
                    r.fail("point " + std::to_string(p.id) + " references missing image " +
                           std::to_string(image_id));
                }
                p.track.push_back(image_id);
            }
            model.points.push_back(std::move(p));
        }
    }
    return model;
}

/// Writes the model as a COLMAP text model (one PINHOLE camera per image).
inline void write_colmap_text(const SceneModel& model, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw IoError("cannot write " + (dir / name).string());
        return out;
    };
    using text::format;
    {
        auto out = open("cameras.txt");
        out << "# Camera list with one line of data per camera:\n"
               "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
        for (const auto& c : model.cameras) {
            const auto& k = c.intrinsics;
            out << c.image_id << " PINHOLE " << k.width << " " << k.height << " " << format(k.fx)
                << " " << format(k.fy) << " " << format(k.cx) << " " << format(k.cy) << "\n";
        }
    }
    std::map<int, std::vector<std::pair<std::uint64_t, std::size_t>>> observations;
    {
        auto out = open("points3D.txt");
        out << "# 3D point list with one line of data per point:\n"
               "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
        for (const auto& p : model.points) {
            out << p.id << " " << format(p.position.x()) << " " << format(p.position.y()) << " "
                << format(p.position.z()) << " " << int(p.rgb[0]) << " " << int(p.rgb[1]) << " "
                << int(p.rgb[2]) << " " << format(p.error);
            for (int id : p.track) {
                auto& obs = observations[id];
                out << " " << id << " " << obs.size();
                obs.emplace_back(p.id, obs.size());
            }
            out << "\n";
        }
    }
    {
        auto out = open("images.txt");
        out << "# Image list with two lines of data per image:\n"
               "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
               "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
        for (const auto& c : model.cameras) {
            const Vec4 q = rotation_to_quat(c.pose.rotation);
            const Vec3& t = c.pose.translation;
            out << c.image_id << " " << format(q[0]) << " " << format(q[1]) << " " << format(q[2])
                << " " << format(q[3]) << " " << format(t.x()) << " " << format(t.y()) << " "
                << format(t.z()) << " " << c.image_id << " " << c.name << "\n";
            // 2D positions are not retained; observations are written at the image center
            bool first = true;
            if (auto it = observations.find(c.image_id); it != observations.end()) {
                for (const auto& [pid, idx] : it->second) {
                    (void)idx;
                    out << (first ? "" : " ") << format(c.intrinsics.cx) << " "
                        << format(c.intrinsics.cy) << " " << pid;
                    first = false;
                }
            }
            out << "\n";
        }
    }
}

/// Loads each camera's image from `images_dir / name`.
inline void load_images(SceneModel& model, const std::filesystem::path& images_dir) {
    for (auto& cam : model.cameras) {
        cam.image = read_image(images_dir / cam.name);
        if (cam.image.width() != cam.width() || cam.image.height() != cam.height()) {
            throw ShapeError("image " + cam.name + " does not match its camera size");
        }
    }
}

}  // namespace cellgs
