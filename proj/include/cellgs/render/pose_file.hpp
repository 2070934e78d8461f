#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cellgs/camera.hpp"
#include "cellgs/error.hpp"
#include "cellgs/ingest/text.hpp"

namespace cellgs {

/// Pose record: the 4x4 world-to-camera matrix in row-major order (16 numbers)
/// followed by `fx fy cx cy W H`. A pose file holds one record; a trajectory
/// file holds any number. Whitespace and line breaks are free; '#' starts a comment.
inline std::string format_pose(const CameraView& cam) {
    std::ostringstream s;
    s.precision(17);
    const auto& r = cam.pose.rotation;
    const auto& t = cam.pose.translation;
    for (int i = 0; i < 3; ++i) s << r(i, 0) << " " << r(i, 1) << " " << r(i, 2) << " " << t[i] << "\n";
    s << "0 0 0 1\n";
    const auto& k = cam.intrinsics;
    s << k.fx << " " << k.fy << " " << k.cx << " " << k.cy << " " << k.width << " " << k.height << "\n";
    return s.str();
}

inline std::vector<CameraView> parse_poses(const std::string& content, const std::string& source = "pose") {
    std::vector<double> nums;
    std::istringstream in(content);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        for (auto tok : text::split_ws(line)) {
            double v = 0.0;
            if (!text::parse(tok, v)) throw ParseError(source, static_cast<std::size_t>(line_no), "invalid number '" + std::string(tok) + "'");
            nums.push_back(v);
        }
    }
    constexpr std::size_t kRecord = 22;
    if (nums.empty() || nums.size() % kRecord != 0) {
        throw FormatError(source + ": expected a multiple of 22 numbers, got " + std::to_string(nums.size()));
    }
    std::vector<CameraView> out;
    for (std::size_t r = 0; r < nums.size(); r += kRecord) {
        const double* m = nums.data() + r;
        CameraView c;
        c.image_id = static_cast<int>(out.size());
        c.name = "pose_" + std::to_string(out.size());
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) c.pose.rotation(i, j) = m[i * 4 + j];
            c.pose.translation[i] = m[i * 4 + 3];
        }
        if (m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0) {
            throw FormatError(source + ": last matrix row must be 0 0 0 1");
        }
        c.intrinsics.fx = m[16];
        c.intrinsics.fy = m[17];
        c.intrinsics.cx = m[18];
        c.intrinsics.cy = m[19];
        c.intrinsics.width = static_cast<int>(m[20]);
        c.intrinsics.height = static_cast<int>(m[21]);
        if (c.intrinsics.width != m[20] || c.intrinsics.height != m[21]) {
            throw FormatError(source + ": image size must be integral");
        }
        try {
            c.validate();
        } catch (const InvalidParameter& e) {
            throw FormatError(source + ": " + e.what());
        }
        out.push_back(std::move(c));
    }
    return out;
}

inline std::vector<CameraView> read_poses(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_poses(ss.str(), path.string());
}

inline void write_poses(const std::filesystem::path& path, const std::vector<CameraView>& cams) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& c : cams) out << format_pose(c);
}

}  // namespace cellgs
