#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cellgs/core/sh.hpp"
#include "cellgs/core/splat.hpp"
#include "cellgs/ingest/text.hpp"

namespace cellgs {

enum class PlyPrecision { Float32, Float64 };

/// Property names of the splat PLY vertex element, in file order.
inline std::vector<std::string> splat_ply_properties(int sh_degree) {
    std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    const int rest = 3 * (sh_coeff_count(sh_degree) - 1);
    for (int i = 0; i < rest; ++i) names.push_back("f_rest_" + std::to_string(i));
    names.push_back("opacity");
    for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
    return names;
}

namespace detail {

inline void put_le(std::vector<char>& buf, double v, PlyPrecision p) {
    if (p == PlyPrecision::Float64) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        const auto* b = reinterpret_cast<const char*>(&bits);
        buf.insert(buf.end(), b, b + 8);
    } else {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        const auto* b = reinterpret_cast<const char*>(&bits);
        buf.insert(buf.end(), b, b + 4);
    }
}

/// Flattened per-splat values in the order of splat_ply_properties.
inline std::vector<double> splat_ply_row(const GaussianSplat& s, int sh_degree) {
    const int nc = sh_coeff_count(sh_degree);
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(14 + 3 * nc));
    for (int i = 0; i < 3; ++i) row.push_back(s.center[i]);
    row.insert(row.end(), {0.0, 0.0, 0.0});
    for (int c = 0; c < 3; ++c) row.push_back(s.sh[0][c]);
    // f_rest is channel-major: all R coefficients, then G, then B
    for (int c = 0; c < 3; ++c) {
        for (int j = 1; j < nc; ++j) row.push_back(s.sh[static_cast<std::size_t>(j)][c]);
    }
    row.push_back(s.opacity_logit);
    for (int i = 0; i < 3; ++i) row.push_back(s.log_scale[i]);
    for (int i = 0; i < 4; ++i) row.push_back(s.rotation[i]);
    return row;
}

}  // namespace detail

/// Binary little-endian splat PLY. Opacity is stored as a logit, scales as
/// logs, rotation as (w, x, y, z). The scene extent travels in a header comment.
inline void export_field(const GaussianField& field, const std::filesystem::path& path,
                         PlyPrecision precision = PlyPrecision::Float64) {
    field.validate();
    const auto names = splat_ply_properties(field.sh_degree);
    const char* type = precision == PlyPrecision::Float64 ? "double" : "float";
    std::string header = "ply\nformat binary_little_endian 1.0\n";
    header += "comment scene_extent " + text::format(field.scene_extent) + "\n";
    header += "element vertex " + std::to_string(field.size()) + "\n";
    for (const auto& n : names) header += std::string("property ") + type + " " + n + "\n";
    header += "end_header\n";

    std::vector<char> body;
    body.reserve(field.size() * names.size() * 8);
    for (const auto& s : field.splats) {
        for (double v : detail::splat_ply_row(s, field.sh_degree)) detail::put_le(body, v, precision);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

inline GaussianField import_field(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    auto next_line = [&]() {
        if (!std::getline(in, line)) throw FormatError(path.string() + ": truncated PLY header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
    };
    next_line();
    if (line != "ply") throw FormatError(path.string() + ": not a PLY file");

    struct Prop {
        std::string name;
        int size;
        bool is_double;
    };
    std::vector<Prop> props;
    std::size_t count = 0;
    bool in_vertex = false, seen_vertex = false, format_ok = false;
    double extent = 0.0;
    for (;;) {
        next_line();
        const auto tok = text::split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "end_header") break;
        if (tok[0] == "format") {
            if (tok.size() < 2 || tok[1] != "binary_little_endian") {
                throw FormatError(path.string() + ": only binary_little_endian PLY is supported");
            }
            format_ok = true;
        } else if (tok[0] == "comment") {
            if (tok.size() == 3 && tok[1] == "scene_extent") text::parse(tok[2], extent);
        } else if (tok[0] == "element") {
            if (tok.size() != 3) throw FormatError(path.string() + ": malformed element line");
            in_vertex = tok[1] == "vertex";
            if (in_vertex) {
                if (!text::parse(tok[2], count)) throw FormatError(path.string() + ": bad vertex count");
                seen_vertex = true;
            } else {
                std::size_t other = 0;
                text::parse(tok[2], other);
                if (other != 0) throw FormatError(path.string() + ": unexpected element " + std::string(tok[1]));
            }
        } else if (tok[0] == "property") {
            if (!in_vertex) continue;
            if (tok.size() != 3) throw FormatError(path.string() + ": unsupported property line '" + line + "'");
            Prop p{std::string(tok[2]), 0, false};
            if (tok[1] == "float" || tok[1] == "float32") {
                p.size = 4;
            } else if (tok[1] == "double" || tok[1] == "float64") {
                p.size = 8;
                p.is_double = true;
            } else {
                throw FormatError(path.string() + ": unsupported property type " + std::string(tok[1]));
            }
            props.push_back(std::move(p));
        }
    }
    if (!format_ok || !seen_vertex) throw FormatError(path.string() + ": missing format or vertex element");

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < props.size(); ++i) index.emplace(props[i].name, i);
    int rest = 0;
    while (index.contains("f_rest_" + std::to_string(rest))) ++rest;
    if (rest % 3 != 0 || sh_degree_for_count(static_cast<std::size_t>(rest / 3 + 1)) < 0) {
        throw FormatError(path.string() + ": f_rest count " + std::to_string(rest) +
                          " does not match any SH degree");
    }
    const int degree = sh_degree_for_count(static_cast<std::size_t>(rest / 3 + 1));
    std::string missing;
    for (const auto& n : splat_ply_properties(degree)) {
        if (!index.contains(n)) missing += (missing.empty() ? "" : ", ") + n;
    }
    if (!missing.empty()) throw FormatError(path.string() + ": missing properties: " + missing);

    std::size_t stride = 0;
    std::vector<std::size_t> offset(props.size());
    for (std::size_t i = 0; i < props.size(); ++i) {
        offset[i] = stride;
        stride += static_cast<std::size_t>(props[i].size);
    }
    std::vector<char> body(stride * count);
    if (!in.read(body.data(), static_cast<std::streamsize>(body.size()))) {
        throw FormatError(path.string() + ": truncated vertex data");
    }
    auto value = [&](std::size_t row, const std::string& name) {
        const std::size_t i = index.at(name);
        const char* p = body.data() + row * stride + offset[i];
        if (props[i].is_double) {
            std::uint64_t bits;
            std::memcpy(&bits, p, 8);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            return std::bit_cast<double>(bits);
        }
        std::uint32_t bits;
        std::memcpy(&bits, p, 4);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        return static_cast<double>(std::bit_cast<float>(bits));
    };

    GaussianField field;
    field.sh_degree = degree;
    const int nc = sh_coeff_count(degree);
    field.splats.resize(count);
    for (std::size_t r = 0; r < count; ++r) {
        auto& s = field.splats[r];
        s.center = Vec3(value(r, "x"), value(r, "y"), value(r, "z"));
        s.sh.assign(static_cast<std::size_t>(nc), Vec3::Zero());
        for (int c = 0; c < 3; ++c) s.sh[0][c] = value(r, "f_dc_" + std::to_string(c));
        for (int c = 0; c < 3; ++c) {
            for (int j = 1; j < nc; ++j) {
                s.sh[static_cast<std::size_t>(j)][c] = value(r, "f_rest_" + std::to_string(c * (nc - 1) + j - 1));
            }
        }
        s.opacity_logit = value(r, "opacity");
        for (int i = 0; i < 3; ++i) s.log_scale[i] = value(r, "scale_" + std::to_string(i));
        for (int i = 0; i < 4; ++i) s.rotation[i] = value(r, "rot_" + std::to_string(i));
    }
    if (!(extent > 0.0)) {
        // no extent recorded: bounding sphere of the centers
        Vec3 mean = Vec3::Zero();
        for (const auto& s : field.splats) mean += s.center;
        if (count > 0) mean /= static_cast<double>(count);
        for (const auto& s : field.splats) extent = std::max(extent, (s.center - mean).norm());
        if (!(extent > 0.0)) extent = 1.0;
    }
    field.scene_extent = extent;
    return field;
}

}  // namespace cellgs
