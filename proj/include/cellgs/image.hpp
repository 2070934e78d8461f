#pragma once

#include <algorithm>
#include <cctype>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "cellgs/error.hpp"

namespace cellgs {

/// Row-major, channel-interleaved image of doubles.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, double fill = 0.0)
        : height_(height), width_(width), channels_(channels),
          data_(static_cast<std::size_t>(height) * width * channels, fill) {
        if (height < 0 || width < 0 || channels <= 0) {
            throw ShapeError("invalid image shape");
        }
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
    double operator()(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    std::size_t index(int y, int x, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    bool same_shape(const Image& o) const noexcept {
        return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": image shapes differ (" +
                         std::to_string(a.height()) + "x" + std::to_string(a.width()) + "x" +
                         std::to_string(a.channels()) + " vs " + std::to_string(b.height()) +
                         "x" + std::to_string(b.width()) + "x" + std::to_string(b.channels()) +
                         ")");
    }
}

namespace detail {

inline std::uint8_t to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

/// Writes an 8-bit PNG (1 or 3 channels); values are clamped to [0, 1].
inline void write_png(const std::filesystem::path& path, const Image& img) {
    if (img.channels() != 1 && img.channels() != 3) {
        throw ShapeError("write_png: expected 1 or 3 channels");
    }
    detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width(), img.height(), 8,
                 img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()) * img.channels());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                row[static_cast<std::size_t>(x) * img.channels() + c] =
                    detail::to_byte(img(y, x, c));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Reads an 8- or 16-bit PNG as a linear 3-channel image in [0, 1].
inline Image read_png(const std::filesystem::path& path) {
    detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng failed reading " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
    Image img(h, w, 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) img(y, x, c) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

/// Binary PPM (P6, maxval 255).
inline void write_ppm(const std::filesystem::path& path, const Image& img) {
    if (img.channels() != 3) throw ShapeError("write_ppm: expected 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
    for (double v : img.data()) out.put(static_cast<char>(detail::to_byte(v)));
}

inline Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    auto next_token = [&]() {
        std::string tok;
        char ch;
        while (in.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(ch);
        }
        return tok;
    };
    const std::string magic = next_token();
    if (magic != "P6") throw FormatError(path.string() + ": only binary P6 PPM is supported");
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval <= 0 || maxval > 255) throw FormatError(path.string() + ": unsupported maxval");
    Image img(h, w, 3);
    for (double& v : img.data()) {
        char ch;
        if (!in.get(ch)) throw FormatError(path.string() + ": truncated pixel data");
        v = static_cast<unsigned char>(ch) / static_cast<double>(maxval);
    }
    return img;
}

/// Loads PNG or PPM based on the file extension.
inline Image read_image(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".ppm" || ext == ".pnm") return read_ppm(path);
    return read_png(path);
}

/// Raw float dump: text header "H W C\n", then little-endian float32, row-major.
inline void write_raw(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << img.height() << " " << img.width() << " " << img.channels() << "\n";
    for (double v : img.data()) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
}

inline Image read_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    int h = 0, w = 0, c = 0;
    in >> h >> w >> c;
    in.get();
    if (!in || h < 0 || w < 0 || c <= 0) throw FormatError(path.string() + ": bad raw header");
    Image img(h, w, c);
    for (double& v : img.data()) {
        std::uint32_t bits = 0;
        if (!in.read(reinterpret_cast<char*>(&bits), sizeof(bits))) {
            throw FormatError(path.string() + ": truncated raw data");
        }
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        v = std::bit_cast<float>(bits);
    }
    return img;
}

}  // namespace cellgs
