#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cellgs/appearance/layers.hpp"
#include "cellgs/error.hpp"
#include "cellgs/image.hpp"
#include "cellgs/ingest/text.hpp"

namespace cellgs {

struct AppearanceConfig {
    int embed_dim = 64;
    int channels = 32;
    int depth = 5;      // stride-2 blocks; the input is first pooled by 2^depth
    int grid = 5;       // spline intervals of the KAN layer

    friend bool operator==(const AppearanceConfig&, const AppearanceConfig&) = default;
};

/// Intermediate values of one forward pass, kept for the backward pass.
struct AppearanceCache {
    int image_row = -1;
    int height = 0, width = 0;
    Image rendered;                 // I^r
    Tensor pooled;                  // 3 x h x w
    std::vector<Tensor> pre;        // pre-activations of the plain convolutions
    std::vector<Tensor> act;        // act[0] = network input, act[k+1] = silu(pre[k])
    Tensor kan_out;                 // pre-sigmoid low-resolution map
    Tensor low_map;                 // sigmoid(kan_out)
};

struct AppearanceResult {
    Image map;       // M in (0, 1), H x W x 3
    Image adjusted;  // I^a = clamp(I^r * 2M, 0, 1)
    AppearanceCache cache;
};

/// Per-image appearance decoupler: pooled render + broadcast embedding,
/// plain 3x3 convolutions, stride-2 blocks and a final KAN convolution,
/// producing a sigmoid map that is upsampled and applied multiplicatively.
///
/// All parameters, embeddings included, live in one flat vector.
class AppearanceModel {
public:
    AppearanceModel() = default;

    AppearanceModel(const AppearanceConfig& cfg, std::vector<int> image_ids, std::uint64_t seed = 0)
        : cfg_(cfg), image_ids_(std::move(image_ids)) {
        if (cfg.embed_dim < 0 || cfg.channels < 1 || cfg.depth < 0 || cfg.depth > 16) {
            throw InvalidParameter("invalid appearance model configuration");
        }
        build_layout();
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> emb(0.0, 0.1);
        for (std::size_t k = 0; k < embed_count(); ++k) params_[k] = emb(rng);
        auto init_conv = [&](const Conv3x3& c, std::size_t off) {
            const double bound = 1.0 / std::sqrt(9.0 * c.in);
            std::uniform_real_distribution<double> u(-bound, bound);
            for (std::size_t k = 0; k < c.weight_count(); ++k) params_[off + k] = u(rng);
        };
        init_conv(first_, first_off_);
        for (std::size_t d = 0; d < down_.size(); ++d) init_conv(down_[d], down_off_[d]);
        // KAN base weights and spline coefficients start at zero, so M = 0.5
        // and the model is the identity until it learns something.
    }

    const AppearanceConfig& config() const noexcept { return cfg_; }
    const std::vector<int>& image_ids() const noexcept { return image_ids_; }
    std::vector<double>& params() noexcept { return params_; }
    const std::vector<double>& params() const noexcept { return params_; }
    std::size_t param_count() const noexcept { return params_.size(); }
    std::size_t embed_count() const noexcept { return image_ids_.size() * static_cast<std::size_t>(cfg_.embed_dim); }

    bool has_embedding(int image_id) const { return rows_.contains(image_id); }

    int embedding_row(int image_id) const {
        const auto it = rows_.find(image_id);
        if (it == rows_.end()) throw MissingEmbedding("no appearance embedding for image " + std::to_string(image_id));
        return it->second;
    }

    /// Offset of the embedding of `image_id` in params().
    std::size_t embedding_offset(int image_id) const {
        return static_cast<std::size_t>(embedding_row(image_id)) * cfg_.embed_dim;
    }

    /// Offsets of the network weights (everything after the embeddings).
    std::size_t network_offset() const noexcept { return embed_count(); }
    std::size_t kan_offset() const noexcept { return kan_off_; }

    AppearanceResult forward(const Image& rendered, int image_id) const {
        if (rendered.channels() != 3) throw ShapeError("appearance model expects a 3-channel image");
        AppearanceResult r;
        auto& c = r.cache;
        c.image_row = embedding_row(image_id);
        c.height = rendered.height();
        c.width = rendered.width();
        c.rendered = rendered;

        const int ph = std::max(1, rendered.height() >> cfg_.depth);
        const int pw = std::max(1, rendered.width() >> cfg_.depth);
        c.pooled = adaptive_pool(rendered, ph, pw);
        Tensor x(3 + cfg_.embed_dim, ph, pw);
        std::copy(c.pooled.v.begin(), c.pooled.v.end(), x.v.begin());
        const double* e = params_.data() + static_cast<std::size_t>(c.image_row) * cfg_.embed_dim;
        for (int k = 0; k < cfg_.embed_dim; ++k) {
            for (int n = 0; n < ph * pw; ++n) x.v[static_cast<std::size_t>(3 + k) * ph * pw + n] = e[k];
        }
        c.act.push_back(std::move(x));
        for (std::size_t layer = 0; layer <= down_.size(); ++layer) {
            const Conv3x3& conv = layer == 0 ? first_ : down_[layer - 1];
            const std::size_t off = layer == 0 ? first_off_ : down_off_[layer - 1];
            Tensor z = conv.forward(params_.data() + off, c.act.back());
            Tensor a = z;
            for (double& v : a.v) v = silu(v);
            c.pre.push_back(std::move(z));
            c.act.push_back(std::move(a));
        }
        c.kan_out = kan_.forward(params_.data() + kan_off_, c.act.back());
        c.low_map = c.kan_out;
        for (double& v : c.low_map.v) v = sigmoid(v);

        r.map = upsample(c.low_map, c.height, c.width);
        r.adjusted = Image(c.height, c.width, 3);
        const auto ir = rendered.data();
        const auto m = r.map.data();
        auto ia = r.adjusted.data();
        for (std::size_t i = 0; i < ir.size(); ++i) ia[i] = std::clamp(ir[i] * (2.0 * m[i]), 0.0, 1.0);
        return r;
    }

    /// Accumulates dL/dparams into `grad` (size param_count()) from dL/dI^a
    /// and returns dL/dI^r through both the multiplicative path and the network input.
    Image backward(const AppearanceResult& r, const Image& grad_adjusted, std::vector<double>& grad) const {
        const auto& c = r.cache;
        require_same_shape(grad_adjusted, r.adjusted, "appearance backward");
        if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
        Image grad_rendered(c.height, c.width, 3);
        Image grad_map(c.height, c.width, 3);
        {
            const auto ir = c.rendered.data();
            const auto m = r.map.data();
            const auto ga = grad_adjusted.data();
            auto gr = grad_rendered.data();
            auto gm = grad_map.data();
            for (std::size_t i = 0; i < ir.size(); ++i) {
                const double v = ir[i] * (2.0 * m[i]);
                if (v < 0.0 || v > 1.0) continue;
                gr[i] = ga[i] * 2.0 * m[i];
                gm[i] = ga[i] * 2.0 * ir[i];
            }
        }
        Tensor g = upsample_backward(grad_map, c.low_map.h, c.low_map.w);
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= c.low_map.v[i] * (1.0 - c.low_map.v[i]);
        g = kan_.backward(params_.data() + kan_off_, c.act.back(), g, grad.data() + kan_off_);
        for (std::size_t layer = down_.size() + 1; layer-- > 0;) {
            for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= silu_grad(c.pre[layer].v[i]);
            const Conv3x3& conv = layer == 0 ? first_ : down_[layer - 1];
            const std::size_t off = layer == 0 ? first_off_ : down_off_[layer - 1];
            g = conv.backward(params_.data() + off, c.act[layer], g, grad.data() + off);
        }
        // g is now dL/d(network input): pooled image channels then embedding channels
        const int n = g.h * g.w;
        double* ge = grad.data() + static_cast<std::size_t>(c.image_row) * cfg_.embed_dim;
        for (int k = 0; k < cfg_.embed_dim; ++k) {
            for (int q = 0; q < n; ++q) ge[k] += g.v[static_cast<std::size_t>(3 + k) * n + q];
        }
        Tensor gpool(3, g.h, g.w);
        std::copy(g.v.begin(), g.v.begin() + 3 * n, gpool.v.begin());
        adaptive_pool_backward(gpool, grad_rendered);
        return grad_rendered;
    }

    void save(const std::filesystem::path& path) const {
        std::ostringstream h;
        h << "appearance-checkpoint 1\n";
        h << "config " << cfg_.embed_dim << " " << cfg_.channels << " " << cfg_.depth << " " << cfg_.grid << "\n";
        h << "images " << image_ids_.size();
        for (int id : image_ids_) h << " " << id;
        h << "\n";
        h << "tensor embeddings " << image_ids_.size() << " " << cfg_.embed_dim << "\n";
        h << "tensor conv0 " << first_.out << " " << first_.in << " 3 3 +bias\n";
        for (std::size_t d = 0; d < down_.size(); ++d) {
            h << "tensor down" << d << " " << down_[d].out << " " << down_[d].in << " 3 3 +bias\n";
        }
        h << "tensor kan " << kan_.out << " " << kan_.in << " 9 " << kan_.per_edge() << "\n";
        h << "values float64 " << params_.size() << "\n";
        h << "end_header\n";
        const std::string header = h.str();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        for (double v : params_) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            out.write(reinterpret_cast<const char*>(&bits), 8);
        }
        if (!out) throw IoError("failed writing " + path.string());
    }

    static AppearanceModel load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path.string());
        std::string line;
        AppearanceConfig cfg;
        std::vector<int> ids;
        std::size_t count = 0;
        bool header_ok = false;
        while (std::getline(in, line)) {
            const auto tok = text::split_ws(line);
            if (tok.empty()) continue;
            if (tok[0] == "end_header") {
                header_ok = true;
                break;
            }
            if (tok[0] == "config" && tok.size() == 5) {
                text::parse(tok[1], cfg.embed_dim);
                text::parse(tok[2], cfg.channels);
                text::parse(tok[3], cfg.depth);
                text::parse(tok[4], cfg.grid);
            } else if (tok[0] == "images" && tok.size() >= 2) {
                for (std::size_t k = 2; k < tok.size(); ++k) {
                    int id = 0;
                    if (!text::parse(tok[k], id)) throw FormatError(path.string() + ": bad image id");
                    ids.push_back(id);
                }
            } else if (tok[0] == "values" && tok.size() == 3) {
                text::parse(tok[2], count);
            }
        }
        if (!header_ok) throw FormatError(path.string() + ": missing end_header");
        AppearanceModel m(cfg, ids);
        if (count != m.params_.size()) throw FormatError(path.string() + ": parameter count does not match header shapes");
        for (double& v : m.params_) {
            std::uint64_t bits;
            if (!in.read(reinterpret_cast<char*>(&bits), 8)) throw FormatError(path.string() + ": truncated values");
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            v = std::bit_cast<double>(bits);
        }
        return m;
    }

    static Tensor adaptive_pool(const Image& img, int ph, int pw) {
        Tensor t(img.channels(), ph, pw);
        for (int py = 0; py < ph; ++py) {
            const int y0 = py * img.height() / ph, y1 = ((py + 1) * img.height() + ph - 1) / ph;
            for (int px = 0; px < pw; ++px) {
                const int x0 = px * img.width() / pw, x1 = ((px + 1) * img.width() + pw - 1) / pw;
                const double inv = 1.0 / ((y1 - y0) * (x1 - x0));
                for (int ch = 0; ch < img.channels(); ++ch) {
                    double s = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        for (int x = x0; x < x1; ++x) s += img(y, x, ch);
                    }
                    t.at(ch, py, px) = s * inv;
                }
            }
        }
        return t;
    }

    /// Adds the pooling adjoint of `g` onto `out`.
    static void adaptive_pool_backward(const Tensor& g, Image& out) {
        const int ph = g.h, pw = g.w;
        for (int py = 0; py < ph; ++py) {
            const int y0 = py * out.height() / ph, y1 = ((py + 1) * out.height() + ph - 1) / ph;
            for (int px = 0; px < pw; ++px) {
                const int x0 = px * out.width() / pw, x1 = ((px + 1) * out.width() + pw - 1) / pw;
                const double inv = 1.0 / ((y1 - y0) * (x1 - x0));
                for (int ch = 0; ch < g.c; ++ch) {
                    const double v = g.at(ch, py, px) * inv;
                    for (int y = y0; y < y1; ++y) {
                        for (int x = x0; x < x1; ++x) out(y, x, ch) += v;
                    }
                }
            }
        }
    }

    /// Bilinear sample position along one axis (half-pixel centers, edge clamped).
    static void bilinear_axis(int dst, int dst_size, int src_size, int& i0, int& i1, double& t) {
        double s = (dst + 0.5) * src_size / dst_size - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
        i0 = static_cast<int>(std::floor(s));
        i1 = std::min(i0 + 1, src_size - 1);
        t = s - i0;
    }

    static Image upsample(const Tensor& low, int h, int w) {
        Image out(h, w, low.c);
        for (int y = 0; y < h; ++y) {
            int y0, y1;
            double ty;
            bilinear_axis(y, h, low.h, y0, y1, ty);
            for (int x = 0; x < w; ++x) {
                int x0, x1;
                double tx;
                bilinear_axis(x, w, low.w, x0, x1, tx);
                for (int ch = 0; ch < low.c; ++ch) {
                    const double a = low.at(ch, y0, x0), b = low.at(ch, y0, x1);
                    const double c = low.at(ch, y1, x0), d = low.at(ch, y1, x1);
                    const double top = a + tx * (b - a);
                    const double bottom = c + tx * (d - c);
                    out(y, x, ch) = top + ty * (bottom - top);
                }
            }
        }
        return out;
    }

    static Tensor upsample_backward(const Image& g, int lh, int lw) {
        Tensor out(g.channels(), lh, lw);
        for (int y = 0; y < g.height(); ++y) {
            int y0, y1;
            double ty;
            bilinear_axis(y, g.height(), lh, y0, y1, ty);
            for (int x = 0; x < g.width(); ++x) {
                int x0, x1;
                double tx;
                bilinear_axis(x, g.width(), lw, x0, x1, tx);
                for (int ch = 0; ch < g.channels(); ++ch) {
                    const double v = g(y, x, ch);
                    out.at(ch, y0, x0) += v * (1.0 - ty) * (1.0 - tx);
                    out.at(ch, y0, x1) += v * (1.0 - ty) * tx;
                    out.at(ch, y1, x0) += v * ty * (1.0 - tx);
                    out.at(ch, y1, x1) += v * ty * tx;
                }
            }
        }
        return out;
    }

private:
    void build_layout() {
        rows_.clear();
        for (std::size_t r = 0; r < image_ids_.size(); ++r) {
            if (!rows_.emplace(image_ids_[r], static_cast<int>(r)).second) {
                throw InvalidParameter("duplicate image id " + std::to_string(image_ids_[r]) + " in appearance model");
            }
        }
        std::size_t off = embed_count();
        first_ = Conv3x3{3 + cfg_.embed_dim, cfg_.channels, 1};
        first_off_ = off;
        off += first_.param_count();
        down_.clear();
        down_off_.clear();
        for (int d = 0; d < cfg_.depth; ++d) {
            down_.push_back(Conv3x3{cfg_.channels, cfg_.channels, 2});
            down_off_.push_back(off);
            off += down_.back().param_count();
        }
        kan_ = KanConv3x3{cfg_.channels, 3, CubicBSpline(cfg_.grid)};
        kan_off_ = off;
        off += kan_.param_count();
        params_.assign(off, 0.0);
    }

    AppearanceConfig cfg_;
    std::vector<int> image_ids_;
    std::unordered_map<int, int> rows_;
    Conv3x3 first_;
    std::vector<Conv3x3> down_;
    KanConv3x3 kan_;
    std::size_t first_off_ = 0, kan_off_ = 0;
    std::vector<std::size_t> down_off_;
    std::vector<double> params_;
};

}  // namespace cellgs
