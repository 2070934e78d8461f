#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cellgs/appearance/model.hpp"
#include "cellgs/error.hpp"
#include "cellgs/render/renderer.hpp"
#include "cellgs/train/loss.hpp"

namespace cellgs {

struct LearningRates {
    double center_init = 1.6e-4;   // times scene extent
    double center_final = 1.6e-6;  // times scene extent
    int center_decay_steps = 0;    // 0: decay over the whole run
    double sh = 2.5e-3;
    double sh_rest_factor = 0.05;  // multiplier for the non-constant SH coefficients
    double opacity = 5e-2;
    double scale = 5e-3;
    double rotation = 1e-3;
    double appearance = 1e-3;
};

struct TrainConfig {
    int iterations = 2000;
    int densify_interval = 100;
    int densify_start = 500;
    int densify_stop = 15000;
    double grad_threshold = 2e-4;
    double clone_scale_fraction = 0.01;   // of the scene extent
    double split_scale_divisor = 1.6;
    double prune_opacity = 0.005;
    int opacity_reset_interval = 3000;
    double reset_opacity = 0.01;
    double screen_prune_fraction = 0.5;   // bounding radius / max(W, H), after the first reset
    double init_opacity = 0.1;
    int sh_degree = 2;
    LearningRates lr;
    LossWeights weights;
    // regularizers switch on after these fractions of the run
    double depth_from = 0.1;
    double normal_from = 0.233;
    bool appearance_enabled = true;
    AppearanceConfig appearance;
    RenderOptions render;
    std::uint64_t seed = 0;
    int log_interval = 10;               // losses.csv row every N iterations
    int threads = 0;                     // 0: hardware concurrency

    void validate() const {
        if (iterations < 0) throw InvalidParameter("iterations must be non-negative");
        if (densify_interval < 1) throw InvalidParameter("densify interval must be at least 1");
        if (densify_stop < densify_start) throw InvalidParameter("densify stop must not precede start");
        if (sh_degree < 0 || sh_degree > 3) throw InvalidParameter("sh_degree must be in [0, 3]");
        if (opacity_reset_interval < 1) throw InvalidParameter("opacity reset interval must be at least 1");
        if (!(init_opacity > 0.0 && init_opacity < 1.0)) throw InvalidParameter("init opacity must be in (0, 1)");
        weights.validate();
        if (!(depth_from >= 0.0 && depth_from <= 1.0) || !(normal_from >= 0.0 && normal_from <= 1.0)) {
            throw InvalidParameter("regularizer start fractions must be in [0, 1]");
        }
    }

    /// Loss weights in effect at a 1-based iteration.
    LossWeights weights_at(int iteration) const {
        LossWeights w = weights;
        if (iteration <= depth_from * iterations) w.depth = 0.0;
        if (iteration <= normal_from * iterations) w.normal = 0.0;
        return w;
    }
};

namespace detail {
template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace detail

/// Reads a JSON config; missing keys keep their defaults, unknown keys are errors.
inline TrainConfig config_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {
        "iterations", "densify_interval", "densify_start", "densify_stop", "grad_threshold",
        "clone_scale_fraction", "split_scale_divisor", "prune_opacity", "opacity_reset_interval",
        "reset_opacity", "screen_prune_fraction", "init_opacity", "sh_degree", "lr", "lambda_depth",
        "lambda_normal", "lambda_dssim", "depth_from", "normal_from", "appearance", "background", "seed", "log_interval", "threads"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw InvalidParameter("unknown config key '" + key + "'");
        }
    }
    TrainConfig c;
    try {
        using detail::read_opt;
        read_opt(j, "iterations", c.iterations);
        read_opt(j, "densify_interval", c.densify_interval);
        read_opt(j, "densify_start", c.densify_start);
        read_opt(j, "densify_stop", c.densify_stop);
        read_opt(j, "grad_threshold", c.grad_threshold);
        read_opt(j, "clone_scale_fraction", c.clone_scale_fraction);
        read_opt(j, "split_scale_divisor", c.split_scale_divisor);
        read_opt(j, "prune_opacity", c.prune_opacity);
        read_opt(j, "opacity_reset_interval", c.opacity_reset_interval);
        read_opt(j, "reset_opacity", c.reset_opacity);
        read_opt(j, "screen_prune_fraction", c.screen_prune_fraction);
        read_opt(j, "init_opacity", c.init_opacity);
        read_opt(j, "sh_degree", c.sh_degree);
        read_opt(j, "lambda_depth", c.weights.depth);
        read_opt(j, "lambda_normal", c.weights.normal);
        read_opt(j, "lambda_dssim", c.weights.dssim);
        read_opt(j, "depth_from", c.depth_from);
        read_opt(j, "normal_from", c.normal_from);
        read_opt(j, "seed", c.seed);
        read_opt(j, "log_interval", c.log_interval);
        read_opt(j, "threads", c.threads);
        if (j.contains("lr")) {
            const auto& l = j.at("lr");
            read_opt(l, "center_init", c.lr.center_init);
            read_opt(l, "center_final", c.lr.center_final);
            read_opt(l, "center_decay_steps", c.lr.center_decay_steps);
            read_opt(l, "sh", c.lr.sh);
            read_opt(l, "sh_rest_factor", c.lr.sh_rest_factor);
            read_opt(l, "opacity", c.lr.opacity);
            read_opt(l, "scale", c.lr.scale);
            read_opt(l, "rotation", c.lr.rotation);
            read_opt(l, "appearance", c.lr.appearance);
        }
        if (j.contains("appearance")) {
            const auto& a = j.at("appearance");
            read_opt(a, "enabled", c.appearance_enabled);
            read_opt(a, "embed_dim", c.appearance.embed_dim);
            read_opt(a, "channels", c.appearance.channels);
            read_opt(a, "depth", c.appearance.depth);
            read_opt(a, "grid", c.appearance.grid);
        }
        if (j.contains("background")) {
            const auto bg = j.at("background").get<std::vector<double>>();
            if (bg.size() != 3) throw InvalidParameter("background must have three components");
            c.render.background = Vec3(bg[0], bg[1], bg[2]);
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidParameter(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
    return nlohmann::json{
        {"iterations", c.iterations},
        {"densify_interval", c.densify_interval},
        {"densify_start", c.densify_start},
        {"densify_stop", c.densify_stop},
        {"grad_threshold", c.grad_threshold},
        {"clone_scale_fraction", c.clone_scale_fraction},
        {"split_scale_divisor", c.split_scale_divisor},
        {"prune_opacity", c.prune_opacity},
        {"opacity_reset_interval", c.opacity_reset_interval},
        {"reset_opacity", c.reset_opacity},
        {"screen_prune_fraction", c.screen_prune_fraction},
        {"init_opacity", c.init_opacity},
        {"sh_degree", c.sh_degree},
        {"lambda_depth", c.weights.depth},
        {"lambda_normal", c.weights.normal},
        {"lambda_dssim", c.weights.dssim},
        {"depth_from", c.depth_from},
        {"normal_from", c.normal_from},
        {"seed", c.seed},
        {"log_interval", c.log_interval},
        {"threads", c.threads},
        {"background", {c.render.background.x(), c.render.background.y(), c.render.background.z()}},
        {"lr",
         {{"center_init", c.lr.center_init},
          {"center_final", c.lr.center_final},
          {"center_decay_steps", c.lr.center_decay_steps},
          {"sh", c.lr.sh},
          {"sh_rest_factor", c.lr.sh_rest_factor},
          {"opacity", c.lr.opacity},
          {"scale", c.lr.scale},
          {"rotation", c.lr.rotation},
          {"appearance", c.lr.appearance}}},
        {"appearance",
         {{"enabled", c.appearance_enabled},
          {"embed_dim", c.appearance.embed_dim},
          {"channels", c.appearance.channels},
          {"depth", c.appearance.depth},
          {"grid", c.appearance.grid}}}};
}

inline TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    try {
        return config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidParameter(path.string() + ": " + e.what());
    }
}

}  // namespace cellgs
