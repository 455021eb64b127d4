#pragma once

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <filesystem>
#include <set>
#include <string>

#include "cullkit/experiment.hpp"
#include "cullkit/io.hpp"

namespace cullkit {

namespace detail {

inline void check_keys(const toml::table& t, const std::set<std::string>& allowed, const std::string& where)
{
    for (const auto& [key, node] : t) {
        (void)node;
        if (!allowed.count(std::string(key.str())))
            throw Error(ErrorCode::ParseError, "config: unknown key '" + std::string(key.str()) + "' in " + where);
    }
}

template <class T>
void read_value(const toml::table& t, const char* key, T& out, const std::string& where)
{
    const toml::node* n = t.get(key);
    if (!n) return;
    if constexpr (std::is_same_v<T, bool>) {
        if (!n->is_boolean()) throw Error(ErrorCode::ParseError, "config: " + where + "." + key + " must be a boolean");
        out = n->as_boolean()->get();
    } else if constexpr (std::is_integral_v<T>) {
        if (!n->is_integer()) throw Error(ErrorCode::ParseError, "config: " + where + "." + key + " must be an integer");
        const auto v = n->as_integer()->get();
        if (v < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
            static_cast<std::uint64_t>(std::max<std::int64_t>(v, 0)) > static_cast<std::uint64_t>(std::numeric_limits<T>::max()))
            throw Error(ErrorCode::ParseError, "config: " + where + "." + key + " out of range");
        out = static_cast<T>(v);
    } else if constexpr (std::is_floating_point_v<T>) {
        if (auto i = n->as_integer())
            out = static_cast<T>(i->get());
        else if (auto f = n->as_floating_point())
            out = static_cast<T>(f->get());
        else
            throw Error(ErrorCode::ParseError, "config: " + where + "." + key + " must be a number");
    } else {
        if (!n->is_string()) throw Error(ErrorCode::ParseError, "config: " + where + "." + key + " must be a string");
        out = n->as_string()->get();
    }
}

template <class T>
std::vector<T> read_array(const toml::table& t, const char* key, const std::string& where)
{
    const toml::array* arr = t.get_as<toml::array>(key);
    if (!arr) throw Error(ErrorCode::ParseError, "config: " + where + "." + key + " must be an array");
    std::vector<T> out;
    for (const auto& el : *arr) {
        toml::table wrap;
        wrap.insert("v", el);
        T v{};
        read_value(wrap, "v", v, where + "." + key + "[]");
        out.push_back(v);
    }
    return out;
}

inline const toml::table* subtable(const toml::table& t, const char* key)
{
    const toml::node* n = t.get(key);
    if (!n) return nullptr;
    if (!n->is_table()) throw Error(ErrorCode::ParseError, std::string("config: '") + key + "' must be a table");
    return n->as_table();
}

} // namespace detail

/// Experiment configuration from TOML. Every section is optional; keys not in
/// the schema are rejected. A mesh file path resolves against `base_dir`.
inline ExperimentConfig parse_experiment_config(const toml::table& root, const std::filesystem::path& base_dir = {})
{
    using detail::read_value;
    ExperimentConfig c;
    detail::check_keys(root,
                       {"seed", "trials", "strategies", "k_values", "include_centroid", "symmetric", "render_mode",
                        "noisy_oracle_sigma", "reproj_threshold_px", "camera", "mesh", "grid", "poses", "noise",
                        "confidence", "ransac"},
                       "top level");
    read_value(root, "seed", c.seed, "");
    read_value(root, "trials", c.trials, "");
    if (root.contains("strategies")) {
        c.strategies.clear();
        for (const auto& s : detail::read_array<std::string>(root, "strategies", "")) c.strategies.push_back(parse_strategy(s));
    }
    if (root.contains("k_values")) c.k_values = detail::read_array<int>(root, "k_values", "");
    read_value(root, "include_centroid", c.include_centroid, "");
    read_value(root, "symmetric", c.symmetric, "");
    std::string mode = "triangle";
    read_value(root, "render_mode", mode, "");
    if (mode == "triangle")
        c.render_mode = RenderMode::TriangleFill;
    else if (mode == "splat")
        c.render_mode = RenderMode::VertexSplat;
    else
        throw Error(ErrorCode::ParseError, "config: render_mode must be triangle or splat");
    read_value(root, "noisy_oracle_sigma", c.noisy_oracle_sigma, "");
    read_value(root, "reproj_threshold_px", c.reproj_threshold_px, "");

    if (const auto* t = detail::subtable(root, "camera")) {
        detail::check_keys(*t, {"fx", "fy", "cx", "cy", "width", "height"}, "[camera]");
        read_value(*t, "fx", c.camera.fx, "camera");
        read_value(*t, "fy", c.camera.fy, "camera");
        read_value(*t, "cx", c.camera.cx, "camera");
        read_value(*t, "cy", c.camera.cy, "camera");
        read_value(*t, "width", c.camera.image_width, "camera");
        read_value(*t, "height", c.camera.image_height, "camera");
    }
    if (const auto* t = detail::subtable(root, "mesh")) {
        detail::check_keys(*t, {"kind", "size", "subdivisions", "path"}, "[mesh]");
        std::string kind = "box";
        read_value(*t, "kind", kind, "mesh");
        if (kind == "box")
            c.mesh.kind = MeshSpec::Kind::Box;
        else if (kind == "ellipsoid")
            c.mesh.kind = MeshSpec::Kind::Ellipsoid;
        else if (kind == "file")
            c.mesh.kind = MeshSpec::Kind::File;
        else
            throw Error(ErrorCode::ParseError, "config: mesh.kind must be box, ellipsoid or file");
        if (t->contains("size")) {
            const auto s = detail::read_array<double>(*t, "size", "mesh");
            if (s.size() != 3) throw Error(ErrorCode::ParseError, "config: mesh.size needs 3 values");
            c.mesh.size = {s[0], s[1], s[2]};
        }
        read_value(*t, "subdivisions", c.mesh.subdivisions, "mesh");
        read_value(*t, "path", c.mesh.path, "mesh");
        if (c.mesh.kind == MeshSpec::Kind::File) {
            if (c.mesh.path.empty()) throw Error(ErrorCode::ParseError, "config: mesh.kind = \"file\" needs mesh.path");
            if (std::filesystem::path(c.mesh.path).is_relative()) c.mesh.path = (base_dir / c.mesh.path).string();
        }
    }
    if (const auto* t = detail::subtable(root, "grid")) {
        detail::check_keys(*t, {"scales", "image_size"}, "[grid]");
        if (t->contains("scales")) c.grid.scales = detail::read_array<int>(*t, "scales", "grid");
        read_value(*t, "image_size", c.grid.image_size, "grid");
    }
    if (const auto* t = detail::subtable(root, "poses")) {
        detail::check_keys(*t, {"depth_min", "depth_max", "margin_px", "max_attempts"}, "[poses]");
        read_value(*t, "depth_min", c.poses.depth_min, "poses");
        read_value(*t, "depth_max", c.poses.depth_max, "poses");
        read_value(*t, "margin_px", c.poses.margin_px, "poses");
        read_value(*t, "max_attempts", c.poses.max_attempts, "poses");
    }
    if (const auto* t = detail::subtable(root, "noise")) {
        detail::check_keys(*t,
                           {"keypoint_sigma_px", "outlier_fraction", "confidence_noise_sigma", "class_count", "class_id",
                            "label_noise", "miscalibration", "decoys"},
                           "[noise]");
        NoiseModel& n = c.noise;
        read_value(*t, "keypoint_sigma_px", n.keypoint_sigma_px, "noise");
        read_value(*t, "outlier_fraction", n.outlier_fraction, "noise");
        read_value(*t, "confidence_noise_sigma", n.confidence_noise_sigma, "noise");
        read_value(*t, "class_count", n.class_count, "noise");
        read_value(*t, "class_id", n.class_id, "noise");
        read_value(*t, "label_noise", n.label_noise, "noise");
        if (const auto* m = detail::subtable(*t, "miscalibration")) {
            detail::check_keys(*m, {"kind", "gamma", "a", "b"}, "[noise.miscalibration]");
            std::string kind = "none";
            read_value(*m, "kind", kind, "noise.miscalibration");
            if (kind == "none")
                n.miscalibration.kind = Miscalibration::Kind::None;
            else if (kind == "power")
                n.miscalibration.kind = Miscalibration::Kind::Power;
            else if (kind == "logistic")
                n.miscalibration.kind = Miscalibration::Kind::Logistic;
            else
                throw Error(ErrorCode::ParseError, "config: miscalibration.kind must be none, power or logistic");
            read_value(*m, "gamma", n.miscalibration.gamma, "noise.miscalibration");
            read_value(*m, "a", n.miscalibration.a, "noise.miscalibration");
            read_value(*m, "b", n.miscalibration.b, "noise.miscalibration");
        }
        if (const auto* d = detail::subtable(*t, "decoys")) {
            detail::check_keys(*d,
                               {"count", "confidence_min", "confidence_max", "rotation_deg", "shift_px",
                                "keypoint_sigma_px"},
                               "[noise.decoys]");
            read_value(*d, "count", n.decoys.count, "noise.decoys");
            read_value(*d, "confidence_min", n.decoys.confidence_min, "noise.decoys");
            read_value(*d, "confidence_max", n.decoys.confidence_max, "noise.decoys");
            read_value(*d, "rotation_deg", n.decoys.rotation_deg, "noise.decoys");
            read_value(*d, "shift_px", n.decoys.shift_px, "noise.decoys");
            read_value(*d, "keypoint_sigma_px", n.decoys.keypoint_sigma_px, "noise.decoys");
        }
    }
    if (const auto* t = detail::subtable(root, "confidence")) {
        detail::check_keys(*t, {"alpha", "d_th"}, "[confidence]");
        read_value(*t, "alpha", c.confidence.alpha, "confidence");
        read_value(*t, "d_th", c.confidence.d_th, "confidence");
    }
    if (const auto* t = detail::subtable(root, "ransac")) {
        detail::check_keys(*t, {"iterations", "inlier_px"}, "[ransac]");
        read_value(*t, "iterations", c.ransac.iterations, "ransac");
        read_value(*t, "inlier_px", c.ransac.inlier_px, "ransac");
    }
    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
    }
    return c;
}

inline ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir = {})
{
    try {
        return parse_experiment_config(toml::parse(text), base_dir);
    } catch (const toml::parse_error& e) {
        std::ostringstream ss;
        ss << "config line " << e.source().begin.line << ": " << e.description();
        throw Error(ErrorCode::ParseError, ss.str());
    }
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path)
{
    return parse_experiment_config(detail::read_text_file(path), path.parent_path());
}

/// Built-in mesh or the PLY named by the config.
inline MeshModel experiment_mesh(const ExperimentConfig& cfg)
{
    if (cfg.mesh.kind == MeshSpec::Kind::File) return load_ply(cfg.mesh.path);
    return build_builtin_mesh(cfg.mesh);
}

} // namespace cullkit
