#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "cullkit/confidence.hpp"
#include "cullkit/culling.hpp"

namespace cullkit {

struct GridSpec {
    std::vector<int> scales{13, 26, 52};
    int image_size = 416;

    void validate() const
    {
        if (scales.empty() || image_size <= 0) throw Error(ErrorCode::InvalidArgument, "grid needs scales and an image size");
        for (int s : scales)
            if (s <= 0) throw Error(ErrorCode::InvalidArgument, "grid scale must be positive");
    }
    std::size_t total_cells() const
    {
        std::size_t n = 0;
        for (int s : scales) n += static_cast<std::size_t>(s) * static_cast<std::size_t>(s);
        return n;
    }
    double cell_size(std::size_t scale_index) const { return static_cast<double>(image_size) / scales.at(scale_index); }
};

namespace detail {

inline void check_cell(const GridSpec& grid, std::size_t scale_index, int row, int col)
{
    if (scale_index >= grid.scales.size()) throw Error(ErrorCode::CellOutOfRange, "scale index out of range");
    const int s = grid.scales[scale_index];
    if (row < 0 || col < 0 || row >= s || col >= s)
        throw Error(ErrorCode::CellOutOfRange, "cell (" + std::to_string(row) + "," + std::to_string(col) + ") outside a " +
                                                   std::to_string(s) + "-cell grid");
}

} // namespace detail

/// Keypoints as offsets, in cell units, from the top-left corner of a cell.
inline std::vector<Pixel2> encode_cell_offsets(std::span<const Pixel2> kps, const GridSpec& grid, std::size_t scale_index,
                                               int row, int col)
{
    detail::check_cell(grid, scale_index, row, col);
    const double cs = grid.cell_size(scale_index);
    std::vector<Pixel2> out(kps.size());
    for (std::size_t i = 0; i < kps.size(); ++i) out[i] = {kps[i].x / cs - col, kps[i].y / cs - row};
    return out;
}

inline std::vector<Pixel2> decode_cell_offsets(std::span<const Pixel2> offsets, const GridSpec& grid,
                                               std::size_t scale_index, int row, int col)
{
    detail::check_cell(grid, scale_index, row, col);
    const double cs = grid.cell_size(scale_index);
    std::vector<Pixel2> out(offsets.size());
    for (std::size_t i = 0; i < offsets.size(); ++i) out[i] = {(offsets[i].x + col) * cs, (offsets[i].y + row) * cs};
    return out;
}

/// Left-composes a rotation by |N(0, rot_sigma)| about a uniform random axis
/// and adds N(0, trans_sigma) to each translation component.
inline Pose perturb_pose(const Pose& pose, double rot_sigma_rad, double trans_sigma, std::mt19937_64& rng)
{
    if (!(rot_sigma_rad >= 0.0) || !(trans_sigma >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "perturbation sigmas must be non-negative");
    std::normal_distribution<double> n(0.0, 1.0);
    Pose out = pose;
    if (rot_sigma_rad > 0.0) {
        Vec3 axis{n(rng), n(rng), n(rng)};
        while (norm(axis) < 1e-12) axis = {n(rng), n(rng), n(rng)};
        const double angle = std::abs(n(rng)) * rot_sigma_rad;
        out.rotation = axis_angle_to_rotation(axis, angle) * pose.rotation;
    }
    if (trans_sigma > 0.0) out.translation += Vec3{n(rng), n(rng), n(rng)} * trans_sigma;
    return out;
}

inline Pose perturb_pose(const Pose& pose, double rot_sigma_rad, double trans_sigma, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    return perturb_pose(pose, rot_sigma_rad, trans_sigma, rng);
}

/// Uniformly distributed rotation from a normalized Gaussian quaternion.
inline Mat3 uniform_rotation(std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    double w = 0, x = 0, y = 0, z = 0, s = 0;
    while (s < 1e-12) {
        w = n(rng), x = n(rng), y = n(rng), z = n(rng);
        s = w * w + x * x + y * y + z * z;
    }
    return detail::quaternion_to_rotation(w, x, y, z);
}

struct PoseSampler {
    double depth_min = 0.5;
    double depth_max = 1.0;
    double margin_px = 20.0; // every cuboid keypoint stays this far inside the image
    int max_attempts = 1000;
};

/// Random object pose with uniform rotation, uniform depth, and the object
/// centre uniform over the image, resampled until all cuboid keypoints lie
/// inside the image margin.
inline Pose sample_pose(const MeshModel& mesh, const CameraIntrinsics& k, const PoseSampler& sampler,
                        std::mt19937_64& rng)
{
    if (!(sampler.depth_min > 0.0 && sampler.depth_max >= sampler.depth_min) || sampler.margin_px < 0.0)
        throw Error(ErrorCode::InvalidArgument, "invalid pose sampler ranges");
    const auto kp = cuboid_keypoints(mesh);
    std::uniform_real_distribution<double> depth(sampler.depth_min, sampler.depth_max);
    std::uniform_real_distribution<double> ux(sampler.margin_px, k.image_width - sampler.margin_px);
    std::uniform_real_distribution<double> uy(sampler.margin_px, k.image_height - sampler.margin_px);
    for (int attempt = 0; attempt < sampler.max_attempts; ++attempt) {
        const Mat3 r = uniform_rotation(rng);
        const double z = depth(rng);
        const double u = ux(rng), v = uy(rng);
        const Vec3 centre{(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
        const Pose pose{r, centre - r * kp.back()};
        bool inside = true;
        for (const Vec3& x : kp) {
            const Vec3 xc = pose.apply(x);
            if (!(xc.z > kMinDepth)) {
                inside = false;
                break;
            }
            const Pixel2 p = project_camera_point(k, xc);
            inside = inside && p.x >= sampler.margin_px && p.y >= sampler.margin_px &&
                     p.x < k.image_width - sampler.margin_px && p.y < k.image_height - sampler.margin_px;
        }
        if (inside) return pose;
    }
    throw Error(ErrorCode::InvalidArgument, "pose sampler could not fit the object inside the image");
}

/// Monotone distortion from ground-truth to raw confidence.
struct Miscalibration {
    enum class Kind { None, Power, Logistic } kind = Kind::None;
    double gamma = 1.0; // power: c^gamma
    double a = 10.0;    // logistic: 1 / (1 + exp(-a (c - b)))
    double b = 0.5;

    double operator()(double c) const
    {
        switch (kind) {
        case Kind::None: return c;
        case Kind::Power: return std::pow(c, gamma);
        case Kind::Logistic: return 1.0 / (1.0 + std::exp(-a * (c - b)));
        }
        return c;
    }
    void validate() const
    {
        if (kind == Kind::Power && !(gamma > 0.0 && std::isfinite(gamma)))
            throw Error(ErrorCode::InvalidArgument, "power miscalibration needs gamma > 0");
        if (kind == Kind::Logistic && !(a > 0.0 && std::isfinite(a) && std::isfinite(b)))
            throw Error(ErrorCode::InvalidArgument, "logistic miscalibration needs a > 0");
    }
};

/// Coherent false hypotheses: every decoy cell predicts the keypoints of one
/// wrong pose (the truth rotated about its centroid and shifted in the image)
/// with an injected raw confidence drawn uniformly from a band.
struct DecoyModel {
    int count = 0;
    double confidence_min = 0.8;
    double confidence_max = 0.9;
    double rotation_deg = 40.0;
    double shift_px = 25.0;
    double keypoint_sigma_px = 4.0;
};

struct NoiseModel {
    double keypoint_sigma_px = 4.0;
    double outlier_fraction = 0.2;
    double confidence_noise_sigma = 0.15;
    Miscalibration miscalibration;
    DecoyModel decoys;
    int class_count = 1;
    int class_id = 0;
    double label_noise = 0.0; // probability that a cell's one-hot class is wrong
    std::uint64_t seed = 0;

    void validate() const
    {
        auto finite_nonneg = [](double v) { return v >= 0.0 && std::isfinite(v); };
        if (!finite_nonneg(keypoint_sigma_px) || !finite_nonneg(confidence_noise_sigma) ||
            !(outlier_fraction >= 0.0 && outlier_fraction <= 1.0) || !(label_noise >= 0.0 && label_noise <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "noise parameters out of range");
        if (class_count < 1 || class_id < 0 || class_id >= class_count)
            throw Error(ErrorCode::InvalidArgument, "class id outside the class count");
        if (decoys.count < 0 || !(decoys.confidence_min >= 0.0 && decoys.confidence_max <= 1.0 &&
                                  decoys.confidence_min <= decoys.confidence_max) ||
            !finite_nonneg(decoys.keypoint_sigma_px) || !std::isfinite(decoys.rotation_deg) ||
            !std::isfinite(decoys.shift_px))
            throw Error(ErrorCode::InvalidArgument, "decoy parameters out of range");
        miscalibration.validate();
    }
};

enum class CellKind : std::uint8_t { Inlier, Outlier, Decoy };

struct SyntheticScene {
    std::vector<KeypointProposal> proposals; // one per cell, scale-major then row, col
    std::vector<GridCellTruth> truth;        // parallel to proposals
    std::vector<CellKind> kinds;             // parallel to proposals
    std::vector<Pixel2> gt_keypoints;
    std::vector<std::size_t> object_cells; // one per scale
    Pose decoy_pose;                       // meaningful when decoys were injected
};

inline std::vector<Pixel2> project_all(const CameraIntrinsics& k, const Pose& pose, std::span<const Vec3> pts)
{
    std::vector<Pixel2> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = project_point(k, pose, pts[i]);
    return out;
}

/// Emulates the keypoint network's output tensor for one object instance.
inline SyntheticScene synthesize_scene(const MeshModel& mesh, const Pose& gt_pose, const CameraIntrinsics& k,
                                       const GridSpec& grid, const NoiseModel& noise, std::mt19937_64& rng,
                                       const ConfidenceParams& conf = {})
{
    grid.validate();
    noise.validate();
    k.validate();
    if (k.image_width != grid.image_size || k.image_height != grid.image_size)
        throw Error(ErrorCode::DimensionMismatch, "camera image must match the grid's square input size");

    const auto kp3 = cuboid_keypoints(mesh);
    SyntheticScene scene;
    scene.gt_keypoints = project_all(k, gt_pose, kp3);
    const double size = grid.image_size;
    for (const Pixel2& p : scene.gt_keypoints)
        if (!(p.x >= 0.0 && p.y >= 0.0 && p.x < size && p.y < size))
            throw Error(ErrorCode::KeypointsOutOfImage, "ground-truth keypoint projects outside the image");
    const Pixel2 centroid = scene.gt_keypoints.back();

    const std::size_t total = grid.total_cells();
    scene.proposals.resize(total);
    scene.truth.resize(total);
    scene.kinds.assign(total, CellKind::Inlier);

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uniform_px(0.0, size);
    std::bernoulli_distribution outlier(noise.outlier_fraction);
    std::bernoulli_distribution mislabel(noise.label_noise);
    std::uniform_int_distribution<int> any_class(0, noise.class_count - 1);

    auto one_hot = [&](int c) {
        std::vector<double> v(static_cast<std::size_t>(noise.class_count), 0.0);
        v[static_cast<std::size_t>(c)] = 1.0;
        return v;
    };
    const std::vector<double> gt_class = one_hot(noise.class_id);

    std::size_t idx = 0;
    for (std::size_t s = 0; s < grid.scales.size(); ++s) {
        const int n = grid.scales[s];
        const double cs = grid.cell_size(s);
        const int obj_col = std::min(n - 1, static_cast<int>(std::floor(centroid.x / cs)));
        const int obj_row = std::min(n - 1, static_cast<int>(std::floor(centroid.y / cs)));
        for (int row = 0; row < n; ++row)
            for (int col = 0; col < n; ++col, ++idx) {
                KeypointProposal& p = scene.proposals[idx];
                p.origin = {static_cast<int>(s), row, col};
                p.keypoints.resize(scene.gt_keypoints.size());
                if (outlier(rng)) {
                    scene.kinds[idx] = CellKind::Outlier;
                    for (auto& q : p.keypoints) q = {uniform_px(rng), uniform_px(rng)};
                } else {
                    for (std::size_t j = 0; j < p.keypoints.size(); ++j)
                        p.keypoints[j] = {scene.gt_keypoints[j].x + noise.keypoint_sigma_px * gauss(rng),
                                          scene.gt_keypoints[j].y + noise.keypoint_sigma_px * gauss(rng)};
                }
                p.class_scores = one_hot(mislabel(rng) ? any_class(rng) : noise.class_id);
                GridCellTruth& t = scene.truth[idx];
                t.is_object = row == obj_row && col == obj_col;
                if (t.is_object) scene.object_cells.push_back(idx);
                t.gt_keypoints = scene.gt_keypoints;
                t.gt_class = gt_class;
            }
    }

    if (noise.decoys.count > 0) {
        const DecoyModel& d = noise.decoys;
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < total; ++i)
            if (!scene.truth[i].is_object) candidates.push_back(i);
        const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(d.count), candidates.size());
        for (std::size_t i = 0; i < count; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
            std::swap(candidates[i], candidates[pick(rng)]);
        }
        const Vec3 centre = gt_pose.apply(kp3.back());
        Vec3 axis{gauss(rng), gauss(rng), gauss(rng)};
        while (norm(axis) < 1e-12) axis = {gauss(rng), gauss(rng), gauss(rng)};
        const Mat3 dr = axis_angle_to_rotation(axis, d.rotation_deg * std::numbers::pi / 180.0);
        const double dir = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
        const Vec3 shift{d.shift_px * std::cos(dir) * centre.z / k.fx, d.shift_px * std::sin(dir) * centre.z / k.fy, 0.0};
        // Rotate about the object centre, then shift parallel to the image plane.
        scene.decoy_pose = {dr * gt_pose.rotation, dr * (gt_pose.translation - centre) + centre + shift};
        const std::vector<Pixel2> decoy_kp = project_all(k, scene.decoy_pose, kp3);
        std::uniform_real_distribution<double> band(d.confidence_min, d.confidence_max);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t c = candidates[i];
            scene.kinds[c] = CellKind::Decoy;
            for (std::size_t j = 0; j < decoy_kp.size(); ++j)
                scene.proposals[c].keypoints[j] = {decoy_kp[j].x + d.keypoint_sigma_px * gauss(rng),
                                                   decoy_kp[j].y + d.keypoint_sigma_px * gauss(rng)};
        }
        // Confidences are drawn below so every cell consumes the stream in the same order.
        for (std::size_t i = 0; i < count; ++i) scene.proposals[candidates[i]].raw_confidence = band(rng);
    }

    for (std::size_t i = 0; i < total; ++i) {
        KeypointProposal& p = scene.proposals[i];
        GridCellTruth& t = scene.truth[i];
        t.gt_confidence = proposal_confidence(p.keypoints, scene.gt_keypoints, conf);
        if (scene.kinds[i] == CellKind::Decoy) continue;
        const double raw = noise.miscalibration(t.gt_confidence) + noise.confidence_noise_sigma * gauss(rng);
        p.raw_confidence = std::clamp(raw, 0.0, 1.0);
    }
    return scene;
}

inline SyntheticScene synthesize_scene(const MeshModel& mesh, const Pose& gt_pose, const CameraIntrinsics& k,
                                       const GridSpec& grid, const NoiseModel& noise)
{
    std::mt19937_64 rng(noise.seed);
    return synthesize_scene(mesh, gt_pose, k, grid, noise, rng);
}

} // namespace cullkit
