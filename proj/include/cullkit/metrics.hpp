#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cullkit/confidence.hpp"
#include "cullkit/geometry.hpp"

namespace cullkit {

struct PoseInstance {
    Pose predicted;
    Pose ground_truth;
    int class_id = 0;
};

struct ReprojectionResult {
    double mean_px = 0.0;
    bool correct = false;
};

inline ReprojectionResult reprojection_metric(const PoseInstance& inst, const MeshModel& mesh, const CameraIntrinsics& k,
                                              double threshold_px = 5.0)
{
    CompensatedSum sum;
    for (const Vec3& v : mesh.vertices()) sum.add(vertex_distance(v, inst.predicted, inst.ground_truth, k));
    const double mean = sum.value() / static_cast<double>(mesh.vertex_count());
    return {mean, mean < threshold_px};
}

/// Per-vertex differences are formed as (R X - R^ X) + (t - t^), so a pure
/// translation error yields exactly |t - t^| at every vertex.
inline double add_error(const PoseInstance& inst, const MeshModel& mesh)
{
    const Vec3 dt = inst.ground_truth.translation - inst.predicted.translation;
    CompensatedSum sum;
    for (const Vec3& v : mesh.vertices())
        sum.add(norm((inst.ground_truth.rotation * v - inst.predicted.rotation * v) + dt));
    return sum.value() / static_cast<double>(mesh.vertex_count());
}

namespace detail {

inline std::vector<Vec3> rotated(const MeshModel& mesh, const Mat3& r)
{
    std::vector<Vec3> out;
    out.reserve(mesh.vertex_count());
    for (const Vec3& v : mesh.vertices()) out.push_back(r * v);
    return out;
}

// Distance between gt vertex a (rotated) and predicted vertex b (rotated),
// in the same form add_error uses for its paired term.
inline double pair_distance(const Vec3& a, const Vec3& b, const Vec3& dt) noexcept { return norm((a - b) + dt); }

/// Uniform cubic-cell grid over the predicted vertices for exact
/// closest-distance queries.
class PointGrid {
public:
    explicit PointGrid(const std::vector<Vec3>& pts) : pts_(pts)
    {
        lo_ = hi_ = pts.front();
        for (const Vec3& p : pts) {
            lo_ = {std::min(lo_.x, p.x), std::min(lo_.y, p.y), std::min(lo_.z, p.z)};
            hi_ = {std::max(hi_.x, p.x), std::max(hi_.y, p.y), std::max(hi_.z, p.z)};
        }
        const Vec3 ext = hi_ - lo_;
        const double largest = std::max({ext.x, ext.y, ext.z});
        const double target = std::max(1.0, std::cbrt(static_cast<double>(pts.size())));
        cell_ = largest > 0.0 ? largest / target : 1.0;
        slack_ = 1e-9 * (largest + norm(lo_) + norm(hi_));
        for (int a = 0; a < 3; ++a) dims_[a] = std::max(1, static_cast<int>(std::floor(ext[a] / cell_)) + 1);
        cells_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], {});
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[index(cell_of(pts[i]))].push_back(i);
    }

    /// min_j pair_distance(a, pts[j], dt); the query location is a + dt.
    double nearest(const Vec3& a, const Vec3& dt) const
    {
        const Vec3 q = a + dt;
        const std::array<int, 3> c = cell_of(q);
        double best = std::numeric_limits<double>::infinity();
        const int max_r = std::max({dims_[0], dims_[1], dims_[2]});
        for (int r = 0; r <= max_r; ++r) {
            // Cells on ring r are at least r - 1 whole cells away from q.
            if (r > 0 && static_cast<double>(r - 1) * cell_ > best + slack_) break;
            visit_ring(c, r, a, dt, best);
        }
        return best;
    }

private:
    std::array<int, 3> cell_of(const Vec3& p) const
    {
        std::array<int, 3> c{};
        for (int a = 0; a < 3; ++a) {
            const double f = std::floor((p[a] - lo_[a]) / cell_);
            c[a] = static_cast<int>(std::clamp(f, 0.0, static_cast<double>(dims_[a] - 1)));
        }
        return c;
    }
    std::size_t index(const std::array<int, 3>& c) const
    {
        return (static_cast<std::size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
    }
    void visit_ring(const std::array<int, 3>& c, int r, const Vec3& a, const Vec3& dt, double& best) const
    {
        for (int z = c[2] - r; z <= c[2] + r; ++z) {
            if (z < 0 || z >= dims_[2]) continue;
            for (int y = c[1] - r; y <= c[1] + r; ++y) {
                if (y < 0 || y >= dims_[1]) continue;
                const bool shell = r == 0 || std::abs(z - c[2]) == r || std::abs(y - c[1]) == r;
                for (int x = c[0] - r; x <= c[0] + r; x += shell ? 1 : 2 * r) {
                    if (x < 0 || x >= dims_[0]) continue;
                    for (std::size_t i : cells_[index({x, y, z})]) best = std::min(best, pair_distance(a, pts_[i], dt));
                }
            }
        }
    }

    const std::vector<Vec3>& pts_;
    Vec3 lo_, hi_;
    double cell_ = 1.0;
    double slack_ = 0.0;
    std::array<int, 3> dims_{1, 1, 1};
    std::vector<std::vector<std::size_t>> cells_;
};

} // namespace detail

inline constexpr std::size_t kAdiBruteForceLimit = 5000;

inline double adi_error_bruteforce(const PoseInstance& inst, const MeshModel& mesh)
{
    const auto gt = detail::rotated(mesh, inst.ground_truth.rotation);
    const auto pr = detail::rotated(mesh, inst.predicted.rotation);
    const Vec3 dt = inst.ground_truth.translation - inst.predicted.translation;
    CompensatedSum sum;
    for (const Vec3& a : gt) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& b : pr) best = std::min(best, detail::pair_distance(a, b, dt));
        sum.add(best);
    }
    return sum.value() / static_cast<double>(gt.size());
}

/// Same value as adi_error_bruteforce, bit for bit: each closest distance
/// comes from the identical expression and the sum runs in vertex order.
inline double adi_error_grid(const PoseInstance& inst, const MeshModel& mesh)
{
    const auto gt = detail::rotated(mesh, inst.ground_truth.rotation);
    const auto pr = detail::rotated(mesh, inst.predicted.rotation);
    const Vec3 dt = inst.ground_truth.translation - inst.predicted.translation;
    const detail::PointGrid grid(pr);
    CompensatedSum sum;
    for (const Vec3& a : gt) sum.add(grid.nearest(a, dt));
    return sum.value() / static_cast<double>(gt.size());
}

/// Closest-point variant of ADD for symmetric objects.
inline double adi_error(const PoseInstance& inst, const MeshModel& mesh)
{
    return mesh.vertex_count() <= kAdiBruteForceLimit ? adi_error_bruteforce(inst, mesh) : adi_error_grid(inst, mesh);
}

inline bool addi_correct(const PoseInstance& inst, const MeshModel& mesh, bool symmetric, double diameter_fraction = 0.1)
{
    const double e = symmetric ? adi_error(inst, mesh) : add_error(inst, mesh);
    return e < diameter_fraction * mesh.diameter();
}

// ---------------------------------------------------------------------------
// Accuracy tables

struct ClassInfo {
    std::string name;
    const MeshModel* mesh = nullptr;
    bool symmetric = false;
};

using ClassRegistry = std::map<int, ClassInfo>;

inline constexpr int kCurveMaxThreshold = 50;

struct ClassAccuracy {
    int class_id = -1;
    std::string name;
    bool symmetric = false;
    std::size_t instances = 0;
    std::size_t failed = 0;     // reprojection impossible (vertex behind camera)
    double reproj_accuracy = 0; // percent
    double addi_accuracy = 0;   // percent
    double mean_reproj_px = 0;  // over instances that could be projected
    double mean_addi = 0;       // ADD or ADI, mesh units
    std::array<double, kCurveMaxThreshold> reproj_curve{}; // percent at 1..50 px
};

struct AccuracyReport {
    double reproj_threshold_px = 5.0;
    double addi_fraction = 0.1;
    std::vector<ClassAccuracy> classes;
    ClassAccuracy average; // unweighted mean over classes
};

inline AccuracyReport accuracy_report(std::span<const PoseInstance> instances, const ClassRegistry& registry,
                                      const CameraIntrinsics& k, double reproj_threshold_px = 5.0,
                                      double addi_fraction = 0.1)
{
    if (instances.empty()) throw Error(ErrorCode::InvalidArgument, "accuracy_report needs at least one instance");
    struct Acc {
        std::size_t n = 0, failed = 0, reproj_ok = 0, addi_ok = 0;
        CompensatedSum reproj_sum, addi_sum;
        std::array<std::size_t, kCurveMaxThreshold> curve{};
    };
    std::map<int, Acc> acc;
    for (const PoseInstance& inst : instances) {
        const auto it = registry.find(inst.class_id);
        if (it == registry.end() || !it->second.mesh)
            throw Error(ErrorCode::InvalidArgument, "no mesh registered for class " + std::to_string(inst.class_id));
        const MeshModel& mesh = *it->second.mesh;
        Acc& a = acc[inst.class_id];
        ++a.n;
        const double e = it->second.symmetric ? adi_error(inst, mesh) : add_error(inst, mesh);
        a.addi_sum.add(e);
        if (e < addi_fraction * mesh.diameter()) ++a.addi_ok;
        try {
            const ReprojectionResult r = reprojection_metric(inst, mesh, k, reproj_threshold_px);
            a.reproj_sum.add(r.mean_px);
            if (r.correct) ++a.reproj_ok;
            for (int t = 1; t <= kCurveMaxThreshold; ++t)
                if (r.mean_px < t) ++a.curve[t - 1];
        } catch (const Error& err) {
            if (err.code() != ErrorCode::NonPositiveDepth) throw;
            ++a.failed;
        }
    }

    AccuracyReport report;
    report.reproj_threshold_px = reproj_threshold_px;
    report.addi_fraction = addi_fraction;
    ClassAccuracy& avg = report.average;
    avg.name = "avg";
    for (auto& [id, a] : acc) {
        const ClassInfo& info = registry.at(id);
        ClassAccuracy c;
        c.class_id = id;
        c.name = info.name;
        c.symmetric = info.symmetric;
        c.instances = a.n;
        c.failed = a.failed;
        const double n = static_cast<double>(a.n);
        c.reproj_accuracy = 100.0 * static_cast<double>(a.reproj_ok) / n;
        c.addi_accuracy = 100.0 * static_cast<double>(a.addi_ok) / n;
        const std::size_t projected = a.n - a.failed;
        c.mean_reproj_px = projected ? a.reproj_sum.value() / static_cast<double>(projected)
                                     : std::numeric_limits<double>::infinity();
        c.mean_addi = a.addi_sum.value() / n;
        for (int t = 0; t < kCurveMaxThreshold; ++t) c.reproj_curve[t] = 100.0 * static_cast<double>(a.curve[t]) / n;
        report.classes.push_back(c);
    }
    const double nc = static_cast<double>(report.classes.size());
    for (const ClassAccuracy& c : report.classes) {
        avg.instances += c.instances;
        avg.failed += c.failed;
        avg.reproj_accuracy += c.reproj_accuracy / nc;
        avg.addi_accuracy += c.addi_accuracy / nc;
        avg.mean_reproj_px += c.mean_reproj_px / nc;
        avg.mean_addi += c.mean_addi / nc;
        for (int t = 0; t < kCurveMaxThreshold; ++t) avg.reproj_curve[t] += c.reproj_curve[t] / nc;
    }
    return report;
}

/// Fractional ranks (1-based); tied values share their average rank.
inline std::vector<double> average_ranks(std::span<const double> v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double pearson_correlation(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "correlation inputs differ in length");
    if (x.size() < 2) throw Error(ErrorCode::InvalidArgument, "correlation needs at least two samples");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman_correlation(std::span<const double> x, std::span<const double> y)
{
    const auto rx = average_ranks(x), ry = average_ranks(y);
    return pearson_correlation(rx, ry);
}

// ---------------------------------------------------------------------------
// Depth-bias correction

/// Mean over vertices of the camera-frame z component of gt minus predicted.
/// Adding it to the predicted translation z cancels a constant depth error.
inline double z_axis_error(const PoseInstance& inst, const MeshModel& mesh)
{
    CompensatedSum sum;
    for (const Vec3& v : mesh.vertices()) sum.add(inst.ground_truth.apply(v).z - inst.predicted.apply(v).z);
    return sum.value() / static_cast<double>(mesh.vertex_count());
}

struct BiasEntry {
    double offset = 0.0;
    double range_min = 0.0;
    double range_max = 0.0;
    double bin_width = 0.0;
    int bins = 400;
    std::size_t instances = 0;
    bool low_confidence = false; // fewer than bins / 10 instances
};

struct BiasTable {
    int bins = 400;
    std::map<int, BiasEntry> classes;

    double offset_for(int class_id) const
    {
        const auto it = classes.find(class_id);
        return it == classes.end() ? 0.0 : it->second.offset;
    }
};

/// Mode of a histogram of `bins` equal-width bins over [min, max], reported
/// as the modal bin's centre. Ties go to the bin whose centre is nearer zero,
/// then to the lower bin. A zero-width range yields the common value.
inline BiasEntry histogram_mode(std::span<const double> values, int bins)
{
    if (values.empty()) throw Error(ErrorCode::InvalidArgument, "histogram needs at least one value");
    if (bins < 1) throw Error(ErrorCode::InvalidArgument, "bin count must be positive");
    BiasEntry e;
    e.bins = bins;
    e.instances = values.size();
    e.low_confidence = values.size() * 10 < static_cast<std::size_t>(bins);
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    e.range_min = *mn;
    e.range_max = *mx;
    if (!(e.range_max > e.range_min)) {
        e.offset = e.range_min;
        return e;
    }
    e.bin_width = (e.range_max - e.range_min) / bins;
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (double v : values) {
        int b = static_cast<int>(std::floor((v - e.range_min) / e.bin_width));
        ++counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
    }
    auto centre = [&](int b) { return e.range_min + (b + 0.5) * e.bin_width; };
    int best = 0;
    for (int b = 1; b < bins; ++b) {
        const auto cb = counts[static_cast<std::size_t>(b)], cbest = counts[static_cast<std::size_t>(best)];
        if (cb > cbest || (cb == cbest && std::abs(centre(b)) < std::abs(centre(best)))) best = b;
    }
    e.offset = centre(best);
    return e;
}

inline BiasTable fit_z_bias(std::span<const PoseInstance> train, const ClassRegistry& registry, int bins = 400)
{
    std::map<int, std::vector<double>> errors;
    for (const PoseInstance& inst : train) {
        const auto it = registry.find(inst.class_id);
        if (it == registry.end() || !it->second.mesh)
            throw Error(ErrorCode::InvalidArgument, "no mesh registered for class " + std::to_string(inst.class_id));
        errors[inst.class_id].push_back(z_axis_error(inst, *it->second.mesh));
    }
    BiasTable table;
    table.bins = bins;
    for (const auto& [id, v] : errors) table.classes[id] = histogram_mode(v, bins);
    return table;
}

inline Pose apply_z_bias(Pose pose, double offset)
{
    pose.translation.z += offset;
    return pose;
}

} // namespace cullkit
