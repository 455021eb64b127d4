#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cullkit/geometry.hpp"

namespace cullkit {

struct ConfidenceParams {
    double alpha = 2.0; // sharpness of the exponential
    double d_th = 30.0; // pixel distance at which confidence reaches zero

    void validate() const
    {
        if (!(alpha > 0.0) || !std::isfinite(alpha) || !(d_th > 0.0) || !std::isfinite(d_th))
            throw Error(ErrorCode::InvalidArgument, "confidence parameters must be positive and finite");
    }
};

/// Neumaier-compensated running sum; keeps means of many [0,1] terms
/// independent of summation order to well below 1e-12.
class CompensatedSum {
public:
    void add(double v) noexcept
    {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Exponential confidence of a pixel distance: 1 at D = 0, falling to 0 at
/// D = d_th and exactly 0 beyond.
inline double confidence_of_distance(double d, const ConfidenceParams& params = {})
{
    if (!(d >= 0.0)) throw Error(ErrorCode::InvalidArgument, "distance must be non-negative");
    if (d >= params.d_th) return 0.0;
    const double c = std::expm1(params.alpha * (1.0 - d / params.d_th)) / std::expm1(params.alpha);
    return std::clamp(c, 0.0, 1.0);
}

/// Mean keypoint confidence of one proposal against ground-truth keypoints.
inline double proposal_confidence(std::span<const Pixel2> predicted, std::span<const Pixel2> truth,
                                  const ConfidenceParams& params = {})
{
    if (predicted.size() != truth.size())
        throw Error(ErrorCode::LengthMismatch, "predicted and ground-truth keypoint counts differ");
    if (predicted.empty()) throw Error(ErrorCode::InvalidArgument, "proposal has no keypoints");
    CompensatedSum sum;
    for (std::size_t i = 0; i < predicted.size(); ++i) sum.add(confidence_of_distance(distance(predicted[i], truth[i]), params));
    return sum.value() / static_cast<double>(predicted.size());
}

/// Pixel distance between the projections of one vertex under two poses.
inline double vertex_distance(const Vec3& x, const Pose& predicted, const Pose& truth, const CameraIntrinsics& k)
{
    return distance(project_point(k, predicted, x), project_point(k, truth, x));
}

/// Ground-truth calibrated confidence of a pose hypothesis: the mean
/// per-vertex confidence over all mesh vertices.
inline double calibrated_confidence(const MeshModel& mesh, const Pose& predicted, const Pose& truth,
                                    const CameraIntrinsics& k, const ConfidenceParams& params = {})
{
    const auto verts = mesh.vertices();
    CompensatedSum sum;
    for (std::size_t i = 0; i < verts.size(); ++i) {
        double d = 0.0;
        try {
            d = vertex_distance(verts[i], predicted, truth, k);
        } catch (const Error&) {
            throw Error(ErrorCode::NonPositiveDepth, "vertex " + std::to_string(i) + " has non-positive depth");
        }
        sum.add(confidence_of_distance(d, params));
    }
    return sum.value() / static_cast<double>(verts.size());
}

// ---------------------------------------------------------------------------
// Reference values of the keypoint-network training losses.

struct GridCellTruth {
    bool is_object = false;
    std::vector<Pixel2> gt_keypoints;
    double gt_confidence = 0.0;
    std::vector<double> gt_class; // one-hot
};

/// One grid cell's prediction paired with its ground truth.
struct LossCell {
    std::vector<Pixel2> keypoints;
    double confidence = 0.0;
    std::vector<double> class_probs;
    GridCellTruth truth;
};

inline double coord_loss(std::span<const LossCell> cells)
{
    CompensatedSum sum;
    std::size_t objects = 0;
    for (const LossCell& c : cells) {
        if (!c.truth.is_object) continue;
        if (c.keypoints.size() != c.truth.gt_keypoints.size())
            throw Error(ErrorCode::LengthMismatch, "coord_loss: keypoint counts differ");
        ++objects;
        for (std::size_t j = 0; j < c.keypoints.size(); ++j) {
            const double dx = c.keypoints[j].x - c.truth.gt_keypoints[j].x;
            const double dy = c.keypoints[j].y - c.truth.gt_keypoints[j].y;
            sum.add(dx * dx + dy * dy);
        }
    }
    if (objects == 0) throw Error(ErrorCode::NoObjectCells, "coord_loss needs at least one object cell");
    return sum.value() / static_cast<double>(objects);
}

/// Object-cell and non-object-cell squared confidence errors, each
/// normalized by its own cell count; an empty group contributes 0.
inline double conf_loss(std::span<const LossCell> cells)
{
    if (cells.empty()) throw Error(ErrorCode::InvalidArgument, "conf_loss needs at least one cell");
    CompensatedSum obj, noobj;
    std::size_t n_obj = 0, n_noobj = 0;
    for (const LossCell& c : cells) {
        const double e = c.confidence - c.truth.gt_confidence;
        if (c.truth.is_object) {
            obj.add(e * e);
            ++n_obj;
        } else {
            noobj.add(e * e);
            ++n_noobj;
        }
    }
    const double a = n_obj ? obj.value() / static_cast<double>(n_obj) : 0.0;
    const double b = n_noobj ? noobj.value() / static_cast<double>(n_noobj) : 0.0;
    return a + b;
}

/// Cross entropy over object cells. Predicted class vectors must be strictly
/// positive and sum to 1 within 1e-6.
inline double cls_loss(std::span<const LossCell> cells)
{
    CompensatedSum sum;
    std::size_t objects = 0;
    for (const LossCell& c : cells) {
        if (!c.truth.is_object) continue;
        if (c.class_probs.size() != c.truth.gt_class.size())
            throw Error(ErrorCode::LengthMismatch, "cls_loss: class vector lengths differ");
        double total = 0.0;
        for (double p : c.class_probs) {
            if (!(p > 0.0) || !std::isfinite(p))
                throw Error(ErrorCode::InvalidDistribution, "class probabilities must be strictly positive");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-6) throw Error(ErrorCode::InvalidDistribution, "class probabilities must sum to 1");
        ++objects;
        for (std::size_t j = 0; j < c.class_probs.size(); ++j)
            if (c.truth.gt_class[j] != 0.0) sum.add(-c.truth.gt_class[j] * std::log(c.class_probs[j]));
    }
    if (objects == 0) throw Error(ErrorCode::NoObjectCells, "cls_loss needs at least one object cell");
    return sum.value() / static_cast<double>(objects);
}

inline double total_loss(std::span<const LossCell> cells) { return coord_loss(cells) + conf_loss(cells) + cls_loss(cells); }

} // namespace cullkit
