#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cullkit/confidence.hpp"
#include "cullkit/parallel.hpp"
#include "cullkit/pnp.hpp"
#include "cullkit/silhouette.hpp"

namespace cullkit {

/// Grid cell a proposal came from; orders proposals with equal confidence.
struct GridOrigin {
    int scale = 0;
    int row = 0;
    int col = 0;
    friend auto operator<=>(const GridOrigin&, const GridOrigin&) = default;
};

struct KeypointProposal {
    std::vector<Pixel2> keypoints; // cuboid corners then centroid
    double raw_confidence = 0.0;
    std::vector<double> class_scores;
    GridOrigin origin;
};

struct ScoredProposal {
    KeypointProposal proposal;
    Pose pose;
    double calibrated_confidence = 0.0;
    double reprojection_rms = 0.0;
    std::optional<Patch4> patch;
    std::optional<BinaryMask> mask;
};

struct ScoringInput {
    const KeypointProposal& proposal;
    const Pose& pose;
    const Patch4* patch = nullptr;
};

/// Maps a rendered hypothesis to a confidence in [0,1].
class ProposalScorer {
public:
    virtual ~ProposalScorer() = default;
    virtual double score(const ScoringInput& input) const = 0;
    virtual std::string name() const = 0;
    /// False makes cull_with_scorer invoke this scorer from one thread only.
    virtual bool concurrent_safe() const { return true; }
    virtual bool needs_patch() const { return false; }
};

class RawConfidenceScorer final : public ProposalScorer {
public:
    double score(const ScoringInput& in) const override { return in.proposal.raw_confidence; }
    std::string name() const override { return "raw"; }
};

/// Perfect scorer: the calibrated confidence against the known ground truth.
class OracleScorer : public ProposalScorer {
public:
    OracleScorer(const MeshModel& mesh, const Pose& ground_truth, const CameraIntrinsics& k, ConfidenceParams params = {})
        : mesh_(&mesh), gt_(ground_truth), k_(k), params_(params)
    {
        params_.validate();
    }
    double score(const ScoringInput& in) const override { return calibrated_confidence(*mesh_, in.pose, gt_, k_, params_); }
    std::string name() const override { return "oracle"; }

private:
    const MeshModel* mesh_;
    Pose gt_;
    CameraIntrinsics k_;
    ConfidenceParams params_;
};

inline double oracle_score(const MeshModel& mesh, const Pose& predicted, const Pose& truth, const CameraIntrinsics& k,
                           const ConfidenceParams& params = {})
{
    return calibrated_confidence(mesh, predicted, truth, k, params);
}

/// Oracle plus N(0, sigma) noise, clamped to [0,1]. The noise draw depends
/// only on (seed, grid origin), so scores do not depend on evaluation order.
class NoisyOracleScorer final : public ProposalScorer {
public:
    NoisyOracleScorer(const MeshModel& mesh, const Pose& ground_truth, const CameraIntrinsics& k, double sigma,
                      std::uint64_t seed, ConfidenceParams params = {})
        : oracle_(mesh, ground_truth, k, params), sigma_(sigma), seed_(seed)
    {
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::InvalidArgument, "noise sigma must be >= 0");
    }
    double score(const ScoringInput& in) const override
    {
        const double clean = oracle_.score(in);
        if (sigma_ == 0.0) return clean;
        std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                          static_cast<std::uint32_t>(in.proposal.origin.scale),
                          static_cast<std::uint32_t>(in.proposal.origin.row),
                          static_cast<std::uint32_t>(in.proposal.origin.col)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> n(0.0, sigma_);
        return std::clamp(clean + n(rng), 0.0, 1.0);
    }
    std::string name() const override { return "noisy-oracle"; }

private:
    OracleScorer oracle_;
    double sigma_;
    std::uint64_t seed_;
};

/// Up to k proposals by descending raw confidence; ties by grid origin.
inline std::vector<KeypointProposal> top_k(std::span<const KeypointProposal> proposals, std::size_t k)
{
    if (proposals.empty()) throw Error(ErrorCode::EmptyProposalSet, "no proposals");
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    std::vector<const KeypointProposal*> order;
    order.reserve(proposals.size());
    for (const auto& p : proposals) order.push_back(&p);
    auto better = [](const KeypointProposal* a, const KeypointProposal* b) {
        if (a->raw_confidence != b->raw_confidence) return a->raw_confidence > b->raw_confidence;
        return a->origin < b->origin;
    };
    const std::size_t n = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), better);
    std::vector<KeypointProposal> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(*order[i]);
    return out;
}

/// Pairs the proposal's keypoints with the model keypoints by index. Extra
/// trailing proposal keypoints (the centroid when it is not used) are ignored.
inline PnPSolution proposal_pose(const KeypointProposal& p, std::span<const Vec3> keypoints3d, const CameraIntrinsics& k)
{
    if (p.keypoints.size() < keypoints3d.size())
        throw Error(ErrorCode::LengthMismatch, "proposal has fewer keypoints than the model");
    return epnp_solve(make_correspondences(keypoints3d, std::span(p.keypoints).first(keypoints3d.size())), k);
}

inline std::vector<Vec3> model_keypoints(const MeshModel& mesh, bool include_centroid = true)
{
    const auto kp = cuboid_keypoints(mesh);
    return {kp.begin(), kp.begin() + (include_centroid ? kCuboidKeypointCount : kCuboidKeypointCount - 1)};
}

/// Baseline: the pose of the single most raw-confident proposal.
inline ScoredProposal cull_argmax(std::span<const KeypointProposal> proposals, std::span<const Vec3> keypoints3d,
                                  const CameraIntrinsics& k)
{
    ScoredProposal out;
    out.proposal = top_k(proposals, 1).front();
    const PnPSolution sol = proposal_pose(out.proposal, keypoints3d, k);
    out.pose = sol.pose;
    out.reprojection_rms = sol.reprojection_rms;
    out.calibrated_confidence = out.proposal.raw_confidence;
    return out;
}

struct CullOptions {
    RenderMode render_mode = RenderMode::TriangleFill;
    PatchOptions patch;
    bool keep_patches = false;
    bool keep_masks = false;
    unsigned threads = 1;
    std::uint8_t background_gray = 128; // RGB used when no image is supplied
};

struct SkippedProposal {
    GridOrigin origin;
    std::string reason;
};

struct CullResult {
    ScoredProposal selected;
    std::vector<ScoredProposal> candidates; // scored top-k, in top-k order
    std::vector<SkippedProposal> skipped;
};

/// Top-k, then per proposal: PnP, silhouette, patch, score. Returns the
/// argmax by calibrated confidence (ties: raw confidence, then grid order).
/// Proposals that fail at any stage are skipped and listed with a reason.
inline CullResult cull_with_scorer(const RgbImage* image, const MeshModel& mesh, const CameraIntrinsics& k,
                                   std::span<const Vec3> keypoints3d, std::span<const KeypointProposal> proposals,
                                   std::size_t top, const ProposalScorer& scorer, const CullOptions& options = {})
{
    k.validate();
    if (image && (image->width != k.image_width || image->height != k.image_height))
        throw Error(ErrorCode::DimensionMismatch, "image size differs from the camera's");
    const std::vector<KeypointProposal> chosen = top_k(proposals, top);

    std::optional<RgbImage> gray;
    if (!image) {
        gray.emplace(k.image_width, k.image_height);
        std::fill(gray->data.begin(), gray->data.end(), options.background_gray);
        image = &*gray;
    }

    struct Slot {
        std::optional<ScoredProposal> scored;
        std::string reason;
    };
    std::vector<Slot> slots(chosen.size());
    auto work = [&](std::size_t i) {
        const KeypointProposal& p = chosen[i];
        ScoredProposal s;
        s.proposal = p;
        std::string stage = "pnp";
        try {
            const PnPSolution sol = proposal_pose(p, keypoints3d, k);
            s.pose = sol.pose;
            s.reprojection_rms = sol.reprojection_rms;
            stage = "render";
            BinaryMask mask = render_mask(mesh, s.pose, k, options.render_mode);
            stage = "patch";
            std::optional<Patch4> patch;
            if (scorer.needs_patch() || options.keep_patches) patch = assemble_patch(*image, mask, options.patch);
            stage = "score";
            const double c = scorer.score({p, s.pose, patch ? &*patch : nullptr});
            if (!(c >= 0.0 && c <= 1.0))
                throw Error(ErrorCode::ScorerProcessFailed, "scorer returned " + std::to_string(c));
            s.calibrated_confidence = c;
            if (options.keep_patches) s.patch = std::move(patch);
            if (options.keep_masks) s.mask = std::move(mask);
            slots[i].scored = std::move(s);
        } catch (const Error& e) {
            slots[i].reason = stage + ": " + e.what();
        }
    };
    parallel_for(chosen.size(), work, scorer.concurrent_safe() ? options.threads : 1);

    CullResult result;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i].scored) {
            result.skipped.push_back({chosen[i].origin, slots[i].reason});
            continue;
        }
        result.candidates.push_back(*slots[i].scored);
        const ScoredProposal& c = result.candidates.back();
        // chosen[] is already in (raw desc, grid) order, so strict > keeps the tie rule.
        if (!best || c.calibrated_confidence > result.candidates[*best].calibrated_confidence)
            best = result.candidates.size() - 1;
    }
    if (!best) throw Error(ErrorCode::AllProposalsFailed, "every top-k proposal failed");
    result.selected = result.candidates[*best];
    return result;
}

struct RansacOptions {
    int iterations = 200;
    double inlier_px = 5.0;
    std::uint64_t seed = 0;
};

struct RansacResult {
    ScoredProposal selected; // calibrated_confidence holds the inlier fraction
    std::size_t inliers = 0;
    std::size_t candidates = 0;
};

/// RANSAC baseline over pooled keypoint candidates: index i has one candidate
/// per top-k proposal. Each iteration picks 4 distinct indices and one
/// candidate for each, solves PnP, and counts pooled candidates that
/// reproject within inlier_px. The best consensus set is refit.
inline RansacResult ransac_cull(std::span<const KeypointProposal> proposals, std::size_t top, const CameraIntrinsics& k,
                                std::span<const Vec3> keypoints3d, const RansacOptions& opt = {})
{
    if (top < 2) throw Error(ErrorCode::InvalidArgument, "ransac_cull needs k >= 2");
    if (opt.iterations < 1 || !(opt.inlier_px > 0.0))
        throw Error(ErrorCode::InvalidArgument, "ransac needs iterations >= 1 and a positive inlier threshold");
    const std::vector<KeypointProposal> chosen = top_k(proposals, top);
    const std::size_t n = keypoints3d.size();
    if (n < 4) throw Error(ErrorCode::InvalidArgument, "ransac needs at least 4 model keypoints");
    for (const auto& p : chosen)
        if (p.keypoints.size() < n) throw Error(ErrorCode::LengthMismatch, "proposal has fewer keypoints than the model");
    const std::size_t kk = chosen.size();

    auto consensus = [&](const Pose& pose, std::vector<Correspondence>* set) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 xc = pose.apply(keypoints3d[i]);
            if (!(xc.z > kMinDepth)) continue;
            const Pixel2 proj = project_camera_point(k, xc);
            for (std::size_t j = 0; j < kk; ++j)
                if (distance(chosen[j].keypoints[i], proj) < opt.inlier_px) {
                    ++count;
                    if (set) set->push_back({keypoints3d[i], chosen[j].keypoints[i]});
                }
        }
        return count;
    };

    std::mt19937_64 rng(opt.seed);
    std::vector<std::size_t> idx(n);
    std::optional<Pose> best_pose;
    std::size_t best_count = 0;
    for (int it = 0; it < opt.iterations; ++it) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::vector<Correspondence> sample;
        for (std::size_t s = 0; s < 4; ++s) {
            std::uniform_int_distribution<std::size_t> pick(s, n - 1);
            std::swap(idx[s], idx[pick(rng)]);
            std::uniform_int_distribution<std::size_t> cand(0, kk - 1);
            sample.push_back({keypoints3d[idx[s]], chosen[cand(rng)].keypoints[idx[s]]});
        }
        Pose pose;
        try {
            pose = epnp_solve(sample, k).pose;
        } catch (const Error&) {
            continue;
        }
        const std::size_t count = consensus(pose, nullptr);
        if (count > best_count) {
            best_count = count;
            best_pose = pose;
        }
    }
    if (!best_pose || best_count < 4)
        throw Error(ErrorCode::NoConsensus, "best consensus has " + std::to_string(best_count) + " inliers");

    std::vector<Correspondence> inliers;
    consensus(*best_pose, &inliers);
    Pose final_pose = *best_pose;
    std::size_t final_count = best_count;
    try {
        const Pose refit = epnp_solve(inliers, k).pose;
        const std::size_t c = consensus(refit, nullptr);
        if (c >= best_count) {
            final_pose = refit;
            final_count = c;
        }
    } catch (const Error&) {
        // Degenerate consensus geometry: keep the minimal-sample pose.
    }

    RansacResult out;
    out.selected.proposal = chosen.front();
    out.selected.pose = final_pose;
    out.inliers = final_count;
    out.candidates = n * kk;
    out.selected.calibrated_confidence = static_cast<double>(final_count) / static_cast<double>(out.candidates);
    std::vector<Correspondence> final_set;
    consensus(final_pose, &final_set);
    out.selected.reprojection_rms = final_set.empty() ? 0.0 : reprojection_rms(final_set, k, final_pose);
    return out;
}

enum class OverlapMeasure { BoundingBox, Pixel };

/// Greedy non-maximum suppression by descending calibrated confidence.
/// Every entry needs its rendered mask. A hypothesis is suppressed when its
/// overlap with an already kept one exceeds the threshold.
inline std::vector<ScoredProposal> nms_poses(std::span<const ScoredProposal> scored, double iou_threshold,
                                             OverlapMeasure measure = OverlapMeasure::BoundingBox)
{
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
        throw Error(ErrorCode::InvalidArgument, "iou_threshold must lie in (0,1)");
    std::vector<std::size_t> order(scored.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (const auto& s : scored)
        if (!s.mask) throw Error(ErrorCode::InvalidArgument, "nms_poses needs rendered masks");
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scored[a].calibrated_confidence > scored[b].calibrated_confidence;
    });
    std::vector<Rect> boxes(scored.size());
    std::vector<bool> has_box(scored.size(), false);
    for (std::size_t i = 0; i < scored.size(); ++i)
        if (!scored[i].mask->empty()) {
            boxes[i] = tight_bbox(*scored[i].mask);
            has_box[i] = true;
        }
    std::vector<std::size_t> kept;
    for (std::size_t i : order) {
        bool suppressed = false;
        for (std::size_t j : kept) {
            double iou = 0.0;
            if (measure == OverlapMeasure::Pixel)
                iou = mask_iou(*scored[i].mask, *scored[j].mask);
            else if (has_box[i] && has_box[j])
                iou = rect_iou(boxes[i], boxes[j]);
            if (iou > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(i);
    }
    std::vector<ScoredProposal> out;
    out.reserve(kept.size());
    for (std::size_t i : kept) out.push_back(scored[i]);
    return out;
}

} // namespace cullkit
