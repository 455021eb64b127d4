#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cullkit/culling.hpp"
#include "cullkit/metrics.hpp"
#include "cullkit/parallel.hpp"
#include "cullkit/sim.hpp"

namespace cullkit {

enum class Strategy { Argmax, Oracle, NoisyOracle, Raw, Ransac };

inline std::string to_string(Strategy s)
{
    switch (s) {
    case Strategy::Argmax: return "argmax";
    case Strategy::Oracle: return "oracle";
    case Strategy::NoisyOracle: return "noisy-oracle";
    case Strategy::Raw: return "raw";
    case Strategy::Ransac: return "ransac";
    }
    return "?";
}

inline Strategy parse_strategy(const std::string& s)
{
    for (Strategy v : {Strategy::Argmax, Strategy::Oracle, Strategy::NoisyOracle, Strategy::Raw, Strategy::Ransac})
        if (to_string(v) == s) return v;
    throw Error(ErrorCode::ParseError, "unknown strategy '" + s + "'");
}

struct MeshSpec {
    enum class Kind { Box, Ellipsoid, File } kind = Kind::Box;
    Vec3 size{0.1, 0.08, 0.06}; // box edge lengths or ellipsoid diameters
    int subdivisions = 2;
    std::string path;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    int trials = 100;
    std::vector<Strategy> strategies{Strategy::Argmax, Strategy::Oracle};
    std::vector<int> k_values{6};
    bool include_centroid = true;
    bool symmetric = false;
    RenderMode render_mode = RenderMode::TriangleFill;
    CameraIntrinsics camera{480.0, 480.0, 208.0, 208.0, 416, 416};
    MeshSpec mesh;
    GridSpec grid;
    PoseSampler poses;
    NoiseModel noise;
    ConfidenceParams confidence;
    RansacOptions ransac;
    double noisy_oracle_sigma = 0.05;
    double reproj_threshold_px = 5.0;

    void validate() const
    {
        if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
        if (strategies.empty()) throw Error(ErrorCode::InvalidArgument, "no strategies configured");
        if (k_values.empty()) throw Error(ErrorCode::InvalidArgument, "no k values configured");
        for (int k : k_values)
            if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
        camera.validate();
        grid.validate();
        noise.validate();
        confidence.validate();
    }
};

struct TrialOutcome {
    Strategy strategy = Strategy::Argmax;
    int k = 1;
    bool failed = false;
    std::string note;
    double reproj_px = 0.0;
    double addi = 0.0;
    bool reproj_ok = false;
    bool addi_ok = false;
};

struct StrategySummary {
    Strategy strategy = Strategy::Argmax;
    int k = 1;
    int trials = 0;
    int failures = 0;
    double reproj_accuracy = 0.0; // percent, failures count as incorrect
    double addi_accuracy = 0.0;   // percent
    double mean_reproj_px = 0.0;  // over non-failed trials
    double mean_addi = 0.0;
};

struct ExperimentReport {
    std::vector<StrategySummary> summaries;
    std::vector<std::vector<TrialOutcome>> trials; // [trial][strategy x k]
    double mesh_diameter = 0.0;

    const StrategySummary& find(Strategy s, int k) const
    {
        for (const auto& r : summaries)
            if (r.strategy == s && (r.k == k || s == Strategy::Argmax)) return r;
        throw Error(ErrorCode::InvalidArgument, "no summary for " + to_string(s) + " k=" + std::to_string(k));
    }
};

inline MeshModel build_builtin_mesh(const MeshSpec& spec)
{
    switch (spec.kind) {
    case MeshSpec::Kind::Box: return make_box_mesh(spec.size, spec.subdivisions);
    case MeshSpec::Kind::Ellipsoid:
        return make_ellipsoid_mesh(spec.size * 0.5, 4 * spec.subdivisions + 4, 8 * spec.subdivisions + 8);
    case MeshSpec::Kind::File: break;
    }
    throw Error(ErrorCode::InvalidArgument, "mesh file specs are loaded by the caller");
}

/// Per-trial random stream, independent of scheduling.
inline std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial, std::uint32_t stream = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32), stream};
    return std::mt19937_64(seq);
}

inline std::vector<TrialOutcome> run_trial(const ExperimentConfig& cfg, const MeshModel& mesh, int trial)
{
    std::mt19937_64 rng = trial_rng(cfg.seed, static_cast<std::uint64_t>(trial));
    const Pose gt = sample_pose(mesh, cfg.camera, cfg.poses, rng);
    const SyntheticScene scene = synthesize_scene(mesh, gt, cfg.camera, cfg.grid, cfg.noise, rng, cfg.confidence);
    const std::vector<Vec3> kp3 = model_keypoints(mesh, cfg.include_centroid);

    std::vector<TrialOutcome> out;
    auto evaluate = [&](TrialOutcome o, const Pose& pose) {
        const PoseInstance inst{pose, gt, 0};
        o.addi = cfg.symmetric ? adi_error(inst, mesh) : add_error(inst, mesh);
        o.addi_ok = o.addi < 0.1 * mesh.diameter();
        try {
            const ReprojectionResult r = reprojection_metric(inst, mesh, cfg.camera, cfg.reproj_threshold_px);
            o.reproj_px = r.mean_px;
            o.reproj_ok = r.correct;
        } catch (const Error&) {
            o.failed = true;
            o.note = "behind camera";
        }
        out.push_back(o);
    };
    auto failure = [&](TrialOutcome o, const Error& e) {
        o.failed = true;
        o.note = std::string(to_string(e.code()));
        out.push_back(o);
    };

    CullOptions copt;
    copt.render_mode = cfg.render_mode;
    for (Strategy s : cfg.strategies) {
        if (s == Strategy::Argmax) {
            TrialOutcome o;
            o.strategy = s;
            try {
                evaluate(o, cull_argmax(scene.proposals, kp3, cfg.camera).pose);
            } catch (const Error& e) {
                failure(o, e);
            }
            continue;
        }
        for (int k : cfg.k_values) {
            TrialOutcome o;
            o.strategy = s;
            o.k = k;
            try {
                if (s == Strategy::Ransac) {
                    RansacOptions ro = cfg.ransac;
                    std::mt19937_64 r = trial_rng(cfg.seed, static_cast<std::uint64_t>(trial), 1 + static_cast<std::uint32_t>(k));
                    ro.seed = r();
                    evaluate(o, ransac_cull(scene.proposals, static_cast<std::size_t>(k), cfg.camera, kp3, ro).selected.pose);
                    continue;
                }
                std::unique_ptr<ProposalScorer> scorer;
                if (s == Strategy::Oracle) scorer = std::make_unique<OracleScorer>(mesh, gt, cfg.camera, cfg.confidence);
                if (s == Strategy::Raw) scorer = std::make_unique<RawConfidenceScorer>();
                if (s == Strategy::NoisyOracle)
                    scorer = std::make_unique<NoisyOracleScorer>(mesh, gt, cfg.camera, cfg.noisy_oracle_sigma,
                                                                 trial_rng(cfg.seed, static_cast<std::uint64_t>(trial), 99)(),
                                                                 cfg.confidence);
                const CullResult res = cull_with_scorer(nullptr, mesh, cfg.camera, kp3, scene.proposals,
                                                        static_cast<std::size_t>(k), *scorer, copt);
                evaluate(o, res.selected.pose);
            } catch (const Error& e) {
                failure(o, e);
            }
        }
    }
    return out;
}

/// Runs every trial (in parallel when threads > 1) and aggregates. The
/// report depends only on the configuration, never on scheduling.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const MeshModel& mesh, unsigned threads = 1)
{
    cfg.validate();
    ExperimentReport report;
    report.mesh_diameter = mesh.diameter();
    report.trials.resize(static_cast<std::size_t>(cfg.trials));
    parallel_for(report.trials.size(), [&](std::size_t t) { report.trials[t] = run_trial(cfg, mesh, static_cast<int>(t)); },
                 threads);

    std::vector<StrategySummary> sums;
    for (const TrialOutcome& o : report.trials.front()) sums.push_back({o.strategy, o.k});
    std::vector<CompensatedSum> reproj_sum(sums.size()), addi_sum(sums.size());
    std::vector<int> ok5(sums.size(), 0), okadd(sums.size(), 0);
    for (const auto& trial : report.trials)
        for (std::size_t i = 0; i < trial.size(); ++i) {
            const TrialOutcome& o = trial[i];
            ++sums[i].trials;
            if (o.failed) {
                ++sums[i].failures;
                continue;
            }
            reproj_sum[i].add(o.reproj_px);
            addi_sum[i].add(o.addi);
            ok5[i] += o.reproj_ok;
            okadd[i] += o.addi_ok;
        }
    for (std::size_t i = 0; i < sums.size(); ++i) {
        StrategySummary& s = sums[i];
        s.reproj_accuracy = 100.0 * ok5[i] / s.trials;
        s.addi_accuracy = 100.0 * okadd[i] / s.trials;
        const int good = s.trials - s.failures;
        s.mean_reproj_px = good ? reproj_sum[i].value() / good : 0.0;
        s.mean_addi = good ? addi_sum[i].value() / good : 0.0;
    }
    report.summaries = std::move(sums);
    return report;
}

} // namespace cullkit
