// cullkit command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "cullkit/cullkit.hpp"

namespace fs = std::filesystem;
using namespace cullkit;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Pose load_pose_logged(const fs::path& path)
{
    const LoadedPose lp = load_pose_annotation(path);
    if (lp.large_drift)
        std::cerr << "warning: " << path.string() << ": rotation drift " << lp.orthonormality_error
                  << " above 1e-3, re-orthonormalized\n";
    else if (lp.reorthonormalized)
        std::cerr << "note: " << path.string() << ": rotation re-orthonormalized (drift " << lp.orthonormality_error << ")\n";
    return lp.pose;
}

nlohmann::ordered_json pose_json(const Pose& p)
{
    nlohmann::ordered_json r = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < 3; ++i) r.push_back({p.rotation(i, 0), p.rotation(i, 1), p.rotation(i, 2)});
    return {{"rotation", r}, {"translation", {p.translation.x, p.translation.y, p.translation.z}}};
}

std::unique_ptr<ProposalScorer> make_scorer(const std::string& spec, const MeshModel& mesh, const Pose& gt,
                                            const CameraIntrinsics& k, std::uint64_t seed)
{
    if (spec == "raw") return std::make_unique<RawConfidenceScorer>();
    if (spec == "oracle") return std::make_unique<OracleScorer>(mesh, gt, k);
    if (spec.rfind("noisy-oracle:", 0) == 0) {
        double sigma = 0.0;
        if (!detail::parse_number(std::string_view(spec).substr(13), sigma) || !(sigma >= 0.0))
            throw UsageError("noisy-oracle needs a non-negative sigma, e.g. noisy-oracle:0.05");
        return std::make_unique<NoisyOracleScorer>(mesh, gt, k, sigma, seed);
    }
    if (spec.rfind("exec:", 0) == 0) {
        if (spec.size() == 5) throw UsageError("exec: needs a command");
        return external_scorer(spec.substr(5));
    }
    throw UsageError("unknown scorer '" + spec + "' (raw, oracle, noisy-oracle:<sigma>, exec:<cmd>)");
}

std::vector<const DatasetImage*> images_in_split(const DatasetClass& c, const std::string& split)
{
    std::vector<const DatasetImage*> out;
    for (const auto& im : c.images)
        if (split == "all" || im.split == split) out.push_back(&im);
    return out;
}

/// Ground truth and prediction for every image of the split, with any bias
/// table offsets applied to the predictions.
std::vector<PoseInstance> gather_instances(const DatasetIndex& index, const fs::path& predictions,
                                           const std::string& split, const BiasTable* bias)
{
    std::vector<PoseInstance> out;
    for (const auto& c : index.classes)
        for (const DatasetImage* im : images_in_split(c, split)) {
            const fs::path pred = predictions / (im->id + ".txt");
            if (!fs::exists(pred)) throw Error(ErrorCode::IoError, "missing prediction " + pred.string());
            PoseInstance inst;
            inst.class_id = c.id;
            inst.ground_truth = load_pose_logged(im->pose);
            inst.predicted = load_pose_logged(pred);
            if (bias) inst.predicted = apply_z_bias(inst.predicted, bias->offset_for(c.id));
            out.push_back(inst);
        }
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no images in split '" + split + "'");
    return out;
}

struct Meshes {
    std::map<int, MeshModel> meshes;
    ClassRegistry registry;
};

Meshes load_meshes(const DatasetIndex& index)
{
    Meshes m;
    for (const auto& c : index.classes) m.meshes.emplace(c.id, load_ply(c.mesh));
    for (const auto& c : index.classes) m.registry[c.id] = {c.name, &m.meshes.at(c.id), c.symmetric};
    return m;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"cullkit: pose proposal culling, silhouettes and pose metrics"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 0;
    unsigned threads = 0;
    app.add_option("--seed", seed, "seed for every random choice")->capture_default_str();
    app.add_option("--threads", threads, "worker threads (0: CULLKIT_THREADS or hardware)");

    // render-mask
    auto* rm = app.add_subcommand("render-mask", "render a silhouette mask to PGM");
    std::string rm_mesh, rm_pose, rm_intr, rm_out, rm_mode = "triangle";
    rm->add_option("--mesh", rm_mesh, "PLY mesh")->required();
    rm->add_option("--pose", rm_pose, "pose annotation")->required();
    rm->add_option("--intrinsics", rm_intr, "intrinsics file")->required();
    rm->add_option("--mode", rm_mode, "triangle or splat")->check(CLI::IsMember({"triangle", "splat"}))->capture_default_str();
    rm->add_option("--out", rm_out, "output PGM")->required();

    // cull
    auto* cu = app.add_subcommand("cull", "select one pose from keypoint proposals");
    std::string cu_dataset, cu_image, cu_props, cu_scorer = "oracle";
    int cu_k = 6;
    bool cu_no_centroid = false;
    cu->add_option("--dataset", cu_dataset, "dataset index JSON")->required();
    cu->add_option("--image-id", cu_image, "image id in the index")->required();
    cu->add_option("--proposals", cu_props, "proposal JSON file")->required();
    cu->add_option("--scorer", cu_scorer, "raw | oracle | noisy-oracle:<sigma> | exec:<cmd>")->capture_default_str();
    cu->add_option("--k", cu_k, "number of top proposals to rescore")->check(CLI::PositiveNumber)->capture_default_str();
    cu->add_flag("--no-centroid", cu_no_centroid, "solve PnP from the 8 corners only");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "accuracy report for pose predictions");
    std::string ev_dataset, ev_pred, ev_bias, ev_out, ev_split = "test";
    ev->add_option("--dataset", ev_dataset, "dataset index JSON")->required();
    ev->add_option("--predictions", ev_pred, "directory of <image-id>.txt poses")->required();
    ev->add_option("--bias-table", ev_bias, "bias table JSON to apply first");
    ev->add_option("--out", ev_out, "output directory")->required();
    ev->add_option("--split", ev_split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();

    // calibrate-bias
    auto* cb = app.add_subcommand("calibrate-bias", "fit per-class z offsets");
    std::string cb_dataset, cb_pred, cb_out, cb_split = "train";
    int cb_bins = 400;
    cb->add_option("--dataset", cb_dataset, "dataset index JSON")->required();
    cb->add_option("--predictions", cb_pred, "directory of <image-id>.txt poses")->required();
    cb->add_option("--bins", cb_bins, "histogram bins")->check(CLI::PositiveNumber)->capture_default_str();
    cb->add_option("--out", cb_out, "output bias table JSON")->required();
    cb->add_option("--split", cb_split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();

    // simulate
    auto* si = app.add_subcommand("simulate", "run a synthetic culling experiment");
    std::string si_config, si_out;
    si->add_option("--config", si_config, "experiment TOML")->required();
    si->add_option("--out", si_out, "output directory")->required();

    // report
    auto* re = app.add_subcommand("report", "print report tables as text");
    std::string re_in;
    re->add_option("--in", re_in, "report directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    const bool seed_given = app.count("--seed") > 0;
    if (threads == 0) threads = configured_threads();

    try {
        if (*rm) {
            const MeshModel mesh = load_ply(rm_mesh);
            const Pose pose = load_pose_logged(rm_pose);
            const CameraIntrinsics k = load_intrinsics(rm_intr);
            const BinaryMask mask =
                render_mask(mesh, pose, k, rm_mode == "splat" ? RenderMode::VertexSplat : RenderMode::TriangleFill);
            write_mask_pgm(mask, rm_out);
            std::cout << "wrote " << rm_out << " (" << mask.count() << " pixels set)\n";
        } else if (*cu) {
            const DatasetIndex index = load_dataset_index(cu_dataset);
            const auto [cls, im] = index.find_image(cu_image);
            const MeshModel mesh = load_ply(cls->mesh);
            const CameraIntrinsics k = load_intrinsics(index.intrinsics);
            const Pose gt = load_pose_logged(im->pose);
            const std::vector<KeypointProposal> proposals = load_proposals(cu_props);
            if (proposals.empty()) throw Error(ErrorCode::EmptyProposalSet, "proposal file has no proposals");
            std::optional<RgbImage> image;
            if (im->image) image = read_rgb_image(im->image->string());
            const auto kp3 = model_keypoints(mesh, !cu_no_centroid);
            const auto scorer = make_scorer(cu_scorer, mesh, gt, k, seed);
            CullOptions opt;
            opt.threads = threads;
            const CullResult res = cull_with_scorer(image ? &*image : nullptr, mesh, k, kp3, proposals,
                                                    static_cast<std::size_t>(cu_k), *scorer, opt);
            nlohmann::ordered_json skipped = nlohmann::ordered_json::array();
            for (const auto& s : res.skipped)
                skipped.push_back({{"grid", {s.origin.scale, s.origin.row, s.origin.col}}, {"reason", s.reason}});
            const auto& sel = res.selected;
            nlohmann::ordered_json out{{"image_id", cu_image},
                                       {"scorer", scorer->name()},
                                       {"k", cu_k},
                                       {"pose", pose_json(sel.pose)},
                                       {"calibrated_confidence", sel.calibrated_confidence},
                                       {"raw_confidence", sel.proposal.raw_confidence},
                                       {"grid", {sel.proposal.origin.scale, sel.proposal.origin.row, sel.proposal.origin.col}},
                                       {"reprojection_rms", sel.reprojection_rms},
                                       {"candidates", res.candidates.size()},
                                       {"skipped", skipped}};
            std::cout << out.dump(2) << '\n';
        } else if (*ev) {
            const DatasetIndex index = load_dataset_index(ev_dataset);
            const CameraIntrinsics k = load_intrinsics(index.intrinsics);
            const Meshes meshes = load_meshes(index);
            std::optional<BiasTable> bias;
            if (!ev_bias.empty()) bias = load_bias_table(ev_bias);
            const auto instances = gather_instances(index, ev_pred, ev_split, bias ? &*bias : nullptr);
            const AccuracyReport r = accuracy_report(instances, meshes.registry, k);
            write_accuracy_report(r, ev_out);
            std::cout << render_table(parse_csv(accuracy_csv(r)));
        } else if (*cb) {
            const DatasetIndex index = load_dataset_index(cb_dataset);
            const Meshes meshes = load_meshes(index);
            const auto instances = gather_instances(index, cb_pred, cb_split, nullptr);
            const BiasTable t = fit_z_bias(instances, meshes.registry, cb_bins);
            for (const auto& [id, e] : t.classes)
                if (e.low_confidence)
                    std::cerr << "warning: class " << id << " has " << e.instances << " instances, fewer than bins/10\n";
            write_bias_table(t, cb_out);
            std::cout << bias_table_json(t).dump(2) << '\n';
        } else if (*si) {
            ExperimentConfig cfg = load_experiment_config(si_config);
            if (seed_given) cfg.seed = seed;
            const MeshModel mesh = experiment_mesh(cfg);
            const ExperimentReport r = run_experiment(cfg, mesh, threads);
            write_experiment_report(r, cfg, si_out);
            std::cout << render_table(parse_csv(experiment_summary_csv(r)));
        } else if (*re) {
            const fs::path dir(re_in);
            bool any = false;
            for (const char* name : {"summary.csv", "k_curve.csv", "accuracy.csv"}) {
                if (!fs::exists(dir / name)) continue;
                if (any) std::cout << '\n';
                std::cout << name << "\n" << render_table(parse_csv(detail::read_text_file(dir / name)));
                any = true;
            }
            if (!any) throw Error(ErrorCode::IoError, "no report CSV files in " + dir.string());
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
