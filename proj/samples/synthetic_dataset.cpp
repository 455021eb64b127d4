// Builds a small synthetic dataset on disk and compares culling strategies
// on it. The output directory can be fed straight to the cullkit CLI (see
// samples/walkthrough.sh).
//
//   synthetic_dataset <out-dir> [images] [seed]

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "cullkit/cullkit.hpp"

namespace fs = std::filesystem;
using namespace cullkit;

int main(int argc, char** argv)
{
    if (argc < 2) {
        std::cerr << "usage: " << argv[0] << " <out-dir> [images] [seed]\n";
        return 1;
    }
    const fs::path out = argv[1];
    const int images = argc > 2 ? std::stoi(argv[2]) : 20;
    const std::uint64_t seed = argc > 3 ? std::stoull(argv[3]) : 0;

    try {
        const CameraIntrinsics k = CameraIntrinsics::make(480, 480, 208, 208, 416, 416);
        const MeshModel mesh = make_box_mesh({0.1, 0.08, 0.06}, 2);
        const auto kp3 = model_keypoints(mesh);

        NoiseModel noise;
        noise.keypoint_sigma_px = 3.0;
        noise.outlier_fraction = 0.3;
        noise.confidence_noise_sigma = 0.15;
        noise.miscalibration.kind = Miscalibration::Kind::Power;
        noise.miscalibration.gamma = 0.25;

        for (const char* sub : {"poses", "proposals", "pred_argmax", "pred_oracle", "pred_biased"}) fs::create_directories(out / sub);
        write_ply_binary(mesh, out / "box.ply");
        write_intrinsics(k, out / "camera.txt");

        std::mt19937_64 rng(seed);
        nlohmann::json list = nlohmann::json::array();
        int argmax_ok = 0, oracle_ok = 0;
        for (int i = 0; i < images; ++i) {
            const std::string id = "frame" + std::to_string(i);
            const Pose gt = sample_pose(mesh, k, {0.6, 1.2}, rng);
            const SyntheticScene scene = synthesize_scene(mesh, gt, k, GridSpec{}, noise, rng);

            write_pose_annotation(gt, out / "poses" / (id + ".txt"));
            std::ofstream(out / "proposals" / (id + ".json")) << proposals_to_json(scene.proposals).dump();
            list.push_back({{"id", id}, {"pose", "poses/" + id + ".txt"}, {"split", i % 4 == 0 ? "train" : "test"}});

            const Pose a = cull_argmax(scene.proposals, kp3, k).pose;
            const Pose o = cull_with_scorer(nullptr, mesh, k, kp3, scene.proposals, 6, OracleScorer(mesh, gt, k)).selected.pose;
            write_pose_annotation(a, out / "pred_argmax" / (id + ".txt"));
            write_pose_annotation(o, out / "pred_oracle" / (id + ".txt"));
            // Same poses pushed 5 cm further away, for calibrate-bias to undo.
            write_pose_annotation({o.rotation, o.translation + Vec3{0, 0, 0.05}}, out / "pred_biased" / (id + ".txt"));
            argmax_ok += reprojection_metric({a, gt, 0}, mesh, k).correct;
            oracle_ok += reprojection_metric({o, gt, 0}, mesh, k).correct;
        }

        const nlohmann::json index{{"version", 1},
                                   {"intrinsics", "camera.txt"},
                                   {"classes",
                                    {{{"id", 0}, {"name", "box"}, {"mesh", "box.ply"}, {"symmetric", false}, {"images", list}}}}};
        std::ofstream(out / "index.json") << index.dump(2) << '\n';

        std::printf("wrote %d images to %s\n", images, out.string().c_str());
        std::printf("2D reprojection < 5 px: argmax %d/%d, oracle top-6 %d/%d\n", argmax_ok, images, oracle_ok, images);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
