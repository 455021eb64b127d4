#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>
#include <unistd.h>

#include "cullkit/config.hpp"
#include "cullkit/io.hpp"
#include "cullkit/report.hpp"
#include "test_support.hpp"

using namespace cullkit;
using cullkit::testing::random_rotation;

namespace {

fs::path data(const std::string& name)
{
    const char* dir = std::getenv("CULLKIT_TEST_DATA");
    return fs::path(dir ? dir : "tests/data") / name;
}

class TempDir {
public:
    TempDir()
    {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("cullkit-io-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

void write_text(const fs::path& p, const std::string& s)
{
    fs::create_directories(p.parent_path());
    std::ofstream(p) << s;
}

ErrorCode code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::InvalidArgument;
}

} // namespace

TEST(Ply, AsciiCube)
{
    const MeshModel m = load_ply(data("cube_ascii.ply"));
    EXPECT_EQ(m.vertex_count(), 8u);
    EXPECT_EQ(m.faces().size(), 12u);
    // Edge 2, so the diameter is the space diagonal 2*sqrt(3).
    EXPECT_NEAR(m.diameter(), 2.0 * std::sqrt(3.0), 1e-12);
    EXPECT_EQ(m.vertices()[7], (Vec3{1, 1, 1}));
}

TEST(Ply, BinaryMatchesAscii)
{
    const MeshModel a = load_ply(data("cube_ascii.ply"));
    const MeshModel b = load_ply(data("cube_binary.ply"));
    EXPECT_TRUE(std::ranges::equal(a.vertices(), b.vertices()));
    EXPECT_TRUE(std::ranges::equal(a.faces(), b.faces()));
    EXPECT_EQ(a.diameter(), b.diameter());
}

TEST(Ply, QuadsBecomeFans)
{
    const MeshModel q = load_ply(data("cube_quads.ply"));
    EXPECT_EQ(q.faces().size(), 12u);
    EXPECT_EQ(q.faces()[0], (Face{0, 2, 3}));
    EXPECT_EQ(q.faces()[1], (Face{0, 3, 1}));
}

TEST(Ply, Errors)
{
    EXPECT_EQ(code_of([] { load_ply(data("cube_truncated.ply")); }), ErrorCode::ParseError);
    EXPECT_EQ(code_of([] { load_ply(data("cube_big_endian.ply")); }), ErrorCode::UnsupportedFormat);
    EXPECT_EQ(code_of([] { load_ply(data("cube_custom_element.ply")); }), ErrorCode::UnsupportedFormat);
    EXPECT_EQ(code_of([] { load_ply(data("does_not_exist.ply")); }), ErrorCode::IoError);
    try {
        load_ply(data("cube_bad_value.ply"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
        EXPECT_NE(std::string(e.what()).find("line 9"), std::string::npos) << e.what();
    }
    try {
        load_ply(data("cube_truncated.ply"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
    }
}

TEST(Ply, WriteReadRoundTrip)
{
    TempDir tmp;
    const MeshModel m = make_ellipsoid_mesh({0.05, 0.04, 0.03}, 8, 16);
    write_ply_ascii(m, tmp / "a.ply");
    write_ply_binary(m, tmp / "b.ply", true);
    const MeshModel a = load_ply(tmp / "a.ply"), b = load_ply(tmp / "b.ply");
    EXPECT_TRUE(std::ranges::equal(a.vertices(), m.vertices()));
    EXPECT_TRUE(std::ranges::equal(b.vertices(), m.vertices()));
    EXPECT_TRUE(std::ranges::equal(a.faces(), m.faces()));
    EXPECT_TRUE(std::ranges::equal(b.faces(), m.faces()));
}

TEST(PoseFile, Identity)
{
    const LoadedPose p = load_pose_annotation(data("pose_identity.txt"));
    EXPECT_EQ(p.pose.rotation, Mat3::identity());
    EXPECT_EQ(p.pose.translation, (Vec3{0, 0, 0}));
    EXPECT_FALSE(p.reorthonormalized);
}

TEST(PoseFile, SmallDriftIsProjected)
{
    const LoadedPose p = load_pose_annotation(data("pose_drift.txt"));
    EXPECT_TRUE(p.reorthonormalized);
    EXPECT_FALSE(p.large_drift);
    EXPECT_NEAR(p.orthonormality_error, 2.0001e-4, 1e-9);
    EXPECT_TRUE(is_rotation(p.pose.rotation, 1e-12));
    EXPECT_NEAR(p.pose.translation.z, 0.75, 0.0);
}

TEST(PoseFile, Errors)
{
    EXPECT_EQ(code_of([] { load_pose_annotation(data("pose_two_rows.txt")); }), ErrorCode::ParseError);
    EXPECT_EQ(code_of([] { load_pose_annotation(data("pose_bad.txt")); }), ErrorCode::InvalidRotation);
    TempDir tmp;
    write_text(tmp / "reflect.txt", "-1 0 0 0\n0 1 0 0\n0 0 1 1\n");
    EXPECT_EQ(code_of([&] { load_pose_annotation(tmp / "reflect.txt"); }), ErrorCode::InvalidRotation);
    write_text(tmp / "nan.txt", "1 0 0 nan\n0 1 0 0\n0 0 1 1\n");
    EXPECT_EQ(code_of([&] { load_pose_annotation(tmp / "nan.txt"); }), ErrorCode::ParseError);
}

TEST(PoseFile, LargeDriftFlagged)
{
    TempDir tmp;
    write_text(tmp / "p.txt", "1.004 0 0 0\n0 1 0 0\n0 0 1 1\n");
    const LoadedPose p = load_pose_annotation(tmp / "p.txt");
    EXPECT_TRUE(p.large_drift);
    EXPECT_TRUE(is_rotation(p.pose.rotation, 1e-12));
}

TEST(PoseFile, RoundTripWithin1e9)
{
    TempDir tmp;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const Pose p{random_rotation(rng), {n(rng), n(rng), 1.0 + std::abs(n(rng))}};
        write_pose_annotation(p, tmp / "p.txt");
        const Pose q = load_pose_annotation(tmp / "p.txt").pose;
        for (std::size_t k = 0; k < 9; ++k) EXPECT_NEAR(q.rotation.m[k], p.rotation.m[k], 1e-9);
        EXPECT_NEAR(distance(q.translation, p.translation), 0.0, 1e-9);
    }
}

TEST(Intrinsics, LoadAndRoundTrip)
{
    const CameraIntrinsics k = load_intrinsics(data("camera.txt"));
    EXPECT_DOUBLE_EQ(k.fx, 572.4114);
    EXPECT_DOUBLE_EQ(k.cy, 242.04899);
    EXPECT_EQ(k.image_width, 640);
    EXPECT_EQ(k.image_height, 480);
    TempDir tmp;
    write_intrinsics(k, tmp / "k.txt");
    const CameraIntrinsics k2 = load_intrinsics(tmp / "k.txt");
    EXPECT_EQ(k2.fx, k.fx);
    EXPECT_EQ(k2.fy, k.fy);
    EXPECT_EQ(k2.cx, k.cx);
    EXPECT_EQ(k2.cy, k.cy);
}

TEST(Intrinsics, Errors)
{
    TempDir tmp;
    write_text(tmp / "missing.txt", "fx=1\nfy=1\ncx=0\ncy=0\nwidth=2\n");
    EXPECT_EQ(code_of([&] { load_intrinsics(tmp / "missing.txt"); }), ErrorCode::ParseError);
    write_text(tmp / "unknown.txt", "fx=1\nfy=1\ncx=0\ncy=0\nwidth=2\nheight=2\nskew=0\n");
    EXPECT_EQ(code_of([&] { load_intrinsics(tmp / "unknown.txt"); }), ErrorCode::ParseError);
    write_text(tmp / "neg.txt", "fx=-1\nfy=1\ncx=0\ncy=0\nwidth=2\nheight=2\n");
    EXPECT_EQ(code_of([&] { load_intrinsics(tmp / "neg.txt"); }), ErrorCode::ParseError);
}

TEST(DatasetIndex, LoadsAndValidates)
{
    TempDir tmp;
    fs::copy_file(data("cube_ascii.ply"), tmp / "cube.ply");
    fs::copy_file(data("camera.txt"), tmp / "camera.txt");
    write_text(tmp / "poses/a.txt", "1 0 0 0\n0 1 0 0\n0 0 1 5\n");
    write_text(tmp / "poses/b.txt", "1 0 0 0\n0 1 0 0\n0 0 1 6\n");
    auto index_json = [](const std::string& second_id, const std::string& second_pose) {
        return std::string(R"({"version": 1, "intrinsics": "camera.txt", "classes": [
            {"id": 3, "name": "cube", "mesh": "cube.ply", "symmetric": true, "images": [
              {"id": "a", "pose": "poses/a.txt", "split": "train"},
              {"id": ")") + second_id + R"(", "pose": ")" + second_pose + R"(", "split": "test"}]}]})";
    };
    write_text(tmp / "index.json", index_json("b", "poses/b.txt"));
    const DatasetIndex idx = load_dataset_index(tmp / "index.json");
    ASSERT_EQ(idx.classes.size(), 1u);
    EXPECT_EQ(idx.classes[0].id, 3);
    EXPECT_TRUE(idx.classes[0].symmetric);
    EXPECT_EQ(idx.classes[0].images.size(), 2u);
    EXPECT_EQ(idx.find_image("b").second->split, "test");

    write_text(tmp / "dangling.json", index_json("b", "poses/missing.txt"));
    EXPECT_EQ(code_of([&] { load_dataset_index(tmp / "dangling.json"); }), ErrorCode::IoError);
    write_text(tmp / "dup.json", index_json("a", "poses/b.txt"));
    EXPECT_EQ(code_of([&] { load_dataset_index(tmp / "dup.json"); }), ErrorCode::ParseError);
    write_text(tmp / "dupclass.json", R"({"version": 1, "intrinsics": "camera.txt", "classes": [
        {"id": 1, "mesh": "cube.ply"}, {"id": 1, "mesh": "cube.ply"}]})");
    EXPECT_EQ(code_of([&] { load_dataset_index(tmp / "dupclass.json"); }), ErrorCode::ParseError);
    write_text(tmp / "v2.json", R"({"version": 2, "intrinsics": "camera.txt", "classes": []})");
    EXPECT_EQ(code_of([&] { load_dataset_index(tmp / "v2.json"); }), ErrorCode::ParseError);
}

TEST(Proposals, JsonRoundTrip)
{
    std::vector<KeypointProposal> ps(3);
    for (int i = 0; i < 3; ++i) {
        ps[static_cast<std::size_t>(i)].keypoints = {{1.5 * i, 2.25}, {3.0, 4.0 + i}};
        ps[static_cast<std::size_t>(i)].raw_confidence = 0.25 * i;
        ps[static_cast<std::size_t>(i)].class_scores = {0.1, 0.9};
        ps[static_cast<std::size_t>(i)].origin = {1, i, 2 * i};
    }
    const auto back = parse_proposals(nlohmann::json::parse(proposals_to_json(ps).dump()));
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].keypoints, ps[i].keypoints);
        EXPECT_EQ(back[i].raw_confidence, ps[i].raw_confidence);
        EXPECT_EQ(back[i].class_scores, ps[i].class_scores);
        EXPECT_EQ(back[i].origin, ps[i].origin);
    }
}

TEST(Proposals, DefaultsAndErrors)
{
    const auto ps = parse_proposals(nlohmann::json::parse(
        R"({"version": 1, "proposals": [{"keypoints": [[0,0]], "confidence": 0.5}, {"keypoints": [[1,1]], "confidence": 0.5}]})"));
    EXPECT_EQ(ps[1].origin, (GridOrigin{0, 0, 1}));
    EXPECT_TRUE(ps[0].class_scores.empty());
    auto bad = [](const char* text) {
        return code_of([&] { parse_proposals(nlohmann::json::parse(text)); });
    };
    EXPECT_EQ(bad(R"({"proposals": []})"), ErrorCode::ParseError);
    EXPECT_EQ(bad(R"({"version": 1, "proposals": [{"keypoints": [[0,0]], "confidence": 1.5}]})"), ErrorCode::ParseError);
    EXPECT_EQ(bad(R"({"version": 1, "proposals": [{"keypoints": [[0]], "confidence": 0.5}]})"), ErrorCode::ParseError);
    EXPECT_EQ(bad(R"({"version": 1, "proposals": [{"keypoints": [[0,0]], "confidence": 0.5},
                                                  {"keypoints": [[0,0],[1,1]], "confidence": 0.5}]})"),
              ErrorCode::ParseError);
}

TEST(Config, ParsesEveryField)
{
    const ExperimentConfig c = parse_experiment_config(R"(
        seed = 7
        trials = 12
        strategies = ["argmax", "ransac"]
        k_values = [2, 4]
        include_centroid = false
        render_mode = "splat"
        [camera]
        fx = 400
        fy = 410.5
        cx = 208
        cy = 208
        width = 416
        height = 416
        [mesh]
        kind = "ellipsoid"
        size = [0.2, 0.1, 0.1]
        [poses]
        depth_min = 2.0
        depth_max = 2.5
        [noise]
        keypoint_sigma_px = 1.5
        outlier_fraction = 0.3
        [noise.miscalibration]
        kind = "logistic"
        a = 8
        b = 0.4
        [noise.decoys]
        count = 5
        [ransac]
        iterations = 50
    )");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.trials, 12);
    EXPECT_EQ(c.strategies, (std::vector<Strategy>{Strategy::Argmax, Strategy::Ransac}));
    EXPECT_EQ(c.k_values, (std::vector<int>{2, 4}));
    EXPECT_FALSE(c.include_centroid);
    EXPECT_EQ(c.render_mode, RenderMode::VertexSplat);
    EXPECT_EQ(c.camera.fx, 400.0);
    EXPECT_EQ(c.camera.fy, 410.5);
    EXPECT_EQ(c.mesh.kind, MeshSpec::Kind::Ellipsoid);
    EXPECT_EQ(c.poses.depth_min, 2.0);
    EXPECT_EQ(c.noise.outlier_fraction, 0.3);
    EXPECT_EQ(c.noise.miscalibration.kind, Miscalibration::Kind::Logistic);
    EXPECT_EQ(c.noise.miscalibration.a, 8.0);
    EXPECT_EQ(c.noise.decoys.count, 5);
    EXPECT_EQ(c.ransac.iterations, 50);
}

TEST(Config, RejectsBadInput)
{
    auto bad = [](const char* text) { return code_of([&] { parse_experiment_config(text); }); };
    EXPECT_EQ(bad("trails = 3"), ErrorCode::ParseError);
    EXPECT_EQ(bad("trials = \"many\""), ErrorCode::ParseError);
    EXPECT_EQ(bad("trials = 0"), ErrorCode::ParseError);
    EXPECT_EQ(bad("strategies = [\"magic\"]"), ErrorCode::ParseError);
    EXPECT_EQ(bad("[noise]\noutlier_fraction = 1.5"), ErrorCode::ParseError);
    EXPECT_EQ(bad("[mesh]\nkind = \"file\""), ErrorCode::ParseError);
    EXPECT_EQ(bad("seed = = 1"), ErrorCode::ParseError);
}

TEST(Config, ShippedConfigsLoad)
{
    const fs::path root = data("").parent_path().parent_path().parent_path() / "configs";
    for (const char* name : {"ablation.toml", "robustness.toml", "smoke.toml"}) {
        SCOPED_TRACE(name);
        EXPECT_NO_THROW(load_experiment_config(root / name));
    }
}

TEST(Report, FixedFormatting)
{
    EXPECT_EQ(detail::fixed(-0.0), "0.000000");
    EXPECT_EQ(detail::fixed(-1e-9), "0.000000");
    EXPECT_EQ(detail::fixed(2.5, 2), "2.50");
    EXPECT_EQ(detail::csv_field("a,b"), "\"a,b\"");
    const auto rows = parse_csv("x,\"a,\"\"b\"\"\"\n1,2\n");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0][1], "a,\"b\"");
}

TEST(Report, BiasTableRoundTrip)
{
    BiasTable t;
    t.classes[2] = {0.0125, -0.1, 0.2, 0.3 / 400, 400, 57, false};
    t.classes[9] = {-0.5, -0.5, -0.5, 0.0, 400, 3, true};
    TempDir tmp;
    write_bias_table(t, tmp / "bias.json");
    const BiasTable b = load_bias_table(tmp / "bias.json");
    ASSERT_EQ(b.classes.size(), 2u);
    EXPECT_EQ(b.offset_for(2), 0.0125);
    EXPECT_EQ(b.offset_for(9), -0.5);
    EXPECT_TRUE(b.classes.at(9).low_confidence);
    EXPECT_EQ(b.classes.at(2).instances, 57u);
    EXPECT_EQ(b.offset_for(4), 0.0);
}
