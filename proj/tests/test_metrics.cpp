#include <gtest/gtest.h>

#include <random>

#include "cullkit/metrics.hpp"
#include "test_support.hpp"

using namespace cullkit;
using cullkit::testing::random_rotation;
using cullkit::testing::test_camera;

namespace {

MeshModel plate()
{
    return MeshModel({{1, 1, 0}, {-1, 1, 0}, {-1, -1, 0}, {1, -1, 0}}, {{0, 1, 2}, {0, 2, 3}});
}

MeshModel random_cloud(std::mt19937_64& rng, std::size_t m)
{
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    std::vector<Vec3> v(m);
    for (auto& p : v) p = {u(rng), u(rng), 0.6 * u(rng)};
    return MeshModel(v, {});
}

PoseInstance random_instance(std::mt19937_64& rng, double rot_scale = 0.3, double trans_scale = 0.02)
{
    std::normal_distribution<double> n(0.0, 1.0);
    PoseInstance inst;
    inst.ground_truth = {random_rotation(rng), {0.02 * n(rng), 0.02 * n(rng), 0.7 + 0.05 * n(rng)}};
    const Vec3 axis{n(rng), n(rng), n(rng)};
    inst.predicted = {axis_angle_to_rotation(axis, rot_scale * std::abs(n(rng))) * inst.ground_truth.rotation,
                      inst.ground_truth.translation + Vec3{trans_scale * n(rng), trans_scale * n(rng), trans_scale * n(rng)}};
    return inst;
}

} // namespace

TEST(Reprojection, IdenticalPosesAreExact)
{
    std::mt19937_64 rng(1);
    const MeshModel mesh = make_box_mesh({0.1, 0.08, 0.05}, 2);
    PoseInstance inst;
    inst.ground_truth = inst.predicted = {random_rotation(rng), {0, 0, 0.8}};
    const auto r = reprojection_metric(inst, mesh, test_camera());
    EXPECT_EQ(r.mean_px, 0.0);
    EXPECT_TRUE(r.correct);
}

TEST(Reprojection, UniformSixPixelShift)
{
    // Planar object parallel to the image plane: an x translation of 6 Z / fx
    // moves every projection by 6 px.
    const MeshModel mesh = make_box_mesh({0.1, 0.1, 0.0}, 3);
    PoseInstance inst;
    inst.ground_truth.translation = {0.01, -0.02, 2.0};
    inst.predicted = inst.ground_truth;
    inst.predicted.translation.x += 6.0 * 2.0 / 500.0;
    const CameraIntrinsics k = test_camera();
    for (const Vec3& v : mesh.vertices())
        EXPECT_NEAR(vertex_distance(v, inst.predicted, inst.ground_truth, k), 6.0, 1e-9);
    const auto r = reprojection_metric(inst, mesh, k);
    EXPECT_NEAR(r.mean_px, 6.0, 1e-9);
    EXPECT_FALSE(r.correct);
}

TEST(Reprojection, ScalesWithFocalLength)
{
    std::mt19937_64 rng(2);
    const MeshModel mesh = make_ellipsoid_mesh({0.05, 0.04, 0.03});
    const CameraIntrinsics k1 = CameraIntrinsics::make(400, 400, 320, 240, 640, 480);
    const CameraIntrinsics k2 = CameraIntrinsics::make(800, 800, 320, 240, 640, 480);
    for (int t = 0; t < 50; ++t) {
        PoseInstance inst;
        inst.ground_truth = {random_rotation(rng), {0.0, 0.01, 0.9}};
        inst.predicted = inst.ground_truth;
        inst.predicted.translation += Vec3{0.004 * (t % 5), -0.003 * (t % 3), 0.0};
        const double a = reprojection_metric(inst, mesh, k1).mean_px;
        const double b = reprojection_metric(inst, mesh, k2).mean_px;
        EXPECT_NEAR(b, 2.0 * a, 1e-6 * std::max(1.0, b));
    }
}

TEST(Reprojection, BehindCameraThrows)
{
    PoseInstance inst;
    inst.ground_truth.translation = {0, 0, 1};
    inst.predicted.translation = {0, 0, -1};
    EXPECT_THROW(reprojection_metric(inst, plate(), test_camera()), Error);
}

TEST(Add, Examples)
{
    const MeshModel mesh = make_box_mesh({0.1, 0.06, 0.04}, 2);
    std::mt19937_64 rng(3);
    PoseInstance inst;
    inst.ground_truth = inst.predicted = {random_rotation(rng), {0.1, 0.2, 0.9}};
    EXPECT_EQ(add_error(inst, mesh), 0.0);
    inst.ground_truth.translation = {0, 0, 0};
    inst.predicted.translation = {0, 0, 0.01};
    EXPECT_DOUBLE_EQ(add_error(inst, mesh), 0.01);
    inst.ground_truth.translation = {0.3, -0.1, 1.1};
    inst.predicted.translation = inst.ground_truth.translation + Vec3{0, 0, 0.01};
    EXPECT_NEAR(add_error(inst, mesh), 0.01, 1e-15);
}

TEST(Adi, SymmetricPlate)
{
    const MeshModel p = plate();
    const Mat3 rz180{{-1, 0, 0, 0, -1, 0, 0, 0, 1}};
    PoseInstance inst;
    inst.ground_truth.translation = {0, 0, 5};
    inst.predicted = inst.ground_truth;
    inst.predicted.rotation = rz180;
    EXPECT_EQ(adi_error(inst, p), 0.0);
    EXPECT_GT(add_error(inst, p), 0.0);

    std::mt19937_64 rng(4);
    inst.ground_truth.rotation = random_rotation(rng);
    inst.predicted.rotation = inst.ground_truth.rotation * rz180;
    EXPECT_NEAR(adi_error(inst, p), 0.0, 1e-12);
    EXPECT_NEAR(add_error(inst, p), 2.0 * std::sqrt(2.0), 1e-12);
}

TEST(Adi, NeverExceedsAdd)
{
    std::mt19937_64 rng(5);
    const MeshModel mesh = make_ellipsoid_mesh({0.06, 0.03, 0.02}, 8, 16);
    for (int t = 0; t < 1000; ++t) {
        const PoseInstance inst = random_instance(rng);
        const double adi = adi_error(inst, mesh), add = add_error(inst, mesh);
        ASSERT_LE(adi, add);
        ASSERT_GE(adi, 0.0);
    }
}

TEST(Adi, GridMatchesBruteForceExactly)
{
    std::mt19937_64 rng(6);
    for (std::size_t m : {1u, 2u, 50u, 700u, 6000u}) {
        const MeshModel mesh = random_cloud(rng, m);
        for (int t = 0; t < 5; ++t) {
            const PoseInstance inst = random_instance(rng, 0.5 * t, 0.01 * t);
            EXPECT_EQ(adi_error_grid(inst, mesh), adi_error_bruteforce(inst, mesh)) << m;
        }
    }
    // Degenerate layouts: flat and collinear clouds.
    std::vector<Vec3> flat, line;
    for (int i = 0; i < 400; ++i) {
        flat.push_back({0.001 * (i % 20), 0.001 * (i / 20), 0});
        line.push_back({0.001 * i, 0, 0});
    }
    for (const auto& pts : {flat, line}) {
        const MeshModel mesh(pts, {});
        const PoseInstance inst = random_instance(rng);
        EXPECT_EQ(adi_error_grid(inst, mesh), adi_error_bruteforce(inst, mesh));
    }
}

TEST(Add, IsometryInvariance)
{
    std::mt19937_64 rng(7);
    const MeshModel mesh = make_box_mesh({0.1, 0.07, 0.05}, 2);
    for (int t = 0; t < 200; ++t) {
        PoseInstance inst = random_instance(rng);
        const double before = add_error(inst, mesh);
        const Pose g{random_rotation(rng), {0.3, -0.4, 0.2}};
        inst.ground_truth = g.compose(inst.ground_truth);
        inst.predicted = g.compose(inst.predicted);
        EXPECT_NEAR(add_error(inst, mesh), before, 1e-9);
    }
}

TEST(AddiCorrect, Thresholds)
{
    const MeshModel mesh = make_box_mesh({0.1, 0.08, 0.06}, 1);
    const double d = mesh.diameter();
    PoseInstance inst;
    inst.ground_truth.translation = {0, 0, 0.7};
    inst.predicted = inst.ground_truth;
    EXPECT_TRUE(addi_correct(inst, mesh, false));
    inst.predicted.translation.x += 0.2 * d;
    EXPECT_FALSE(addi_correct(inst, mesh, false));
    EXPECT_FALSE(addi_correct(inst, mesh, true));
    inst.predicted.translation = inst.ground_truth.translation + Vec3{0.09 * d, 0, 0};
    EXPECT_TRUE(addi_correct(inst, mesh, false));
}

TEST(AccuracyReport, PerfectAndStepFunction)
{
    const MeshModel mesh = make_box_mesh({0.1, 0.1, 0.0}, 2);
    const CameraIntrinsics k = test_camera();
    ClassRegistry reg{{1, {"plate", &mesh, false}}};
    std::vector<PoseInstance> perfect(4);
    for (auto& p : perfect) {
        p.class_id = 1;
        p.ground_truth.translation = {0, 0, 2};
        p.predicted = p.ground_truth;
    }
    const AccuracyReport r = accuracy_report(perfect, reg, k);
    EXPECT_EQ(r.classes.at(0).reproj_accuracy, 100.0);
    EXPECT_EQ(r.classes.at(0).addi_accuracy, 100.0);
    for (double v : r.average.reproj_curve) EXPECT_EQ(v, 100.0);

    std::vector<PoseInstance> half = perfect;
    for (int i = 0; i < 2; ++i) half[i].predicted.translation.x += 10.0 * 2.0 / 500.0; // 10 px
    const AccuracyReport h = accuracy_report(half, reg, k);
    EXPECT_EQ(h.classes[0].reproj_accuracy, 50.0);
    for (int t = 1; t <= kCurveMaxThreshold; ++t) EXPECT_EQ(h.classes[0].reproj_curve[t - 1], t >= 11 ? 100.0 : 50.0) << t;
}

TEST(AccuracyReport, AverageIsUnweightedAndCurvesMonotone)
{
    std::mt19937_64 rng(8);
    const MeshModel a = make_box_mesh({0.1, 0.08, 0.05}, 2), b = make_ellipsoid_mesh({0.04, 0.04, 0.02});
    ClassRegistry reg{{0, {"a", &a, false}}, {3, {"b", &b, true}}};
    std::vector<PoseInstance> inst;
    for (int i = 0; i < 30; ++i) {
        PoseInstance p = random_instance(rng, 0.05, 0.005);
        p.class_id = i < 10 ? 0 : 3;
        inst.push_back(p);
    }
    const AccuracyReport r = accuracy_report(inst, reg, test_camera());
    ASSERT_EQ(r.classes.size(), 2u);
    EXPECT_DOUBLE_EQ(r.average.reproj_accuracy, (r.classes[0].reproj_accuracy + r.classes[1].reproj_accuracy) / 2);
    EXPECT_DOUBLE_EQ(r.average.addi_accuracy, (r.classes[0].addi_accuracy + r.classes[1].addi_accuracy) / 2);
    for (const auto& c : r.classes)
        for (int t = 1; t < kCurveMaxThreshold; ++t) EXPECT_LE(c.reproj_curve[t - 1], c.reproj_curve[t]);
    EXPECT_EQ(r.classes[1].instances, 20u);
}

TEST(ZBias, DegenerateHistogram)
{
    const MeshModel mesh = make_box_mesh({0.1, 0.1, 0.1}, 1);
    ClassRegistry reg{{2, {"box", &mesh, false}}};
    std::vector<PoseInstance> inst(100);
    for (auto& p : inst) {
        p.class_id = 2;
        p.ground_truth.translation = {0, 0, 1.012};
        p.predicted.translation = {0, 0, 1.0};
    }
    const BiasTable t = fit_z_bias(inst, reg);
    EXPECT_NEAR(t.classes.at(2).offset, 0.012, 1e-12);
    EXPECT_FALSE(t.classes.at(2).low_confidence);
}

TEST(ZBias, GaussianMode)
{
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.01, 0.001);
    std::vector<double> v(5000);
    for (auto& x : v) x = n(rng);
    const BiasEntry e = histogram_mode(v, 400);
    EXPECT_NEAR(e.offset, 0.01, 0.001);
    EXPECT_GT(e.bin_width, 0.0);
}

TEST(ZBias, BimodalTieGoesNearerZero)
{
    // Bins over [-0.02, 0.03] of width 0.005: -0.02 lands in bin 0 (centre
    // -0.0175) and 0.02 in bin 8 (centre 0.0225); the 0.03 extreme is a
    // single value in bin 9.
    std::vector<double> v;
    for (int i = 0; i < 50; ++i) {
        v.push_back(-0.02);
        v.push_back(0.02);
    }
    v.push_back(0.03);
    const BiasEntry e = histogram_mode(v, 10);
    EXPECT_NEAR(e.offset, -0.0175, 1e-12);

    std::vector<double> sym;
    for (int i = 0; i < 50; ++i) {
        sym.push_back(-0.02);
        sym.push_back(0.02);
    }
    const BiasEntry s = histogram_mode(sym, 400);
    EXPECT_LT(s.offset, 0.0); // equal distance from zero: lower bin wins
}

TEST(ZBias, LowConfidenceFlag)
{
    std::vector<double> v(38, 0.5);
    v.push_back(0.6);
    EXPECT_TRUE(histogram_mode(v, 400).low_confidence);
    v.push_back(0.7);
    EXPECT_FALSE(histogram_mode(v, 400).low_confidence);
}

TEST(ZBias, ApplyAndClosedLoop)
{
    Pose p;
    p.translation = {0, 0, 1};
    EXPECT_EQ(apply_z_bias(p, 0.0).translation.z, 1.0);
    EXPECT_DOUBLE_EQ(apply_z_bias(p, -0.012).translation.z, 0.988);
    EXPECT_EQ(apply_z_bias(p, -0.012).rotation, p.rotation);

    std::mt19937_64 rng(10);
    std::normal_distribution<double> n(0.0, 0.002);
    const MeshModel mesh = make_box_mesh({0.1, 0.08, 0.06}, 2);
    ClassRegistry reg{{0, {"box", &mesh, false}}};
    std::vector<PoseInstance> inst(2000);
    for (auto& i : inst) {
        i.ground_truth = {random_rotation(rng), {0, 0, 0.8}};
        i.predicted = i.ground_truth;
        i.predicted.translation += Vec3{n(rng), n(rng), 0.012 + n(rng)};
    }
    const BiasTable t = fit_z_bias(inst, reg);
    const double width = t.classes.at(0).bin_width;
    double before = 0.0, after = 0.0;
    std::vector<PoseInstance> corrected = inst;
    for (auto& i : corrected) i.predicted = apply_z_bias(i.predicted, t.offset_for(0));
    for (std::size_t i = 0; i < inst.size(); ++i) {
        before += z_axis_error(inst[i], mesh);
        after += z_axis_error(corrected[i], mesh);
    }
    before /= inst.size();
    after /= inst.size();
    EXPECT_NEAR(before, -0.012, 0.0005);
    EXPECT_LT(std::abs(after), std::abs(before));
    const BiasTable again = fit_z_bias(corrected, reg);
    EXPECT_LE(std::abs(again.classes.at(0).offset), width);
}
