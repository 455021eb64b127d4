#include <gtest/gtest.h>

#include <random>

#include "cullkit/geometry.hpp"
#include "test_support.hpp"

using namespace cullkit;
using cullkit::testing::random_rotation;
using cullkit::testing::random_unit;
using cullkit::testing::unit_cube_mesh;

namespace {

CameraIntrinsics k500() { return CameraIntrinsics::make(500, 500, 320, 240, 640, 480); }

double brute_force_diameter(std::span<const Vec3> v)
{
    double best = 0.0;
    for (const Vec3& a : v)
        for (const Vec3& b : v) best = std::max(best, distance(a, b));
    return best;
}

} // namespace

TEST(ProjectPoint, OpticalAxisMapsToPrincipalPoint)
{
    const Pixel2 p = project_point(k500(), Pose{}, {0, 0, 1});
    EXPECT_DOUBLE_EQ(p.x, 320.0);
    EXPECT_DOUBLE_EQ(p.y, 240.0);
}

TEST(ProjectPoint, LateralOffsetScalesWithFocalLength)
{
    const Pixel2 p = project_point(k500(), Pose{}, {0.1, 0, 1});
    EXPECT_NEAR(p.x, 370.0, 1e-12);
    EXPECT_DOUBLE_EQ(p.y, 240.0);
}

TEST(ProjectPoint, ZeroDepthIsRejected)
{
    Pose pose;
    pose.translation = {0, 0, -1};
    try {
        project_point(k500(), pose, {0, 0, 1});
        FAIL() << "expected NonPositiveDepth";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonPositiveDepth);
    }
}

TEST(ProjectPoint, CompositionLaw)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int trial = 0; trial < 200; ++trial) {
        Pose p1{random_rotation(rng), {u(rng), u(rng), u(rng)}};
        Pose p2{random_rotation(rng), {u(rng), u(rng), 3.0 + u(rng)}};
        const Vec3 x{u(rng), u(rng), u(rng)};
        const Pixel2 a = project_point(k500(), p2.compose(p1), x);
        const Pixel2 b = project_point(k500(), p2, p1.apply(x));
        EXPECT_NEAR(a.x, b.x, 1e-9);
        EXPECT_NEAR(a.y, b.y, 1e-9);
        EXPECT_TRUE(p2.compose(p1).is_valid());
    }
}

TEST(CameraIntrinsics, RejectsInvalidParameters)
{
    EXPECT_THROW(CameraIntrinsics::make(0, 500, 320, 240, 640, 480), Error);
    EXPECT_THROW(CameraIntrinsics::make(500, 500, 640, 240, 640, 480), Error);
    EXPECT_THROW(CameraIntrinsics::make(500, 500, 320, 240, 0, 480), Error);
}

TEST(CuboidKeypoints, UnitCubeIsItsOwnBox)
{
    const auto kp = cuboid_keypoints(unit_cube_mesh());
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_EQ(kp[i].x, double(i & 1)) << i;
        EXPECT_EQ(kp[i].y, double((i >> 1) & 1)) << i;
        EXPECT_EQ(kp[i].z, double((i >> 2) & 1)) << i;
    }
    EXPECT_EQ(kp[8], (Vec3{0.5, 0.5, 0.5}));
}

TEST(CuboidKeypoints, FlatTriangle)
{
    const MeshModel tri({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
    const auto kp = cuboid_keypoints(tri);
    EXPECT_EQ(kp[0], (Vec3{0, 0, 0}));
    EXPECT_EQ(kp[3], (Vec3{1, 1, 0}));
    EXPECT_EQ(kp[7], (Vec3{1, 1, 0}));
    EXPECT_EQ(kp[8], (Vec3{0.5, 0.5, 0}));
}

TEST(CuboidKeypoints, BoxContainsEveryVertexAndCenterIsCornerMean)
{
    const MeshModel mesh = make_ellipsoid_mesh({0.05, 0.03, 0.02}, 10, 17);
    const auto kp = cuboid_keypoints(mesh);
    for (const Vec3& v : mesh.vertices()) {
        EXPECT_GE(v.x, kp[0].x);
        EXPECT_GE(v.y, kp[0].y);
        EXPECT_GE(v.z, kp[0].z);
        EXPECT_LE(v.x, kp[7].x);
        EXPECT_LE(v.y, kp[7].y);
        EXPECT_LE(v.z, kp[7].z);
    }
    Vec3 mean{};
    for (std::size_t i = 0; i < 8; ++i) mean += kp[i];
    mean *= 1.0 / 8.0;
    EXPECT_NEAR(distance(mean, kp[8]), 0.0, 1e-15);
    // Diameter is at least the longest box edge.
    const double max_edge = std::max({kp[7].x - kp[0].x, kp[7].y - kp[0].y, kp[7].z - kp[0].z});
    EXPECT_GE(mesh.diameter(), max_edge - 1e-15);
}

TEST(MeshDiameter, UnitCube)
{
    const MeshModel cube = unit_cube_mesh();
    EXPECT_NEAR(cube.diameter(), brute_force_diameter(cube.vertices()), 0.0);
    EXPECT_NEAR(cube.diameter(), 1.7320508075688772, 1e-15);
}

TEST(MeshDiameter, TwoPointsAndTetrahedron)
{
    const std::vector<Vec3> two{{0, 0, 0}, {0, 0, 2}};
    EXPECT_DOUBLE_EQ(mesh_diameter(two), 2.0);
    const double h = std::sqrt(2.0 / 3.0);
    const std::vector<Vec3> tet{{0, 0, 0}, {1, 0, 0}, {0.5, std::sqrt(3.0) / 2, 0}, {0.5, std::sqrt(3.0) / 6, h}};
    EXPECT_NEAR(mesh_diameter(tet), 1.0, 1e-12);
}

TEST(MeshDiameter, MatchesBruteForceOnRandomClouds)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int t = 0; t < 10; ++t) {
        std::vector<Vec3> pts(50);
        for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
        const MeshModel mesh(pts, {});
        EXPECT_EQ(mesh.diameter(), brute_force_diameter(pts));
    }
}

TEST(MeshModel, RejectsOutOfRangeFace)
{
    EXPECT_THROW(MeshModel({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 3}}), Error);
    EXPECT_THROW(MeshModel({}, {}), Error);
}

TEST(MeshBuilders, BoxIsClosedAndSized)
{
    const MeshModel box = make_box_mesh({0.1, 0.08, 0.06}, 3);
    // 6 n^2 quads, 2 triangles each; surface lattice has 6n^2 + 2 vertices.
    EXPECT_EQ(box.faces().size(), 6u * 9u * 2u);
    EXPECT_EQ(box.vertex_count(), 6u * 9u + 2u);
    EXPECT_NEAR(box.diameter(), std::sqrt(0.01 + 0.0064 + 0.0036), 1e-15);
}

TEST(AxisAngle, IdentityAndQuarterTurn)
{
    const Mat3 r0 = axis_angle_to_rotation({0, 0, 1}, 0.0);
    EXPECT_EQ(r0, Mat3::identity());
    const Mat3 r = axis_angle_to_rotation({0, 0, 1}, std::numbers::pi / 2);
    const Vec3 y = r * Vec3{1, 0, 0};
    EXPECT_NEAR(y.x, 0.0, 1e-15);
    EXPECT_NEAR(y.y, 1.0, 1e-15);
    EXPECT_NEAR(y.z, 0.0, 1e-15);
}

TEST(AxisAngle, ZeroAxisIsRejected)
{
    try {
        axis_angle_to_rotation({0, 0, 0}, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroAxis);
    }
}

TEST(AxisAngle, RandomRoundTrip)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    for (int t = 0; t < 2000; ++t) {
        const Vec3 axis = random_unit(rng);
        const double a = angle(rng);
        const Mat3 r = axis_angle_to_rotation(axis, a);
        ASSERT_TRUE(is_rotation(r));
        const AxisAngle aa = rotation_to_axis_angle(r);
        EXPECT_NEAR(aa.angle, a, 1e-12);
        const Mat3 back = axis_angle_to_rotation(aa.axis, aa.angle);
        for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(back.m[i], r.m[i], 1e-12);
    }
}

TEST(AxisAngle, NegativeAngleNormalizesToFlippedAxis)
{
    const AxisAngle aa = rotation_to_axis_angle(axis_angle_to_rotation({1, 0, 0}, -0.5));
    EXPECT_NEAR(aa.angle, 0.5, 1e-14);
    EXPECT_NEAR(aa.axis.x, -1.0, 1e-14);
}

TEST(AxisAngle, HalfTurn)
{
    const Vec3 axis = Vec3{1, 2, 2} * (1.0 / 3.0);
    const AxisAngle aa = rotation_to_axis_angle(axis_angle_to_rotation(axis, std::numbers::pi));
    EXPECT_NEAR(aa.angle, std::numbers::pi, 1e-12);
    EXPECT_NEAR(std::abs(dot(aa.axis, axis)), 1.0, 1e-12);
}
