#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "cullkit/error.hpp"

namespace cullkit {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3& operator+=(const Vec3& o) noexcept { x += o.x; y += o.y; z += o.z; return *this; }
    constexpr Vec3& operator-=(const Vec3& o) noexcept { x -= o.x; y -= o.y; z -= o.z; return *this; }
    constexpr Vec3& operator*=(double s) noexcept { x *= s; y *= s; z *= s; return *this; }
    constexpr double operator[](std::size_t i) const noexcept { return i == 0 ? x : (i == 1 ? y : z); }
    friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr Vec3 operator+(Vec3 a, const Vec3& b) noexcept { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) noexcept { return a -= b; }
constexpr Vec3 operator-(const Vec3& a) noexcept { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(Vec3 a, double s) noexcept { return a *= s; }
constexpr Vec3 operator*(double s, Vec3 a) noexcept { return a *= s; }
constexpr double dot(const Vec3& a, const Vec3& b) noexcept { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) noexcept
{
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) noexcept { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) noexcept { return norm(a - b); }
inline bool is_finite(const Vec3& a) noexcept
{
    return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// Image-plane point in pixels; x to the right, y down.
struct Pixel2 {
    double x = 0.0;
    double y = 0.0;
    friend constexpr bool operator==(const Pixel2&, const Pixel2&) = default;
};

inline double distance(const Pixel2& a, const Pixel2& b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

/// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static constexpr Mat3 identity() noexcept { return {}; }
    static constexpr Mat3 zero() noexcept { return {{0, 0, 0, 0, 0, 0, 0, 0, 0}}; }

    constexpr double& operator()(std::size_t r, std::size_t c) noexcept { return m[3 * r + c]; }
    constexpr double operator()(std::size_t r, std::size_t c) const noexcept { return m[3 * r + c]; }

    constexpr Vec3 row(std::size_t r) const noexcept { return {m[3 * r], m[3 * r + 1], m[3 * r + 2]}; }
    constexpr Vec3 col(std::size_t c) const noexcept { return {m[c], m[3 + c], m[6 + c]}; }

    constexpr Mat3 transposed() const noexcept
    {
        return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
    }

    constexpr double determinant() const noexcept
    {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    friend constexpr bool operator==(const Mat3&, const Mat3&) = default;
};

constexpr Vec3 operator*(const Mat3& a, const Vec3& v) noexcept
{
    return {a.m[0] * v.x + a.m[1] * v.y + a.m[2] * v.z, a.m[3] * v.x + a.m[4] * v.y + a.m[5] * v.z,
            a.m[6] * v.x + a.m[7] * v.y + a.m[8] * v.z};
}

constexpr Mat3 operator*(const Mat3& a, const Mat3& b) noexcept
{
    Mat3 out = Mat3::zero();
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t k = 0; k < 3; ++k) out(r, c) += a(r, k) * b(k, c);
    return out;
}

/// Largest absolute entry of R^T R - I.
inline double orthonormality_error(const Mat3& r) noexcept
{
    const Mat3 g = r.transposed() * r;
    double err = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) err = std::max(err, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return err;
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) noexcept
{
    for (double v : r.m)
        if (!std::isfinite(v)) return false;
    return orthonormality_error(r) <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

/// Rigid object-to-camera transform: X_cam = R * X_obj + t.
struct Pose {
    Mat3 rotation = Mat3::identity();
    Vec3 translation{};

    Vec3 apply(const Vec3& x) const noexcept { return rotation * x + translation; }

    /// (this ∘ inner)(X) == this->apply(inner.apply(X)).
    Pose compose(const Pose& inner) const noexcept
    {
        return {rotation * inner.rotation, rotation * inner.translation + translation};
    }

    Pose inverse() const noexcept
    {
        const Mat3 rt = rotation.transposed();
        return {rt, -(rt * translation)};
    }

    bool is_valid(double tol = 1e-9) const noexcept { return is_rotation(rotation, tol) && is_finite(translation); }
};

/// Pinhole camera with zero skew and no distortion.
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int image_width = 0;
    int image_height = 0;

    void validate() const
    {
        if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy))
            throw Error(ErrorCode::InvalidArgument, "focal lengths must be positive and finite");
        if (image_width <= 0 || image_height <= 0)
            throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
        if (!(cx >= 0.0 && cx < image_width && cy >= 0.0 && cy < image_height))
            throw Error(ErrorCode::InvalidArgument, "principal point must lie inside the image");
    }

    static CameraIntrinsics make(double fx, double fy, double cx, double cy, int width, int height)
    {
        CameraIntrinsics k{fx, fy, cx, cy, width, height};
        k.validate();
        return k;
    }
};

inline constexpr double kMinDepth = 1e-12;

inline Pixel2 project_camera_point(const CameraIntrinsics& k, const Vec3& xc)
{
    if (!(xc.z > kMinDepth)) throw Error(ErrorCode::NonPositiveDepth, "camera-frame depth must be positive");
    return {k.fx * xc.x / xc.z + k.cx, k.fy * xc.y / xc.z + k.cy};
}

/// K (R X + t) with perspective division; no clamping to the image.
inline Pixel2 project_point(const CameraIntrinsics& k, const Pose& pose, const Vec3& x)
{
    return project_camera_point(k, pose.apply(x));
}

// ---------------------------------------------------------------------------
// Rotations

inline Mat3 skew(const Vec3& v) noexcept { return {{0, -v.z, v.y, v.z, 0, -v.x, -v.y, v.x, 0}}; }

/// Rodrigues' formula. The axis need not be unit length.
inline Mat3 axis_angle_to_rotation(const Vec3& axis, double angle)
{
    const double n = norm(axis);
    if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::ZeroAxis, "rotation axis must be nonzero");
    const Vec3 u = axis * (1.0 / n);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double t = 1.0 - c;
    return {{c + u.x * u.x * t, u.x * u.y * t - u.z * s, u.x * u.z * t + u.y * s,
             u.y * u.x * t + u.z * s, c + u.y * u.y * t, u.y * u.z * t - u.x * s,
             u.z * u.x * t - u.y * s, u.z * u.y * t + u.x * s, c + u.z * u.z * t}};
}

struct AxisAngle {
    Vec3 axis{0, 0, 1}; // unit length
    double angle = 0.0; // radians in [0, pi]
};

/// Inverse of axis_angle_to_rotation with the angle normalized to [0, pi].
/// At angle 0 the axis is reported as +z.
inline AxisAngle rotation_to_axis_angle(const Mat3& r)
{
    const double cos_a = std::clamp((r(0, 0) + r(1, 1) + r(2, 2) - 1.0) * 0.5, -1.0, 1.0);
    const Vec3 w{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)}; // 2 sin(a) u
    const double sin2 = norm(w);
    const double angle = std::atan2(0.5 * sin2, cos_a);
    if (sin2 > 1e-6) return {w * (1.0 / sin2), angle};
    if (cos_a > 0.0) {
        // Near identity: the first-order axis is still well defined when nonzero.
        if (sin2 > 0.0) return {w * (1.0 / sin2), angle};
        return {{0, 0, 1}, 0.0};
    }
    // Near pi: R + I = 2 u u^T (up to O(sin)); take the best-conditioned column.
    Mat3 b = r;
    for (std::size_t i = 0; i < 3; ++i) b(i, i) += 1.0;
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i)
        if (b(i, i) > b(best, best)) best = i;
    Vec3 u = b.col(best) * (1.0 / std::sqrt(std::max(2.0 * b(best, best), 1e-300)));
    u *= 1.0 / norm(u);
    // Resolve the sign with the (tiny) antisymmetric part so that small offsets from pi round-trip.
    if (dot(u, w) < 0.0) u = -u;
    return {u, angle};
}

/// Angle of R_a^T R_b in radians.
inline double rotation_angle_between(const Mat3& a, const Mat3& b)
{
    const Mat3 d = a.transposed() * b;
    const double cos_a = std::clamp((d(0, 0) + d(1, 1) + d(2, 2) - 1.0) * 0.5, -1.0, 1.0);
    const Vec3 w{d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)};
    return std::atan2(0.5 * norm(w), cos_a);
}

// ---------------------------------------------------------------------------
// Meshes

using Face = std::array<std::size_t, 3>;

inline double max_pairwise_distance(std::span<const Vec3> points) noexcept
{
    double best = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3 p = points[i];
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            const Vec3 d = p - points[j];
            best = std::max(best, dot(d, d));
        }
    }
    return std::sqrt(best);
}

/// Maximum pairwise vertex distance (exact pairwise scan).
inline double mesh_diameter(std::span<const Vec3> vertices)
{
    if (vertices.size() < 2) throw Error(ErrorCode::InvalidArgument, "diameter needs at least two vertices");
    return max_pairwise_distance(vertices);
}

/// Triangle mesh in object coordinates. Immutable after construction; the
/// diameter is computed once here.
class MeshModel {
public:
    MeshModel() = default;

    MeshModel(std::vector<Vec3> vertices, std::vector<Face> faces)
        : vertices_(std::move(vertices)), faces_(std::move(faces))
    {
        if (vertices_.empty()) throw Error(ErrorCode::InvalidArgument, "mesh has no vertices");
        for (const Vec3& v : vertices_)
            if (!is_finite(v)) throw Error(ErrorCode::InvalidArgument, "mesh vertex is not finite");
        for (const Face& f : faces_)
            for (std::size_t idx : f)
                if (idx >= vertices_.size())
                    throw Error(ErrorCode::InvalidArgument, "face index " + std::to_string(idx) + " out of range");
        diameter_ = vertices_.size() >= 2 ? max_pairwise_distance(vertices_) : 0.0;
    }

    std::span<const Vec3> vertices() const noexcept { return vertices_; }
    std::span<const Face> faces() const noexcept { return faces_; }
    std::size_t vertex_count() const noexcept { return vertices_.size(); }
    double diameter() const noexcept { return diameter_; }

private:
    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    double diameter_ = 0.0;
};

inline double mesh_diameter(const MeshModel& mesh) { return mesh_diameter(mesh.vertices()); }

struct BoundingBox3 {
    Vec3 min;
    Vec3 max;
};

inline BoundingBox3 bounding_box(std::span<const Vec3> pts)
{
    if (pts.empty()) throw Error(ErrorCode::InvalidArgument, "bounding box of empty point set");
    BoundingBox3 box{pts[0], pts[0]};
    for (const Vec3& p : pts) {
        box.min = {std::min(box.min.x, p.x), std::min(box.min.y, p.y), std::min(box.min.z, p.z)};
        box.max = {std::max(box.max.x, p.x), std::max(box.max.y, p.y), std::max(box.max.z, p.z)};
    }
    return box;
}

inline constexpr std::size_t kCuboidKeypointCount = 9;

/// The 8 corners of the mesh's axis-aligned bounding box followed by its
/// center. Corner i takes x-max when bit 0 of i is set, y-max for bit 1 and
/// z-max for bit 2.
inline std::array<Vec3, kCuboidKeypointCount> cuboid_keypoints(const MeshModel& mesh)
{
    const BoundingBox3 box = bounding_box(mesh.vertices());
    std::array<Vec3, kCuboidKeypointCount> out{};
    Vec3 sum{};
    for (std::size_t i = 0; i < 8; ++i) {
        out[i] = {(i & 1u) ? box.max.x : box.min.x, (i & 2u) ? box.max.y : box.min.y,
                  (i & 4u) ? box.max.z : box.min.z};
        sum += out[i];
    }
    out[8] = sum * (1.0 / 8.0);
    return out;
}

/// Closed axis-aligned box centered at the origin, each face split into an
/// n x n grid of quads (two triangles each). Shared edge vertices are merged.
inline MeshModel make_box_mesh(const Vec3& size, int subdivisions = 1)
{
    if (subdivisions < 1) throw Error(ErrorCode::InvalidArgument, "subdivisions must be >= 1");
    const int n = subdivisions;
    std::vector<Vec3> verts;
    std::vector<Face> faces;
    // Lattice indices (i,j,k) in [0,n]^3 restricted to the surface.
    std::vector<long> index((n + 1) * (n + 1) * (n + 1), -1);
    auto lattice = [&](int i, int j, int k) -> std::size_t {
        long& slot = index[(static_cast<std::size_t>(i) * (n + 1) + j) * (n + 1) + k];
        if (slot < 0) {
            slot = static_cast<long>(verts.size());
            verts.push_back({size.x * (static_cast<double>(i) / n - 0.5), size.y * (static_cast<double>(j) / n - 0.5),
                             size.z * (static_cast<double>(k) / n - 0.5)});
        }
        return static_cast<std::size_t>(slot);
    };
    // For each axis and each side, emit a grid of quads; winding points outwards.
    for (int axis = 0; axis < 3; ++axis) {
        for (int side = 0; side < 2; ++side) {
            for (int a = 0; a < n; ++a) {
                for (int b = 0; b < n; ++b) {
                    auto at = [&](int u, int v) {
                        std::array<int, 3> ijk{};
                        ijk[axis] = side * n;
                        ijk[(axis + 1) % 3] = u;
                        ijk[(axis + 2) % 3] = v;
                        return lattice(ijk[0], ijk[1], ijk[2]);
                    };
                    const std::size_t p00 = at(a, b), p10 = at(a + 1, b), p11 = at(a + 1, b + 1), p01 = at(a, b + 1);
                    if (side == 1) {
                        faces.push_back({p00, p10, p11});
                        faces.push_back({p00, p11, p01});
                    } else {
                        faces.push_back({p00, p11, p10});
                        faces.push_back({p00, p01, p11});
                    }
                }
            }
        }
    }
    return MeshModel(std::move(verts), std::move(faces));
}

/// UV ellipsoid centered at the origin.
inline MeshModel make_ellipsoid_mesh(const Vec3& radii, int rings = 12, int segments = 24)
{
    if (rings < 2 || segments < 3) throw Error(ErrorCode::InvalidArgument, "ellipsoid needs rings>=2, segments>=3");
    std::vector<Vec3> verts;
    std::vector<Face> faces;
    verts.push_back({0, 0, radii.z});
    for (int r = 1; r < rings; ++r) {
        const double theta = std::numbers::pi * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double phi = 2.0 * std::numbers::pi * s / segments;
            verts.push_back({radii.x * std::sin(theta) * std::cos(phi), radii.y * std::sin(theta) * std::sin(phi),
                             radii.z * std::cos(theta)});
        }
    }
    verts.push_back({0, 0, -radii.z});
    const std::size_t south = verts.size() - 1;
    auto ring_vertex = [&](int r, int s) { return 1 + static_cast<std::size_t>((r - 1) * segments + (s % segments)); };
    for (int s = 0; s < segments; ++s) faces.push_back({0, ring_vertex(1, s), ring_vertex(1, s + 1)});
    for (int r = 1; r < rings - 1; ++r) {
        for (int s = 0; s < segments; ++s) {
            faces.push_back({ring_vertex(r, s), ring_vertex(r + 1, s), ring_vertex(r + 1, s + 1)});
            faces.push_back({ring_vertex(r, s), ring_vertex(r + 1, s + 1), ring_vertex(r, s + 1)});
        }
    }
    for (int s = 0; s < segments; ++s) faces.push_back({south, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)});
    return MeshModel(std::move(verts), std::move(faces));
}

} // namespace cullkit
