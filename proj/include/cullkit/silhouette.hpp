#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cullkit/geometry.hpp"

namespace cullkit {

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits; // row-major, 0 or 1

    BinaryMask() = default;
    BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

    bool at(int x, int y) const noexcept { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v = true) noexcept { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width && y < height; }

    std::size_t count() const noexcept
    {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }
    bool empty() const noexcept { return count() == 0; }
    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// 8-bit interleaved RGB raster.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, 0) {}

    std::uint8_t* px(int x, int y) noexcept { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t* px(int x, int y) const noexcept { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Integer rectangle with inclusive bounds.
struct Rect {
    int x0 = 0;
    int y0 = 0;
    int x1 = -1;
    int y1 = -1;

    int width() const noexcept { return x1 - x0 + 1; }
    int height() const noexcept { return y1 - y0 + 1; }
    long long area() const noexcept
    {
        return x1 < x0 || y1 < y0 ? 0 : static_cast<long long>(width()) * static_cast<long long>(height());
    }
    friend bool operator==(const Rect&, const Rect&) = default;
};

inline double rect_iou(const Rect& a, const Rect& b) noexcept
{
    const Rect inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
    const long long i = inter.area();
    const long long u = a.area() + b.area() - i;
    return u > 0 ? static_cast<double>(i) / static_cast<double>(u) : 0.0;
}

inline double mask_iou(const BinaryMask& a, const BinaryMask& b)
{
    if (a.width != b.width || a.height != b.height) throw Error(ErrorCode::DimensionMismatch, "mask sizes differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] & b.bits[i];
        uni += a.bits[i] | b.bits[i];
    }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

enum class RenderMode { TriangleFill, VertexSplat };

namespace detail {

inline constexpr int kSubpixelBits = 8;
inline constexpr double kSubpixelScale = 1 << kSubpixelBits;
// Beyond this many pixels from the origin the fixed-point products could
// overflow 64 bits; such faces are rasterized with floating-point edges.
inline constexpr double kFixedPointLimit = 1 << 20;

template <class T>
T edge(T ax, T ay, T bx, T by, T px, T py) noexcept
{
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

template <class T>
bool is_top_left(T dx, T dy) noexcept
{
    return (dy == 0 && dx > 0) || dy < 0;
}

// Samples pixel (i, j) at its centre, the integer coordinate (i, j). Edges
// shared by two faces are covered exactly once.
template <class T>
void fill_triangle(BinaryMask& mask, std::array<T, 3> xs, std::array<T, 3> ys, T unit, const std::array<Pixel2, 3>& p)
{
    T area = edge(xs[0], ys[0], xs[1], ys[1], xs[2], ys[2]);
    if (area == 0) return;
    if (area < 0) {
        std::swap(xs[1], xs[2]);
        std::swap(ys[1], ys[2]);
    }
    double minx = std::min({p[0].x, p[1].x, p[2].x}), maxx = std::max({p[0].x, p[1].x, p[2].x});
    double miny = std::min({p[0].y, p[1].y, p[2].y}), maxy = std::max({p[0].y, p[1].y, p[2].y});
    const int x_lo = static_cast<int>(std::max(0.0, std::floor(minx)));
    const int x_hi = static_cast<int>(std::min(mask.width - 1.0, std::ceil(maxx)));
    const int y_lo = static_cast<int>(std::max(0.0, std::floor(miny)));
    const int y_hi = static_cast<int>(std::min(mask.height - 1.0, std::ceil(maxy)));
    if (x_lo > x_hi || y_lo > y_hi) return;

    std::array<bool, 3> tl{};
    for (int e = 0; e < 3; ++e) {
        const int n = (e + 1) % 3;
        tl[e] = is_top_left(xs[n] - xs[e], ys[n] - ys[e]);
    }
    for (int y = y_lo; y <= y_hi; ++y) {
        const T py = static_cast<T>(y) * unit;
        for (int x = x_lo; x <= x_hi; ++x) {
            const T px = static_cast<T>(x) * unit;
            bool inside = true;
            for (int e = 0; e < 3 && inside; ++e) {
                const int n = (e + 1) % 3;
                const T w = edge(xs[e], ys[e], xs[n], ys[n], px, py);
                inside = w > 0 || (w == 0 && tl[e]);
            }
            if (inside) mask.set(x, y);
        }
    }
}

} // namespace detail

/// Binary silhouette of the mesh under a pose at the camera's image size.
inline BinaryMask render_mask(const MeshModel& mesh, const Pose& pose, const CameraIntrinsics& k,
                              RenderMode mode = RenderMode::TriangleFill)
{
    k.validate();
    const auto verts = mesh.vertices();
    std::vector<Pixel2> proj(verts.size());
    std::vector<std::uint8_t> visible(verts.size(), 0);
    std::size_t n_visible = 0;
    for (std::size_t i = 0; i < verts.size(); ++i) {
        const Vec3 xc = pose.apply(verts[i]);
        if (xc.z > kMinDepth) {
            proj[i] = project_camera_point(k, xc);
            visible[i] = 1;
            ++n_visible;
        }
    }
    if (2 * n_visible < verts.size() || n_visible == 0)
        throw Error(ErrorCode::AllVerticesBehindCamera, "fewer than half of the mesh vertices are in front of the camera");

    BinaryMask mask(k.image_width, k.image_height);
    if (mode == RenderMode::VertexSplat) {
        BinaryMask points(k.image_width, k.image_height);
        for (std::size_t i = 0; i < verts.size(); ++i) {
            if (!visible[i]) continue;
            const double rx = std::round(proj[i].x), ry = std::round(proj[i].y);
            if (rx < 0 || ry < 0 || rx >= k.image_width || ry >= k.image_height) continue;
            points.set(static_cast<int>(rx), static_cast<int>(ry));
        }
        for (int y = 0; y < points.height; ++y)
            for (int x = 0; x < points.width; ++x) {
                if (!points.at(x, y)) continue;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                        if (mask.contains(x + dx, y + dy)) mask.set(x + dx, y + dy);
            }
        return mask;
    }

    for (const Face& f : mesh.faces()) {
        if (!visible[f[0]] || !visible[f[1]] || !visible[f[2]]) continue;
        const std::array<Pixel2, 3> p{proj[f[0]], proj[f[1]], proj[f[2]]};
        bool fixed_ok = true;
        for (const Pixel2& q : p)
            if (!(std::abs(q.x) < detail::kFixedPointLimit && std::abs(q.y) < detail::kFixedPointLimit)) fixed_ok = false;
        if (fixed_ok) {
            std::array<std::int64_t, 3> xs{}, ys{};
            for (int i = 0; i < 3; ++i) {
                xs[i] = std::llround(p[i].x * detail::kSubpixelScale);
                ys[i] = std::llround(p[i].y * detail::kSubpixelScale);
            }
            detail::fill_triangle<std::int64_t>(mask, xs, ys, std::int64_t{1} << detail::kSubpixelBits, p);
        } else {
            bool finite = true;
            for (const Pixel2& q : p) finite = finite && std::isfinite(q.x) && std::isfinite(q.y);
            if (!finite) continue;
            detail::fill_triangle<double>(mask, {p[0].x, p[1].x, p[2].x}, {p[0].y, p[1].y, p[2].y}, 1.0, p);
        }
    }
    return mask;
}

inline Rect tight_bbox(const BinaryMask& mask)
{
    Rect r{mask.width, mask.height, -1, -1};
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) {
                r.x0 = std::min(r.x0, x);
                r.y0 = std::min(r.y0, y);
                r.x1 = std::max(r.x1, x);
                r.y1 = std::max(r.y1, y);
            }
    if (r.x1 < 0) throw Error(ErrorCode::EmptyMask, "mask has no foreground pixels");
    return r;
}

inline constexpr int kPatchSize = 112;

/// Scorer input: RGB crop plus mask channel, both kPatchSize square.
struct Patch4 {
    std::vector<std::uint8_t> rgb;  // kPatchSize*kPatchSize*3
    std::vector<std::uint8_t> mask; // kPatchSize*kPatchSize, 0 or 1
    Rect source_bbox;

    /// Interleaved RGBA with alpha 0/255 from the mask.
    std::vector<std::uint8_t> rgba() const
    {
        std::vector<std::uint8_t> out(static_cast<std::size_t>(kPatchSize) * kPatchSize * 4);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            out[4 * i] = rgb[3 * i];
            out[4 * i + 1] = rgb[3 * i + 1];
            out[4 * i + 2] = rgb[3 * i + 2];
            out[4 * i + 3] = mask[i] ? 255 : 0;
        }
        return out;
    }
};

struct PatchOptions {
    bool mask_rgb = false; // zero RGB outside the mask before resizing
};

/// Crops image and mask to the mask's tight bbox, zero-pads the shorter side
/// symmetrically (extra column/row goes right/bottom), and resamples to
/// kPatchSize: bilinear for RGB, nearest for the mask. Sample d of the output
/// reads source coordinate (d + 0.5) * S / kPatchSize - 0.5.
inline Patch4 assemble_patch(const RgbImage& image, const BinaryMask& mask, const PatchOptions& options = {})
{
    if (image.width != mask.width || image.height != mask.height)
        throw Error(ErrorCode::DimensionMismatch, "image and mask sizes differ");
    const Rect box = tight_bbox(mask);
    const int w = box.width(), h = box.height();
    const int s = std::max(w, h);
    const int ox = (s - w) / 2, oy = (s - h) / 2;

    std::vector<std::uint8_t> sq_rgb(static_cast<std::size_t>(s) * s * 3, 0);
    std::vector<std::uint8_t> sq_mask(static_cast<std::size_t>(s) * s, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool m = mask.at(box.x0 + x, box.y0 + y);
            const std::size_t di = static_cast<std::size_t>(y + oy) * s + (x + ox);
            sq_mask[di] = m ? 1 : 0;
            if (options.mask_rgb && !m) continue;
            const std::uint8_t* src = image.px(box.x0 + x, box.y0 + y);
            std::copy(src, src + 3, &sq_rgb[di * 3]);
        }

    Patch4 patch;
    patch.source_bbox = box;
    patch.rgb.assign(static_cast<std::size_t>(kPatchSize) * kPatchSize * 3, 0);
    patch.mask.assign(static_cast<std::size_t>(kPatchSize) * kPatchSize, 0);
    const double ratio = static_cast<double>(s) / kPatchSize;

    std::array<int, kPatchSize> lo{}, hi{}, nearest{};
    std::array<double, kPatchSize> frac{};
    for (int d = 0; d < kPatchSize; ++d) {
        const double src = std::clamp((d + 0.5) * ratio - 0.5, 0.0, s - 1.0);
        lo[d] = static_cast<int>(std::floor(src));
        hi[d] = std::min(lo[d] + 1, s - 1);
        frac[d] = src - lo[d];
        nearest[d] = std::min(static_cast<int>(std::floor((d + 0.5) * ratio)), s - 1);
    }
    for (int y = 0; y < kPatchSize; ++y)
        for (int x = 0; x < kPatchSize; ++x) {
            const std::size_t o = static_cast<std::size_t>(y) * kPatchSize + x;
            patch.mask[o] = sq_mask[static_cast<std::size_t>(nearest[y]) * s + nearest[x]];
            const double fx = frac[x], fy = frac[y];
            for (int c = 0; c < 3; ++c) {
                auto at = [&](int yy, int xx) { return static_cast<double>(sq_rgb[(static_cast<std::size_t>(yy) * s + xx) * 3 + c]); };
                const double top = at(lo[y], lo[x]) * (1 - fx) + at(lo[y], hi[x]) * fx;
                const double bot = at(hi[y], lo[x]) * (1 - fx) + at(hi[y], hi[x]) * fx;
                const double v = top * (1 - fy) + bot * fy;
                patch.rgb[o * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    return patch;
}

} // namespace cullkit
