#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "cullkit/geometry.hpp"
#include "cullkit/linalg.hpp"

namespace cullkit {

struct Correspondence {
    Vec3 object_point;
    Pixel2 image_point;
};

struct PnPSolution {
    Pose pose;
    double reprojection_rms = 0.0;
    int beta_case_used = 1;
    /// RMS of every beta case tried (index N-1); +inf for cases that failed or were skipped.
    std::array<double, 3> case_rms{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                                   std::numeric_limits<double>::infinity()};
};

/// Pairs object keypoints with image keypoints index by index.
inline std::vector<Correspondence> make_correspondences(std::span<const Vec3> object_points,
                                                        std::span<const Pixel2> image_points)
{
    if (object_points.size() != image_points.size())
        throw Error(ErrorCode::LengthMismatch, "object and image keypoint counts differ");
    std::vector<Correspondence> out(object_points.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {object_points[i], image_points[i]};
    return out;
}

inline double reprojection_rms(std::span<const Correspondence> corrs, const CameraIntrinsics& k, const Pose& pose)
{
    if (corrs.empty()) throw Error(ErrorCode::InvalidArgument, "no correspondences");
    double sum = 0.0;
    for (const Correspondence& c : corrs) {
        const Pixel2 p = project_point(k, pose, c.object_point);
        const double dx = p.x - c.image_point.x;
        const double dy = p.y - c.image_point.y;
        sum += dx * dx + dy * dy;
    }
    return std::sqrt(sum / static_cast<double>(corrs.size()));
}

namespace detail {

struct Spread {
    Vec3 centroid;
    std::array<double, 3> stddev{}; // ascending
    std::array<Vec3, 3> axes{};     // unit principal axes, same order
};

inline Spread principal_spread(std::span<const Vec3> pts)
{
    Spread s;
    for (const Vec3& p : pts) s.centroid += p;
    s.centroid *= 1.0 / static_cast<double>(pts.size());
    linalg::Matrix cov(3, 3);
    for (const Vec3& p : pts) {
        const Vec3 d = p - s.centroid;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) cov(i, j) += d[i] * d[j];
    }
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) cov(i, j) /= static_cast<double>(pts.size());
    const linalg::SymmetricEigen eig = linalg::jacobi_eigen(cov);
    for (std::size_t i = 0; i < 3; ++i) {
        s.stddev[i] = std::sqrt(std::max(eig.values[i], 0.0));
        s.axes[i] = {eig.vectors(0, i), eig.vectors(1, i), eig.vectors(2, i)};
    }
    return s;
}

inline Mat3 quaternion_to_rotation(double w, double x, double y, double z)
{
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    w /= n;
    x /= n;
    y /= n;
    z /= n;
    return {{w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y),
             2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x),
             2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z}};
}

/// Rotation maximizing trace(R S) where S = sum src_i dst_i^T.
inline Mat3 rotation_from_cross_covariance(const Mat3& s)
{
    const double sxx = s(0, 0), sxy = s(0, 1), sxz = s(0, 2);
    const double syx = s(1, 0), syy = s(1, 1), syz = s(1, 2);
    const double szx = s(2, 0), szy = s(2, 1), szz = s(2, 2);
    linalg::Matrix n(4, 4);
    n(0, 0) = sxx + syy + szz;
    n(0, 1) = syz - szy;
    n(0, 2) = szx - sxz;
    n(0, 3) = sxy - syx;
    n(1, 1) = sxx - syy - szz;
    n(1, 2) = sxy + syx;
    n(1, 3) = szx + sxz;
    n(2, 2) = -sxx + syy - szz;
    n(2, 3) = syz + szy;
    n(3, 3) = -sxx - syy + szz;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < i; ++j) n(i, j) = n(j, i);
    const linalg::SymmetricEigen eig = linalg::jacobi_eigen(n, 1e-15);
    return quaternion_to_rotation(eig.vectors(0, 3), eig.vectors(1, 3), eig.vectors(2, 3), eig.vectors(3, 3));
}

} // namespace detail

/// Rotation nearest to M in Frobenius norm (for det M > 0).
inline Mat3 nearest_rotation(const Mat3& m) { return detail::rotation_from_cross_covariance(m.transposed()); }

/// Least-squares rigid transform with R * src_i + t ~ dst_i (quaternion
/// absolute orientation). det R = +1 by construction.
inline Pose horn_align(std::span<const Vec3> src, std::span<const Vec3> dst)
{
    if (src.size() != dst.size()) throw Error(ErrorCode::LengthMismatch, "horn_align: point counts differ");
    if (src.size() < 3) throw Error(ErrorCode::DegenerateConfiguration, "horn_align needs at least 3 points");
    const detail::Spread spread = detail::principal_spread(src);
    const double largest = spread.stddev[2];
    if (!(largest > 0.0) || spread.stddev[1] < 1e-8 * largest)
        throw Error(ErrorCode::DegenerateConfiguration, "horn_align: source points are collinear or coincident");

    Vec3 mu_dst{};
    for (const Vec3& d : dst) mu_dst += d;
    mu_dst *= 1.0 / static_cast<double>(dst.size());
    const Vec3 mu_src = spread.centroid;

    Mat3 s = Mat3::zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Vec3 a = src[i] - mu_src;
        const Vec3 b = dst[i] - mu_dst;
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 3; ++c) s(r, c) += a[r] * b[c];
    }
    Pose pose;
    pose.rotation = detail::rotation_from_cross_covariance(s);
    pose.translation = mu_dst - pose.rotation * mu_src;
    return pose;
}

struct EpnpOptions {
    int max_gauss_newton_iterations = 10;
    double gauss_newton_step_tol = 1e-12;
    /// Smallest-to-largest principal spread ratio below which the planar variant is used.
    double planar_ratio = 1e-8;
};

namespace detail {

struct EpnpSystem {
    std::size_t control_count = 4;          // 4, or 3 for planar data
    std::vector<Vec3> control_world;       // control_count points
    std::vector<double> alphas;            // n * control_count barycentric weights
    std::vector<std::vector<double>> null; // nullspace basis, each of size 3 * control_count
};

inline Vec3 control_point(const std::vector<double>& flat, std::size_t j)
{
    return {flat[3 * j], flat[3 * j + 1], flat[3 * j + 2]};
}

struct BetaProblem {
    std::vector<std::array<std::size_t, 2>> pairs;
    std::vector<double> rho;                  // squared world distances per pair
    std::vector<std::vector<Vec3>> diffs;     // diffs[p][k] = null_k[a] - null_k[b]
};

inline BetaProblem make_beta_problem(const EpnpSystem& sys, std::size_t basis_count)
{
    BetaProblem bp;
    for (std::size_t a = 0; a < sys.control_count; ++a)
        for (std::size_t b = a + 1; b < sys.control_count; ++b) bp.pairs.push_back({a, b});
    for (const auto& [a, b] : bp.pairs) {
        const Vec3 d = sys.control_world[a] - sys.control_world[b];
        bp.rho.push_back(dot(d, d));
        std::vector<Vec3> row;
        for (std::size_t k = 0; k < basis_count; ++k)
            row.push_back(control_point(sys.null[k], a) - control_point(sys.null[k], b));
        bp.diffs.push_back(std::move(row));
    }
    return bp;
}

inline double beta_cost(const BetaProblem& bp, const std::vector<double>& beta)
{
    double cost = 0.0;
    for (std::size_t p = 0; p < bp.pairs.size(); ++p) {
        Vec3 v{};
        for (std::size_t k = 0; k < beta.size(); ++k) v += bp.diffs[p][k] * beta[k];
        const double r = dot(v, v) - bp.rho[p];
        cost += r * r;
    }
    return cost;
}

inline void refine_betas(const BetaProblem& bp, std::vector<double>& beta, const EpnpOptions& opt)
{
    double cost = beta_cost(bp, beta);
    for (int it = 0; it < opt.max_gauss_newton_iterations; ++it) {
        linalg::Matrix jac(bp.pairs.size(), beta.size());
        std::vector<double> rhs(bp.pairs.size());
        for (std::size_t p = 0; p < bp.pairs.size(); ++p) {
            Vec3 v{};
            for (std::size_t k = 0; k < beta.size(); ++k) v += bp.diffs[p][k] * beta[k];
            for (std::size_t k = 0; k < beta.size(); ++k) jac(p, k) = 2.0 * dot(v, bp.diffs[p][k]);
            rhs[p] = bp.rho[p] - dot(v, v);
        }
        const auto step = linalg::solve_least_squares(std::move(jac), std::move(rhs));
        if (!step) return;
        // Backtrack on the Gauss-Newton direction until the cost does not increase.
        std::vector<double> trial = beta;
        double step_norm = 0.0;
        double trial_cost = cost;
        double scale = 1.0;
        for (int halving = 0; halving < 30; ++halving, scale *= 0.5) {
            step_norm = 0.0;
            for (std::size_t k = 0; k < beta.size(); ++k) {
                trial[k] = beta[k] + scale * (*step)[k];
                step_norm += scale * scale * (*step)[k] * (*step)[k];
            }
            trial_cost = beta_cost(bp, trial);
            if (trial_cost <= cost) break;
        }
        if (!(trial_cost <= cost)) return;
        beta = std::move(trial);
        cost = trial_cost;
        if (std::sqrt(step_norm) < opt.gauss_newton_step_tol) return;
    }
}

/// Linearized initial betas for case 1..3. Case 1 solves for
/// (b00, b01, b02, b03), case 2 for (b00, b01, b11), case 3 for
/// (b00, b01, b11, b02, b12), where bkl = beta_k beta_l. Returns empty when
/// the case does not fit the basis or the system is rank deficient.
inline std::vector<double> initial_betas(const BetaProblem& bp, std::size_t n_case, std::size_t basis_count)
{
    using Product = std::array<std::size_t, 2>;
    std::vector<Product> products;
    if (n_case == 1) {
        for (std::size_t l = 0; l < basis_count; ++l) products.push_back({0, l});
    } else if (n_case == 2) {
        products = {{0, 0}, {0, 1}, {1, 1}};
    } else {
        products = {{0, 0}, {0, 1}, {1, 1}, {0, 2}, {1, 2}};
    }
    const std::size_t pairs = bp.pairs.size();
    if (products.size() > pairs) return {};
    for (const auto& [k, l] : products)
        if (l >= basis_count) return {};
    linalg::Matrix lmat(pairs, products.size());
    for (std::size_t p = 0; p < pairs; ++p)
        for (std::size_t u = 0; u < products.size(); ++u) {
            const auto [k, l] = products[u];
            lmat(p, u) = (k == l ? 1.0 : 2.0) * dot(bp.diffs[p][k], bp.diffs[p][l]);
        }
    const auto b = linalg::solve_least_squares(std::move(lmat), bp.rho);
    if (!b) return {};

    std::vector<double> beta(basis_count, 0.0);
    const double b00 = (*b)[0];
    if (n_case == 1) {
        beta[0] = std::sqrt(std::abs(b00));
        if (beta[0] == 0.0) return {};
        const double sign = b00 < 0.0 ? -1.0 : 1.0;
        for (std::size_t l = 1; l < basis_count; ++l) beta[l] = sign * (*b)[l] / beta[0];
        return beta;
    }
    const double b01 = (*b)[1];
    const double b11 = (*b)[2];
    if (b00 < 0.0) {
        beta[0] = std::sqrt(-b00);
        beta[1] = b11 < 0.0 ? std::sqrt(-b11) : 0.0;
    } else {
        beta[0] = std::sqrt(b00);
        beta[1] = b11 > 0.0 ? std::sqrt(b11) : 0.0;
    }
    if (b01 < 0.0) beta[0] = -beta[0];
    if (n_case == 3) {
        if (beta[0] == 0.0) return {};
        beta[2] = (*b)[3] / beta[0];
    }
    return beta;
}

inline std::vector<double> single_vector_betas(const BetaProblem& bp, std::size_t which, std::size_t basis_count)
{
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < bp.pairs.size(); ++p) {
        const double l = dot(bp.diffs[p][which], bp.diffs[p][which]);
        num += l * bp.rho[p];
        den += l * l;
    }
    if (!(den > 0.0)) return {};
    std::vector<double> beta(basis_count, 0.0);
    beta[which] = std::sqrt(std::max(num / den, 0.0));
    return beta;
}

} // namespace detail

/// Efficient PnP: pose from n >= 4 2D-3D correspondences through a
/// control-point parameterization, beta cases N = 1..3, Gauss-Newton on the
/// control-point distance constraints and closed-form alignment. Planar object
/// points switch to three control points.
inline PnPSolution epnp_solve(std::span<const Correspondence> corrs, const CameraIntrinsics& k,
                              const EpnpOptions& opt = {})
{
    const std::size_t n = corrs.size();
    if (n < 4) throw Error(ErrorCode::InvalidArgument, "epnp_solve needs at least 4 correspondences");
    std::vector<Vec3> world(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Correspondence& c = corrs[i];
        if (!is_finite(c.object_point) || !std::isfinite(c.image_point.x) || !std::isfinite(c.image_point.y))
            throw Error(ErrorCode::InvalidArgument, "correspondence is not finite");
        world[i] = c.object_point;
    }

    const detail::Spread spread = detail::principal_spread(world);
    const double largest = spread.stddev[2];
    if (!(largest > 0.0)) throw Error(ErrorCode::DegenerateConfiguration, "object points are coincident");
    if (spread.stddev[1] < opt.planar_ratio * largest)
        throw Error(ErrorCode::DegenerateConfiguration, "object points are collinear");
    const bool planar = spread.stddev[0] < opt.planar_ratio * largest;

    detail::EpnpSystem sys;
    sys.control_count = planar ? 3 : 4;
    const std::size_t axes_used = sys.control_count - 1;
    // Axes from largest spread down.
    std::array<std::size_t, 3> axis_index{2, 1, 0};
    sys.control_world.push_back(spread.centroid);
    for (std::size_t a = 0; a < axes_used; ++a) {
        const std::size_t ai = axis_index[a];
        sys.control_world.push_back(spread.centroid + spread.axes[ai] * spread.stddev[ai]);
    }
    sys.alphas.resize(n * sys.control_count);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 d = world[i] - spread.centroid;
        double rest = 1.0;
        for (std::size_t a = 0; a < axes_used; ++a) {
            const std::size_t ai = axis_index[a];
            const double w = dot(d, spread.axes[ai]) / spread.stddev[ai];
            sys.alphas[i * sys.control_count + a + 1] = w;
            rest -= w;
        }
        sys.alphas[i * sys.control_count] = rest;
    }

    const std::size_t unknowns = 3 * sys.control_count;
    linalg::Matrix m(2 * n, unknowns);
    for (std::size_t i = 0; i < n; ++i) {
        const Pixel2 uv = corrs[i].image_point;
        for (std::size_t j = 0; j < sys.control_count; ++j) {
            const double a = sys.alphas[i * sys.control_count + j];
            m(2 * i, 3 * j) = a * k.fx;
            m(2 * i, 3 * j + 2) = a * (k.cx - uv.x);
            m(2 * i + 1, 3 * j + 1) = a * k.fy;
            m(2 * i + 1, 3 * j + 2) = a * (k.cy - uv.y);
        }
    }
    const linalg::SymmetricEigen eig = linalg::jacobi_eigen(m.gram());
    const std::size_t basis_count = planar ? 3 : 4;
    for (std::size_t b = 0; b < basis_count; ++b) {
        std::vector<double> v(unknowns);
        for (std::size_t r = 0; r < unknowns; ++r) v[r] = eig.vectors(r, b);
        sys.null.push_back(std::move(v));
    }
    const detail::BetaProblem bp = detail::make_beta_problem(sys, basis_count);

    PnPSolution best;
    bool found = false;
    const std::size_t max_case = 3;
    // Starts: the three linearized cases, then one start per single basis
    // vector (reported as case 1). The single-vector starts rescue minimal
    // four-point sets where the linearizations land in a poor basin.
    for (std::size_t start = 0; start < max_case + basis_count; ++start) {
        const std::size_t n_case = start < max_case ? start + 1 : 1;
        std::vector<double> beta = start < max_case ? detail::initial_betas(bp, n_case, basis_count)
                                                    : detail::single_vector_betas(bp, start - max_case, basis_count);
        if (beta.empty()) continue;
        detail::refine_betas(bp, beta, opt);

        std::vector<double> cam(unknowns, 0.0);
        for (std::size_t b = 0; b < basis_count; ++b)
            for (std::size_t r = 0; r < unknowns; ++r) cam[r] += beta[b] * sys.null[b][r];
        double mean_depth = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < sys.control_count; ++j)
                mean_depth += sys.alphas[i * sys.control_count + j] * cam[3 * j + 2];
        if (!(std::abs(mean_depth) > 0.0) || !std::isfinite(mean_depth)) continue;
        if (mean_depth < 0.0)
            for (double& v : cam) v = -v;

        std::vector<Vec3> cam_ctrl(sys.control_count);
        for (std::size_t j = 0; j < sys.control_count; ++j) cam_ctrl[j] = detail::control_point(cam, j);
        Pose pose;
        try {
            pose = horn_align(sys.control_world, cam_ctrl);
        } catch (const Error&) {
            continue;
        }
        double rms = std::numeric_limits<double>::infinity();
        try {
            rms = reprojection_rms(corrs, k, pose);
        } catch (const Error&) {
            continue;
        }
        if (!std::isfinite(rms)) continue;
        best.case_rms[n_case - 1] = std::min(best.case_rms[n_case - 1], rms);
        if (!found || rms < best.reprojection_rms) {
            best.pose = pose;
            best.reprojection_rms = rms;
            best.beta_case_used = static_cast<int>(n_case);
            found = true;
        }
    }
    if (!found) throw Error(ErrorCode::BehindCamera, "no beta case yields points in front of the camera");
    return best;
}

} // namespace cullkit
