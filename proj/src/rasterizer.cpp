#include "gaga/rasterizer.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace gaga {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

constexpr double kDetFloor = 1e-12;

struct Splat {
    double mean_x, mean_y;
    double conic_a, conic_b, conic_c;
    double opacity;
    double depth;
    double ext_x, ext_y;  // half extents of the cutoff ellipse in pixels
    int tile_x0, tile_y0, tile_x1, tile_y1;  // inclusive tile range
    bool visible;
};

Eigen::Matrix3d rotation_from(const double* q) {
    const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

// Screen-space footprint of every Gaussian; shared by forward and backward.
struct Projected {
    std::vector<Splat> splats;
    int tiles_x = 0, tiles_y = 0;
};

Projected project_all(const GaussianCloud& cloud, const Camera& camera, const RenderSettings& s) {
    Projected out;
    const int ts = s.tile_size;
    out.tiles_x = (camera.width + ts - 1) / ts;
    out.tiles_y = (camera.height + ts - 1) / ts;
    const std::size_t n = cloud.size();
    out.splats.resize(n);
    const Eigen::Matrix3d w = camera.world_to_camera_rotation();
    const Eigen::Vector3d c = camera.center();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        Splat& sp = out.splats[i];
        sp.visible = false;
        const Eigen::Vector3d p(cloud.positions[i * 3], cloud.positions[i * 3 + 1], cloud.positions[i * 3 + 2]);
        const Eigen::Vector3d t = w * (p - c);
        if (!(t.z() >= s.near_plane)) continue;
        const Eigen::Matrix3d r = rotation_from(&cloud.rotations[i * 4]);
        const Eigen::Vector3d sc(cloud.scales[i * 3], cloud.scales[i * 3 + 1], cloud.scales[i * 3 + 2]);
        const Eigen::Matrix3d m = r * sc.asDiagonal();
        const Eigen::Matrix3d sigma = m * m.transpose();
        Eigen::Matrix<double, 2, 3> j;
        const double iz = 1.0 / t.z();
        j << camera.fx * iz, 0.0, -camera.fx * t.x() * iz * iz,  //
            0.0, camera.fy * iz, -camera.fy * t.y() * iz * iz;
        const Eigen::Matrix<double, 2, 3> tw = j * w;
        const Eigen::Matrix2d cov = tw * sigma * tw.transpose();
        const double a = cov(0, 0) + s.low_pass, b = cov(0, 1), cc = cov(1, 1) + s.low_pass;
        const double det = std::max(a * cc - b * b, kDetFloor);
        sp.conic_a = cc / det;
        sp.conic_b = -b / det;
        sp.conic_c = a / det;
        sp.mean_x = camera.fx * t.x() * iz + camera.cx;
        sp.mean_y = camera.fy * t.y() * iz + camera.cy;
        sp.opacity = cloud.opacities[i];
        sp.depth = t.z();
        const double mid = 0.5 * (a + cc);
        const double lambda = mid + std::sqrt(std::max(0.1, mid * mid - det));
        const double radius = std::ceil(s.cutoff_sigma * std::sqrt(lambda));
        if (!std::isfinite(sp.mean_x) || !std::isfinite(sp.mean_y) || !std::isfinite(radius)) continue;
        // Tight box of the ellipse power <= cutoff^2, padded against rounding.
        const double conic_det = sp.conic_a * sp.conic_c - sp.conic_b * sp.conic_b;
        const double cut2 = s.cutoff_sigma * s.cutoff_sigma;
        sp.ext_x = radius;
        sp.ext_y = radius;
        if (conic_det > 0.0) {
            sp.ext_x = std::min(radius, std::sqrt(cut2 * sp.conic_c / conic_det) * (1.0 + 1e-9) + 1e-6);
            sp.ext_y = std::min(radius, std::sqrt(cut2 * sp.conic_a / conic_det) * (1.0 + 1e-9) + 1e-6);
        }
        if (sp.mean_x + sp.ext_x < 0 || sp.mean_x - sp.ext_x > camera.width - 1 || sp.mean_y + sp.ext_y < 0 ||
            sp.mean_y - sp.ext_y > camera.height - 1)
            continue;
        sp.tile_x0 = std::clamp(static_cast<int>(std::floor((sp.mean_x - sp.ext_x) / ts)), 0, out.tiles_x - 1);
        sp.tile_x1 = std::clamp(static_cast<int>(std::floor((sp.mean_x + sp.ext_x) / ts)), 0, out.tiles_x - 1);
        sp.tile_y0 = std::clamp(static_cast<int>(std::floor((sp.mean_y - sp.ext_y) / ts)), 0, out.tiles_y - 1);
        sp.tile_y1 = std::clamp(static_cast<int>(std::floor((sp.mean_y + sp.ext_y) / ts)), 0, out.tiles_y - 1);
        sp.visible = true;
    }
    return out;
}

// Per-tile lists of Gaussian ids in global front-to-back order.
struct Binning {
    std::vector<std::uint32_t> ids;      // all (tile, gaussian) pairs, tile-major
    std::vector<std::size_t> tile_start;  // tiles + 1 offsets into ids
};

std::vector<std::uint32_t> depth_order(const Projected& proj) {
    std::vector<std::uint32_t> order;
    order.reserve(proj.splats.size());
    for (std::size_t i = 0; i < proj.splats.size(); ++i)
        if (proj.splats[i].visible) order.push_back(static_cast<std::uint32_t>(i));
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return proj.splats[a].depth < proj.splats[b].depth; });
    return order;
}

Binning bin_tiles(const Projected& proj, const std::vector<std::uint32_t>& order) {
    const std::size_t tiles = static_cast<std::size_t>(proj.tiles_x) * static_cast<std::size_t>(proj.tiles_y);
    Binning b;
    b.tile_start.assign(tiles + 1, 0);
    for (const auto id : order) {
        const Splat& sp = proj.splats[id];
        for (int ty = sp.tile_y0; ty <= sp.tile_y1; ++ty)
            for (int tx = sp.tile_x0; tx <= sp.tile_x1; ++tx)
                ++b.tile_start[static_cast<std::size_t>(ty) * proj.tiles_x + tx + 1];
    }
    std::partial_sum(b.tile_start.begin(), b.tile_start.end(), b.tile_start.begin());
    b.ids.resize(b.tile_start.back());
    std::vector<std::size_t> cursor(b.tile_start.begin(), b.tile_start.end() - 1);
    for (const auto id : order) {
        const Splat& sp = proj.splats[id];
        for (int ty = sp.tile_y0; ty <= sp.tile_y1; ++ty)
            for (int tx = sp.tile_x0; tx <= sp.tile_x1; ++tx)
                b.ids[cursor[static_cast<std::size_t>(ty) * proj.tiles_x + tx]++] = id;
    }
    return b;
}

std::vector<double> background_of(const RenderSettings& s, int channels) {
    if (s.background.empty()) return std::vector<double>(static_cast<std::size_t>(channels), 0.0);
    if (s.background.size() != static_cast<std::size_t>(channels))
        throw std::invalid_argument("background has " + std::to_string(s.background.size()) + " channels, cloud has " +
                                    std::to_string(channels));
    return s.background;
}

void check_cloud(const GaussianCloud& cloud) {
    const std::size_t n = cloud.size();
    if (cloud.positions.size() != n * 3 || cloud.rotations.size() != n * 4 || cloud.scales.size() != n * 3 ||
        cloud.features.size() != n * static_cast<std::size_t>(cloud.channels))
        throw std::invalid_argument("GaussianCloud arrays have inconsistent lengths");
}

// Splats of one tile copied contiguously, plus per-pixel lists of the ones
// whose box covers that pixel. Each list stays front to back.
struct TileSplat {
    double mean_x, mean_y, conic_a, conic_b, conic_c, opacity;
    std::size_t entry;  // index into Binning::ids
};

struct TileWork {
    std::vector<TileSplat> splats;
    std::vector<std::uint32_t> items;
    std::vector<std::uint32_t> pixel_start;
    std::vector<std::array<int, 4>> boxes;

    void gather(const Projected& proj, const Binning& bins, std::size_t tile, int x0, int y0, int cols, int rows) {
        const std::size_t begin = bins.tile_start[tile], end = bins.tile_start[tile + 1];
        splats.clear();
        boxes.clear();
        pixel_start.assign(static_cast<std::size_t>(cols * rows) + 1, 0);
        for (std::size_t e = begin; e < end; ++e) {
            const Splat& sp = proj.splats[bins.ids[e]];
            const int c0 = std::max(0, static_cast<int>(std::ceil(sp.mean_x - sp.ext_x)) - x0);
            const int c1 = std::min(cols - 1, static_cast<int>(std::floor(sp.mean_x + sp.ext_x)) - x0);
            const int r0 = std::max(0, static_cast<int>(std::ceil(sp.mean_y - sp.ext_y)) - y0);
            const int r1 = std::min(rows - 1, static_cast<int>(std::floor(sp.mean_y + sp.ext_y)) - y0);
            if (c0 > c1 || r0 > r1) continue;
            splats.push_back({sp.mean_x, sp.mean_y, sp.conic_a, sp.conic_b, sp.conic_c, sp.opacity, e});
            boxes.push_back({c0, c1, r0, r1});
            for (int r = r0; r <= r1; ++r)
                for (int c = c0; c <= c1; ++c) ++pixel_start[static_cast<std::size_t>(r * cols + c) + 1];
        }
        std::partial_sum(pixel_start.begin(), pixel_start.end(), pixel_start.begin());
        items.resize(pixel_start.back());
        cursor.assign(pixel_start.begin(), pixel_start.end() - 1);
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            const auto [c0, c1, r0, r1] = boxes[i];
            for (int r = r0; r <= r1; ++r)
                for (int c = c0; c <= c1; ++c) items[cursor[static_cast<std::size_t>(r * cols + c)]++] = static_cast<std::uint32_t>(i);
        }
    }

private:
    std::vector<std::uint32_t> cursor;
};

// Index into the per-pair gradient record.
enum : std::size_t { kGMeanX, kGMeanY, kGConicA, kGConicB, kGConicC, kGOpacity, kGFeatures };

}  // namespace

void RenderSettings::validate() const {
    if (tile_size < 1) throw std::invalid_argument("tile_size must be >= 1");
    if (!(near_plane > 0.0)) throw std::invalid_argument("near_plane must be positive");
    if (!(transmittance_floor >= 0.0 && transmittance_floor < 1.0))
        throw std::invalid_argument("transmittance_floor must lie in [0, 1)");
    if (!(low_pass >= 0.0)) throw std::invalid_argument("low_pass must be non-negative");
    if (!(max_alpha > 0.0 && max_alpha < 1.0)) throw std::invalid_argument("max_alpha must lie in (0, 1)");
}

GaussianCloud merge_clouds(const GaussianCloud& a, const GaussianCloud& b) {
    if (!a.empty() && !b.empty() && a.channels != b.channels)
        throw std::invalid_argument("cannot merge clouds with " + std::to_string(a.channels) + " and " +
                                    std::to_string(b.channels) + " channels");
    GaussianCloud out;
    out.channels = a.empty() ? b.channels : a.channels;
    auto cat = [](std::vector<double>& dst, const std::vector<double>& x, const std::vector<double>& y) {
        dst.reserve(x.size() + y.size());
        dst.insert(dst.end(), x.begin(), x.end());
        dst.insert(dst.end(), y.begin(), y.end());
    };
    cat(out.positions, a.positions, b.positions);
    cat(out.rotations, a.rotations, b.rotations);
    cat(out.scales, a.scales, b.scales);
    cat(out.opacities, a.opacities, b.opacities);
    cat(out.features, a.features, b.features);
    return out;
}

FrameBuffer render(const GaussianCloud& cloud, const Camera& camera, const RenderSettings& settings,
                   RenderStats* stats) {
    settings.validate();
    camera.validate();
    check_cloud(cloud);
    const int k = cloud.channels;
    const auto bg = background_of(settings, k);
    const int width = camera.width, height = camera.height;

    auto t0 = Clock::now();
    FrameBuffer fb;
    fb.color = Image::zeros(k, width, height);
    fb.alpha.assign(fb.color.plane_size(), 0.0);
    RenderStats local;
    local.clear_ms = ms_since(t0);

    t0 = Clock::now();
    const Projected proj = project_all(cloud, camera, settings);
    local.cull_ms = ms_since(t0);
    t0 = Clock::now();
    const auto order = depth_order(proj);
    local.sort_ms = ms_since(t0);
    t0 = Clock::now();
    const Binning bins = bin_tiles(proj, order);
    local.bin_ms = ms_since(t0);
    local.visible = order.size();
    local.pairs = bins.ids.size();

    t0 = Clock::now();
    const int ts = settings.tile_size;
    const auto tiles = static_cast<std::ptrdiff_t>(proj.tiles_x) * proj.tiles_y;
    const double floor_t = settings.transmittance_floor;
    const double cutoff2 = settings.cutoff_sigma * settings.cutoff_sigma;
    const std::size_t plane = fb.color.plane_size();
#pragma omp parallel
    {
        std::vector<double> acc(static_cast<std::size_t>(k));
        TileWork work;
#pragma omp for schedule(dynamic)
        for (std::ptrdiff_t tile = 0; tile < tiles; ++tile) {
            const int tx = static_cast<int>(tile % proj.tiles_x), ty = static_cast<int>(tile / proj.tiles_x);
            const int x0 = tx * ts, x1 = std::min(width, (tx + 1) * ts);
            const int y0 = ty * ts, y1 = std::min(height, (ty + 1) * ts);
            work.gather(proj, bins, static_cast<std::size_t>(tile), x0, y0, x1 - x0, y1 - y0);
            for (int py = y0; py < y1; ++py) {
                for (int px = x0; px < x1; ++px) {
                    const std::size_t local = static_cast<std::size_t>((py - y0) * (x1 - x0) + (px - x0));
                    std::fill(acc.begin(), acc.end(), 0.0);
                    double trans = 1.0;
                    for (std::uint32_t r = work.pixel_start[local]; r < work.pixel_start[local + 1]; ++r) {
                        const TileSplat& sp = work.splats[work.items[r]];
                        const std::uint32_t id = bins.ids[sp.entry];
                        const double dx = px - sp.mean_x, dy = py - sp.mean_y;
                        const double power = sp.conic_a * dx * dx + 2.0 * sp.conic_b * dx * dy + sp.conic_c * dy * dy;
                        if (power > cutoff2) continue;
                        const double alpha = std::min(settings.max_alpha, sp.opacity * std::exp(-0.5 * power));
                        const double next = trans * (1.0 - alpha);
                        if (next < floor_t) break;
                        const double weight = alpha * trans;
                        const double* f = &cloud.features[static_cast<std::size_t>(id) * k];
                        for (int c = 0; c < k; ++c) acc[c] += f[c] * weight;
                        trans = next;
                    }
                    const std::size_t pix = static_cast<std::size_t>(py) * width + px;
                    for (int c = 0; c < k; ++c) fb.color.data[c * plane + pix] = acc[c] + bg[c] * trans;
                    fb.alpha[pix] = 1.0 - trans;
                }
            }
        }
    }
    local.blend_ms = ms_since(t0);
    if (stats) *stats = local;
    return fb;
}

CloudGradients render_backward(const GaussianCloud& cloud, const Camera& camera, const RenderSettings& settings,
                               const FrameBuffer& grad) {
    settings.validate();
    camera.validate();
    check_cloud(cloud);
    const int k = cloud.channels;
    const int width = camera.width, height = camera.height;
    if (grad.color.channels != k || grad.color.width != width || grad.color.height != height)
        throw std::invalid_argument("framebuffer gradient shape does not match the render");
    const std::size_t plane = grad.color.plane_size();
    if (!grad.alpha.empty() && grad.alpha.size() != plane)
        throw std::invalid_argument("alpha gradient shape does not match the render");
    const auto bg = background_of(settings, k);

    const Projected proj = project_all(cloud, camera, settings);
    const auto order = depth_order(proj);
    const Binning bins = bin_tiles(proj, order);

    const std::size_t rec = kGFeatures + static_cast<std::size_t>(k);
    std::vector<double> pair_grad(bins.ids.size() * rec, 0.0);

    const int ts = settings.tile_size;
    const auto tiles = static_cast<std::ptrdiff_t>(proj.tiles_x) * proj.tiles_y;
    const double floor_t = settings.transmittance_floor;
    const double cutoff2 = settings.cutoff_sigma * settings.cutoff_sigma;

    struct Hit {
        std::size_t entry;
        double alpha, trans, gauss, dx, dy;
        bool clamped;
    };
#pragma omp parallel
    {
        std::vector<Hit> hits;
        std::vector<double> suffix(static_cast<std::size_t>(k));
        std::vector<double> g_color(static_cast<std::size_t>(k));
        TileWork work;
#pragma omp for schedule(dynamic)
        for (std::ptrdiff_t tile = 0; tile < tiles; ++tile) {
            const int tx = static_cast<int>(tile % proj.tiles_x), ty = static_cast<int>(tile / proj.tiles_x);
            if (bins.tile_start[static_cast<std::size_t>(tile)] == bins.tile_start[static_cast<std::size_t>(tile) + 1])
                continue;
            const int x0 = tx * ts, x1 = std::min(width, (tx + 1) * ts);
            const int y0 = ty * ts, y1 = std::min(height, (ty + 1) * ts);
            work.gather(proj, bins, static_cast<std::size_t>(tile), x0, y0, x1 - x0, y1 - y0);
            for (int py = y0; py < y1; ++py) {
                for (int px = x0; px < x1; ++px) {
                    const std::size_t local = static_cast<std::size_t>((py - y0) * (x1 - x0) + (px - x0));
                    const std::size_t pix = static_cast<std::size_t>(py) * width + px;
                    // Front-to-back replay recording every contributing splat.
                    hits.clear();
                    double trans = 1.0;
                    for (std::uint32_t r = work.pixel_start[local]; r < work.pixel_start[local + 1]; ++r) {
                        const TileSplat& sp = work.splats[work.items[r]];
                        const std::size_t e = sp.entry;
                        const double dx = px - sp.mean_x, dy = py - sp.mean_y;
                        const double power = sp.conic_a * dx * dx + 2.0 * sp.conic_b * dx * dy + sp.conic_c * dy * dy;
                        if (power > cutoff2) continue;
                        const double gauss = std::exp(-0.5 * power);
                        const double raw = sp.opacity * gauss;
                        const double alpha = std::min(settings.max_alpha, raw);
                        const double next = trans * (1.0 - alpha);
                        if (next < floor_t) break;
                        hits.push_back({e, alpha, trans, gauss, dx, dy, raw >= settings.max_alpha});
                        trans = next;
                    }
                    if (hits.empty()) continue;
                    const double final_trans = trans;
                    const double g_alpha = grad.alpha.empty() ? 0.0 : grad.alpha[pix];
                    for (int c = 0; c < k; ++c) {
                        g_color[c] = grad.color.data[c * plane + pix];
                        suffix[c] = bg[c] * final_trans;
                    }
                    for (std::size_t h = hits.size(); h-- > 0;) {
                        const Hit& hit = hits[h];
                        const std::uint32_t id = bins.ids[hit.entry];
                        const Splat& sp = proj.splats[id];
                        const double* f = &cloud.features[static_cast<std::size_t>(id) * k];
                        double* g = &pair_grad[hit.entry * rec];
                        const double weight = hit.alpha * hit.trans;
                        const double inv_one_minus = 1.0 / (1.0 - hit.alpha);
                        const Eigen::Map<const Eigen::VectorXd> fv(f, k), gc(g_color.data(), k);
                        Eigen::Map<Eigen::VectorXd> sv(suffix.data(), k);
                        Eigen::Map<Eigen::VectorXd>(g + kGFeatures, k) += weight * gc;
                        const double d_alpha = g_alpha * final_trans * inv_one_minus + hit.trans * fv.dot(gc) -
                                               inv_one_minus * sv.dot(gc);
                        sv += weight * fv;
                        if (hit.clamped) continue;
                        g[kGOpacity] += d_alpha * hit.gauss;
                        const double d_power = -0.5 * d_alpha * sp.opacity * hit.gauss;
                        g[kGConicA] += d_power * hit.dx * hit.dx;
                        g[kGConicB] += d_power * 2.0 * hit.dx * hit.dy;
                        g[kGConicC] += d_power * hit.dy * hit.dy;
                        g[kGMeanX] += -2.0 * d_power * (sp.conic_a * hit.dx + sp.conic_b * hit.dy);
                        g[kGMeanY] += -2.0 * d_power * (sp.conic_b * hit.dx + sp.conic_c * hit.dy);
                    }
                }
            }
        }
    }

    // Deterministic merge in tile order.
    const std::size_t n = cloud.size();
    std::vector<double> splat_grad(n * rec, 0.0);
    for (std::size_t e = 0; e < bins.ids.size(); ++e) {
        double* dst = &splat_grad[static_cast<std::size_t>(bins.ids[e]) * rec];
        const double* src = &pair_grad[e * rec];
        for (std::size_t r = 0; r < rec; ++r) dst[r] += src[r];
    }

    CloudGradients out = CloudGradients::zeros(n, k);
    const Eigen::Matrix3d w = camera.world_to_camera_rotation();
    const Eigen::Vector3d cam_center = camera.center();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        if (!proj.splats[i].visible) continue;
        const Splat& sp = proj.splats[i];
        const double* g = &splat_grad[i * rec];
        for (int c = 0; c < k; ++c) out.features[i * k + c] = g[kGFeatures + c];
        out.opacities[i] = g[kGOpacity];

        const Eigen::Vector3d p(cloud.positions[i * 3], cloud.positions[i * 3 + 1], cloud.positions[i * 3 + 2]);
        const Eigen::Vector3d t = w * (p - cam_center);
        const double iz = 1.0 / t.z();
        const double fx = camera.fx, fy = camera.fy;

        // conic -> 2D covariance
        Eigen::Matrix2d conic;
        conic << sp.conic_a, sp.conic_b, sp.conic_b, sp.conic_c;
        Eigen::Matrix2d g_conic;
        g_conic << g[kGConicA], 0.5 * g[kGConicB], 0.5 * g[kGConicB], g[kGConicC];
        const Eigen::Matrix2d g_cov = -conic * g_conic * conic;

        // 2D covariance -> 3D covariance and Jacobian
        const double* qr = &cloud.rotations[i * 4];
        const Eigen::Matrix3d r = rotation_from(qr);
        const Eigen::Vector3d sc(cloud.scales[i * 3], cloud.scales[i * 3 + 1], cloud.scales[i * 3 + 2]);
        const Eigen::Matrix3d m = r * sc.asDiagonal();
        const Eigen::Matrix3d sigma = m * m.transpose();
        Eigen::Matrix<double, 2, 3> j;
        j << fx * iz, 0.0, -fx * t.x() * iz * iz, 0.0, fy * iz, -fy * t.y() * iz * iz;
        const Eigen::Matrix<double, 2, 3> tw = j * w;
        const Eigen::Matrix3d g_sigma = tw.transpose() * g_cov * tw;
        const Eigen::Matrix<double, 2, 3> g_tw = 2.0 * g_cov * tw * sigma;
        const Eigen::Matrix<double, 2, 3> g_j = g_tw * w.transpose();

        Eigen::Vector3d g_t;
        g_t.x() = g_j(0, 2) * (-fx * iz * iz) + g[kGMeanX] * fx * iz;
        g_t.y() = g_j(1, 2) * (-fy * iz * iz) + g[kGMeanY] * fy * iz;
        g_t.z() = g_j(0, 0) * (-fx * iz * iz) + g_j(0, 2) * (2.0 * fx * t.x() * iz * iz * iz) +
                  g_j(1, 1) * (-fy * iz * iz) + g_j(1, 2) * (2.0 * fy * t.y() * iz * iz * iz) -
                  g[kGMeanX] * fx * t.x() * iz * iz - g[kGMeanY] * fy * t.y() * iz * iz;
        const Eigen::Vector3d g_p = w.transpose() * g_t;
        for (int c = 0; c < 3; ++c) out.positions[i * 3 + c] = g_p[c];

        // 3D covariance -> scale and rotation
        const Eigen::Matrix3d g_m = 2.0 * g_sigma * m;
        for (int c = 0; c < 3; ++c) out.scales[i * 3 + c] = g_m.col(c).dot(r.col(c));
        const Eigen::Matrix3d g_r = g_m * sc.asDiagonal();
        const double qn = std::sqrt(qr[0] * qr[0] + qr[1] * qr[1] + qr[2] * qr[2] + qr[3] * qr[3]);
        const double qw = qr[0] / qn, qx = qr[1] / qn, qy = qr[2] / qn, qz = qr[3] / qn;
        Eigen::Vector4d g_q;
        g_q[0] = 2 * (qz * (g_r(1, 0) - g_r(0, 1)) + qy * (g_r(0, 2) - g_r(2, 0)) + qx * (g_r(2, 1) - g_r(1, 2)));
        g_q[1] = 2 * (qy * (g_r(1, 0) + g_r(0, 1)) + qz * (g_r(2, 0) + g_r(0, 2)) + qw * (g_r(2, 1) - g_r(1, 2))) -
                 4 * qx * (g_r(1, 1) + g_r(2, 2));
        g_q[2] = 2 * (qx * (g_r(1, 0) + g_r(0, 1)) + qw * (g_r(0, 2) - g_r(2, 0)) + qz * (g_r(2, 1) + g_r(1, 2))) -
                 4 * qy * (g_r(0, 0) + g_r(2, 2));
        g_q[3] = 2 * (qw * (g_r(1, 0) - g_r(0, 1)) + qx * (g_r(2, 0) + g_r(0, 2)) + qy * (g_r(2, 1) + g_r(1, 2))) -
                 4 * qz * (g_r(0, 0) + g_r(1, 1));
        const Eigen::Vector4d q_hat(qw, qx, qy, qz);
        const Eigen::Vector4d g_raw = (g_q - q_hat * q_hat.dot(g_q)) / qn;
        for (int c = 0; c < 4; ++c) out.rotations[i * 4 + c] = g_raw[c];
    }
    return out;
}

std::string BenchReport::to_json() const {
    nlohmann::json j = {{"frames", frames},
                        {"gaussians", gaussians},
                        {"width", width},
                        {"height", height},
                        {"channels", channels},
                        {"fps", fps},
                        {"ms_per_frame", ms_per_frame},
                        {"breakdown_ms",
                         {{"clear", mean.clear_ms},
                          {"cull", mean.cull_ms},
                          {"sort", mean.sort_ms},
                          {"bin", mean.bin_ms},
                          {"blend", mean.blend_ms}}},
                        {"visible", mean.visible},
                        {"pairs", mean.pairs}};
    return j.dump();
}

BenchReport bench(const GaussianCloud& cloud, const Camera& camera, const RenderSettings& settings,
                  std::size_t frames) {
    if (frames < 1) throw std::invalid_argument("bench needs at least one frame");
    BenchReport report;
    report.frames = frames;
    report.gaussians = cloud.size();
    report.width = camera.width;
    report.height = camera.height;
    report.channels = cloud.channels;
    const auto start = Clock::now();
    for (std::size_t f = 0; f < frames; ++f) {
        RenderStats s;
        const FrameBuffer fb = render(cloud, camera, settings, &s);
        report.mean.clear_ms += s.clear_ms;
        report.mean.cull_ms += s.cull_ms;
        report.mean.sort_ms += s.sort_ms;
        report.mean.bin_ms += s.bin_ms;
        report.mean.blend_ms += s.blend_ms;
        report.mean.visible = s.visible;
        report.mean.pairs = s.pairs;
    }
    const double total = ms_since(start);
    const auto nf = static_cast<double>(frames);
    report.mean.clear_ms /= nf;
    report.mean.cull_ms /= nf;
    report.mean.sort_ms /= nf;
    report.mean.bin_ms /= nf;
    report.mean.blend_ms /= nf;
    report.ms_per_frame = total / nf;
    report.fps = report.ms_per_frame > 0 ? 1000.0 / report.ms_per_frame : 0.0;
    return report;
}

GaussianCloud random_cloud(std::size_t count, int channels, std::uint64_t seed, double radius, double scale) {
    GaussianCloud c;
    c.channels = channels;
    c.resize(count);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto k = static_cast<std::size_t>(channels);
    for (std::size_t i = 0; i < count; ++i) {
        Eigen::Vector3d d(normal(rng), normal(rng), normal(rng));
        d = d.normalized() * radius * std::cbrt(unit(rng));
        for (int a = 0; a < 3; ++a) c.positions[i * 3 + a] = d[a];
        Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
        q.normalize();
        c.rotations[i * 4] = q.w();
        c.rotations[i * 4 + 1] = q.x();
        c.rotations[i * 4 + 2] = q.y();
        c.rotations[i * 4 + 3] = q.z();
        for (int a = 0; a < 3; ++a) c.scales[i * 3 + a] = scale * (0.5 + unit(rng));
        c.opacities[i] = 0.2 + 0.7 * unit(rng);
        for (std::size_t f = 0; f < k; ++f) c.features[i * k + f] = unit(rng);
    }
    return c;
}

}  // namespace gaga
