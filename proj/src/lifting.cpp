#include "gaga/lifting.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace gaga {

LiftingGrids LiftingGrids::zeros(int res, int channels) {
    LiftingGrids g;
    g.res = res;
    g.channels = channels;
    g.front.assign(g.pixels() * g.record_size(), 0.0);
    g.back.assign(g.pixels() * g.record_size(), 0.0);
    return g;
}

void LiftingGrids::validate() const {
    if (res < 2) throw std::invalid_argument("lifting grid resolution must be at least 2");
    const std::size_t want = pixels() * record_size();
    if (front.size() != want || back.size() != want)
        throw std::invalid_argument("lifting sheets must hold res*res*" + std::to_string(record_size()) + " values");
    for (const auto* sheet : {&front, &back})
        for (const double x : *sheet)
            if (!std::isfinite(x)) throw std::invalid_argument("lifting grid contains non-finite values");
}

LiftingGrids init_lifting_grids(int res, double extent, std::uint64_t seed, int channels) {
    LiftingGrids g = LiftingGrids::zeros(res, channels);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> feature_noise(0.0, 0.01);
    const auto k = static_cast<std::size_t>(channels);
    const std::size_t rec = g.record_size();
    const double distance = activation::softplus_inverse(0.05);
    const double opacity = activation::logit(0.1);
    const double log_scale = std::log(2.0 * extent / res);
    for (auto* sheet : {&g.front, &g.back}) {
        for (std::size_t p = 0; p < g.pixels(); ++p) {
            double* r = sheet->data() + p * rec;
            r[lifting_record::kDistance] = distance;
            double* a = r + lifting_record::kAttributes;
            for (std::size_t c = 0; c < k; ++c) a[c] = feature_noise(rng);
            a[k] = opacity;
            for (int c = 0; c < 3; ++c) a[k + 1 + c] = log_scale;
            a[k + 4] = 1.0;
            a[k + 5] = a[k + 6] = a[k + 7] = 0.0;
        }
    }
    return g;
}

namespace {

void check_plane(const LiftingGrids& grids, const LiftingPlane& plane) {
    if (plane.res() != grids.res)
        throw std::invalid_argument("grid resolution " + std::to_string(grids.res) + " does not match plane resolution " +
                                    std::to_string(plane.res()));
    if (plane.points.size() != grids.pixels() * 3) throw std::invalid_argument("plane point count mismatch");
}

}  // namespace

GaussianCloud assemble_dual_lift(const LiftingGrids& grids, const LiftingPlane& plane) {
    check_plane(grids, plane);
    const std::size_t pix = grids.pixels();
    const std::size_t rec = grids.record_size();
    const std::size_t attr = rec - 1;
    GaussianCloud cloud;
    cloud.channels = grids.channels;
    cloud.resize(2 * pix);
    const Eigen::Vector3d& n = plane.plane.normal;
    for (int sheet = 0; sheet < 2; ++sheet) {
        const std::vector<double>& src = sheet == 0 ? grids.front : grids.back;
        const double sign = sheet == 0 ? 1.0 : -1.0;
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(pix); ++pi) {
            const auto p = static_cast<std::size_t>(pi);
            const double* r = src.data() + p * rec;
            const std::size_t out = sheet * pix + p;
            const double d = sign * activation::softplus(r[lifting_record::kDistance]);
            for (int c = 0; c < 3; ++c) cloud.positions[out * 3 + c] = plane.points[p * 3 + c] + d * n[c];
            activation::decode_attributes({r + lifting_record::kAttributes, attr}, grids.channels, cloud, out);
        }
    }
    return cloud;
}

LiftingGrids assemble_dual_lift_backward(const LiftingGrids& grids, const LiftingPlane& plane,
                                         const CloudGradients& grad) {
    check_plane(grids, plane);
    const std::size_t pix = grids.pixels();
    if (grad.size() != 2 * pix || grad.channels != grids.channels)
        throw std::invalid_argument("cloud gradient does not match the dual-lift layout");
    const std::size_t rec = grids.record_size();
    const std::size_t attr = rec - 1;
    LiftingGrids out = LiftingGrids::zeros(grids.res, grids.channels);
    const Eigen::Vector3d& n = plane.plane.normal;
    for (int sheet = 0; sheet < 2; ++sheet) {
        const std::vector<double>& src = sheet == 0 ? grids.front : grids.back;
        std::vector<double>& dst = sheet == 0 ? out.front : out.back;
        const double sign = sheet == 0 ? 1.0 : -1.0;
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(pix); ++pi) {
            const auto p = static_cast<std::size_t>(pi);
            const double* r = src.data() + p * rec;
            double* g = dst.data() + p * rec;
            const std::size_t idx = sheet * pix + p;
            double gn = 0.0;
            for (int c = 0; c < 3; ++c) gn += grad.positions[idx * 3 + c] * n[c];
            g[lifting_record::kDistance] = sign * gn * activation::sigmoid(r[lifting_record::kDistance]);
            activation::decode_attributes_backward({r + lifting_record::kAttributes, attr}, grids.channels, grad, idx,
                                                   {g + lifting_record::kAttributes, attr});
        }
    }
    return out;
}

GaussianCloud single_plane_lift(std::span<const double> sheet, int channels, const LiftingPlane& plane) {
    const std::size_t pix = plane.points.size() / 3;
    const std::size_t rec = static_cast<std::size_t>(channels) + 9;
    if (sheet.size() != pix * rec)
        throw std::invalid_argument("single-plane sheet must hold res*res*" + std::to_string(rec) + " values");
    GaussianCloud cloud;
    cloud.channels = channels;
    cloud.resize(pix);
    const Eigen::Vector3d& n = plane.plane.normal;
    for (std::size_t p = 0; p < pix; ++p) {
        const double* r = sheet.data() + p * rec;
        const double d = plane.plane.extent * std::tanh(r[lifting_record::kDistance]);
        for (int c = 0; c < 3; ++c) cloud.positions[p * 3 + c] = plane.points[p * 3 + c] + d * n[c];
        activation::decode_attributes({r + lifting_record::kAttributes, rec - 1}, channels, cloud, p);
    }
    return cloud;
}

}  // namespace gaga
