#include "gaga/head_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace gaga {

namespace {

void add_basis(std::span<const double> basis, std::span<const double> coeffs, std::span<double> out) {
    const std::size_t n = coeffs.size();
    if (n == 0) return;
    for (std::size_t row = 0; row < out.size(); ++row) {
        const double* b = basis.data() + row * n;
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += b[k] * coeffs[k];
        out[row] += acc;
    }
}

std::vector<double> contract_basis(std::span<const double> basis, std::size_t n, std::span<const double> grad) {
    std::vector<double> out(n, 0.0);
    if (n == 0) return out;
    for (std::size_t row = 0; row < grad.size(); ++row) {
        const double g = grad[row];
        if (g == 0.0) continue;
        const double* b = basis.data() + row * n;
        for (std::size_t k = 0; k < n; ++k) out[k] += b[k] * g;
    }
    return out;
}

void check_len(const char* what, std::size_t got, std::size_t want) {
    if (got != want)
        throw std::invalid_argument(std::string(what) + " has length " + std::to_string(got) + ", model expects " +
                                    std::to_string(want));
}

using Vec3 = std::array<double, 3>;

Vec3 normalized(Vec3 v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return {v[0] / n, v[1] / n, v[2] / n};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

constexpr Vec3 kSemiAxes = {0.72, 0.92, 0.82};

// Latitude rings from the top pole (+y) to the bottom pole, sized so the
// vertex count matches exactly.
std::vector<std::size_t> ring_sizes(std::size_t v) {
    const std::size_t mid_total = v - 2;
    const auto rings = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(std::sqrt(std::numbers::pi * static_cast<double>(v) / 4.0))) - 1);
    const std::size_t r = std::min(rings, mid_total);
    std::vector<double> weight(r);
    double total = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
        weight[k] = std::sin(std::numbers::pi * static_cast<double>(k + 1) / static_cast<double>(r + 1));
        total += weight[k];
    }
    std::vector<std::size_t> sizes(r, 1);
    std::size_t assigned = r;
    std::vector<std::pair<double, std::size_t>> frac;
    for (std::size_t k = 0; k < r; ++k) {
        const double ideal = weight[k] / total * static_cast<double>(mid_total);
        const auto extra = static_cast<std::size_t>(std::max(0.0, std::floor(ideal) - 1.0));
        sizes[k] += extra;
        assigned += extra;
        frac.emplace_back(ideal - std::floor(ideal), k);
    }
    std::stable_sort(frac.begin(), frac.end(), [](auto a, auto b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < mid_total; i = (i + 1) % r) {
        ++sizes[frac[i].second];
        ++assigned;
    }
    std::vector<std::size_t> all;
    all.push_back(1);
    all.insert(all.end(), sizes.begin(), sizes.end());
    all.push_back(1);
    return all;
}

// Zips two concentric rings into a triangle strip by walking both angle lists.
void zip_rings(std::size_t a0, const std::vector<double>& angle_a, std::size_t b0, const std::vector<double>& angle_b,
               std::vector<std::array<std::uint32_t, 3>>& tris) {
    const std::size_t na = angle_a.size(), nb = angle_b.size();
    std::size_t i = 0, j = 0;
    auto unwrap = [](const std::vector<double>& a, std::size_t idx) {
        return a[idx % a.size()] + 2.0 * std::numbers::pi * static_cast<double>(idx / a.size());
    };
    while (i < na || j < nb) {
        const bool advance_a = j >= nb || (i < na && unwrap(angle_a, i + 1) <= unwrap(angle_b, j + 1));
        const auto ai = static_cast<std::uint32_t>(a0 + i % na);
        const auto bj = static_cast<std::uint32_t>(b0 + j % nb);
        if (advance_a) {
            tris.push_back({ai, bj, static_cast<std::uint32_t>(a0 + (i + 1) % na)});
            ++i;
        } else {
            tris.push_back({ai, bj, static_cast<std::uint32_t>(b0 + (j + 1) % nb)});
            ++j;
        }
    }
}

struct Bump {
    Vec3 centre;
    double width;
    double amplitude;  // fraction of the 0.1*diagonal bound
    double tangent_mix;
};

void fill_basis(std::vector<double>& basis, std::size_t n, const std::vector<Vec3>& dirs, const std::vector<Bump>& bumps,
                double diag) {
    const std::size_t v = dirs.size();
    basis.assign(v * 3 * n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const Bump& b = bumps[k];
        Vec3 helper = std::abs(b.centre[1]) < 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
        const Vec3 tangent = normalized(cross(b.centre, helper));
        double max_norm = 0.0;
        std::vector<Vec3> disp(v);
        for (std::size_t i = 0; i < v; ++i) {
            const double w = std::exp(-(1.0 - dot(dirs[i], b.centre)) / (b.width * b.width));
            for (int c = 0; c < 3; ++c) disp[i][c] = w * (dirs[i][c] + b.tangent_mix * tangent[c]);
            max_norm = std::max(max_norm, std::sqrt(dot(disp[i], disp[i])));
        }
        const double scale = max_norm > 0 ? b.amplitude * 0.1 * diag / max_norm : 0.0;
        for (std::size_t i = 0; i < v; ++i)
            for (int c = 0; c < 3; ++c)
                basis[(i * 3 + c) * n + k] = static_cast<float>(disp[i][c] * scale);
    }
}

Vec3 random_direction(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    return normalized({normal(rng), normal(rng), normal(rng)});
}

}  // namespace

void BlendshapeModel::validate() const {
    if (template_vertices.empty() || template_vertices.size() % 3 != 0)
        throw std::invalid_argument("template_vertices must be a non-empty multiple of 3");
    const std::size_t rows = template_vertices.size();
    check_len("shape_basis", shape_basis.size(), rows * n_beta);
    check_len("pose_basis", pose_basis.size(), rows * n_theta);
    check_len("expr_basis", expr_basis.size(), rows * n_psi);
    const std::size_t v = num_vertices();
    for (const auto& t : triangles)
        for (const auto idx : t)
            if (idx >= v) throw std::invalid_argument("triangle index " + std::to_string(idx) + " out of range");
    for (const double x : template_vertices)
        if (!std::isfinite(x)) throw std::invalid_argument("template vertex is not finite");
    if (!(bounding_box_diagonal() > 0.0)) throw std::invalid_argument("template bounding box is degenerate");
}

double BlendshapeModel::bounding_box_diagonal() const {
    Vec3 lo{INFINITY, INFINITY, INFINITY}, hi{-INFINITY, -INFINITY, -INFINITY};
    for (std::size_t i = 0; i < num_vertices(); ++i)
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], template_vertices[i * 3 + c]);
            hi[c] = std::max(hi[c], template_vertices[i * 3 + c]);
        }
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) d2 += (hi[c] - lo[c]) * (hi[c] - lo[c]);
    return std::sqrt(d2);
}

ExpressionParams ExpressionParams::zeros(const BlendshapeModel& model) {
    return {std::vector<double>(model.n_beta, 0.0), std::vector<double>(model.n_theta, 0.0),
            std::vector<double>(model.n_psi, 0.0)};
}

void ExpressionParams::check_against(const BlendshapeModel& model) const {
    check_len("beta", beta.size(), model.n_beta);
    check_len("theta", theta.size(), model.n_theta);
    check_len("psi", psi.size(), model.n_psi);
    for (const auto* block : {&beta, &theta, &psi})
        for (const double x : *block)
            if (!std::isfinite(x)) throw std::invalid_argument("expression parameters must be finite");
}

std::vector<double> evaluate(const BlendshapeModel& model, const ExpressionParams& params) {
    params.check_against(model);
    std::vector<double> out = model.template_vertices;
    add_basis(model.shape_basis, params.beta, out);
    add_basis(model.pose_basis, params.theta, out);
    add_basis(model.expr_basis, params.psi, out);
    return out;
}

ExpressionParams evaluate_backward(const BlendshapeModel& model, const ExpressionParams& params,
                                   std::span<const double> grad_vertices) {
    params.check_against(model);
    check_len("grad_vertices", grad_vertices.size(), model.template_vertices.size());
    return {contract_basis(model.shape_basis, model.n_beta, grad_vertices),
            contract_basis(model.pose_basis, model.n_theta, grad_vertices),
            contract_basis(model.expr_basis, model.n_psi, grad_vertices)};
}

std::array<double, 3> toy_mouth_direction() { return normalized({0.0, -0.45, 0.9}); }

BlendshapeModel generate_toy_model(const ToyModelOptions& options) {
    if (options.vertices < 4) throw std::invalid_argument("toy model needs at least 4 vertices");
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    BlendshapeModel model;
    model.n_beta = options.n_beta;
    model.n_theta = options.n_theta;
    model.n_psi = options.n_psi;

    const auto sizes = ring_sizes(options.vertices);
    std::vector<Vec3> dirs;
    std::vector<std::vector<double>> ring_angles;
    std::vector<std::size_t> ring_start;
    const std::size_t rings = sizes.size();
    for (std::size_t r = 0; r < rings; ++r) {
        const double polar = std::numbers::pi * static_cast<double>(r) / static_cast<double>(rings - 1);
        const std::size_t n = sizes[r];
        const double offset = (r % 2 == 1) ? 0.5 : 0.0;
        ring_start.push_back(dirs.size());
        ring_angles.emplace_back();
        for (std::size_t i = 0; i < n; ++i) {
            const double az = 2.0 * std::numbers::pi * (static_cast<double>(i) + offset) / static_cast<double>(n);
            ring_angles.back().push_back(az);
            dirs.push_back({std::sin(polar) * std::sin(az), std::cos(polar), std::sin(polar) * std::cos(az)});
        }
    }
    for (std::size_t r = 0; r + 1 < rings; ++r)
        zip_rings(ring_start[r], ring_angles[r], ring_start[r + 1], ring_angles[r + 1], model.triangles);

    // Ellipsoid with a soft nose bump on the +z face.
    const Vec3 nose = normalized({0.0, 0.05, 1.0});
    model.template_vertices.resize(dirs.size() * 3);
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        const double bump = 1.0 + 0.06 * std::exp(-(1.0 - dot(dirs[i], nose)) / 0.01);
        for (int c = 0; c < 3; ++c)
            model.template_vertices[i * 3 + c] = static_cast<float>(dirs[i][c] * kSemiAxes[c] * bump);
    }
    const double diag = model.bounding_box_diagonal();

    auto make_bumps = [&](std::size_t n, double min_width, double max_width) {
        std::vector<Bump> bumps(n);
        for (auto& b : bumps) {
            b.centre = random_direction(rng);
            b.width = min_width + (max_width - min_width) * unit(rng);
            b.amplitude = 0.3 + 0.6 * unit(rng);
            b.tangent_mix = 0.6 * (unit(rng) - 0.5);
        }
        return bumps;
    };
    auto shape_bumps = make_bumps(model.n_beta, 0.5, 1.0);
    auto pose_bumps = make_bumps(model.n_theta, 0.35, 0.6);
    for (auto& b : pose_bumps) b.centre = normalized({b.centre[0] * 0.5, -1.0, b.centre[2] * 0.5 + 0.3});
    auto expr_bumps = make_bumps(model.n_psi, 0.25, 0.55);
    if (!expr_bumps.empty()) {
        expr_bumps[0].centre = toy_mouth_direction();
        expr_bumps[0].width = 0.3;
        expr_bumps[0].amplitude = 0.9;
        expr_bumps[0].tangent_mix = 0.0;
    }
    fill_basis(model.shape_basis, model.n_beta, dirs, shape_bumps, diag);
    fill_basis(model.pose_basis, model.n_theta, dirs, pose_bumps, diag);
    fill_basis(model.expr_basis, model.n_psi, dirs, expr_bumps, diag);
    model.validate();
    return model;
}

}  // namespace gaga
