#include "support.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <cmath>
#include <numeric>
#include <random>

#include "gaga/expression.hpp"
#include "gaga/head_model.hpp"
#include "gaga/lifting.hpp"
#include "gaga/losses.hpp"
#include "json.hpp"

namespace gaga::testing {

FrameBuffer oracle_render(const GaussianCloud& cloud, const Camera& camera, const RenderSettings& settings) {
    const int k = cloud.channels;
    const std::size_t n = cloud.size();
    struct Proj {
        double depth, mx, my;
        Eigen::Matrix2d inv_cov;
    };
    std::vector<Proj> proj(n);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d p(cloud.positions[i * 3], cloud.positions[i * 3 + 1], cloud.positions[i * 3 + 2]);
        const Eigen::Vector3d t = camera.world_to_camera(p);
        if (t.z() < settings.near_plane) continue;
        const Eigen::Quaterniond q(cloud.rotations[i * 4], cloud.rotations[i * 4 + 1], cloud.rotations[i * 4 + 2],
                                   cloud.rotations[i * 4 + 3]);
        const Eigen::Matrix3d r = q.normalized().toRotationMatrix();
        Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
        for (int a = 0; a < 3; ++a) s(a, a) = cloud.scales[i * 3 + a] * cloud.scales[i * 3 + a];
        const Eigen::Matrix3d world_cov = r * s * r.transpose();
        const Eigen::Matrix3d w = camera.world_to_camera_rotation();
        const Eigen::Matrix3d cam_cov = w * world_cov * w.transpose();
        // d(pixel)/d(camera point) at the mean
        Eigen::Matrix<double, 2, 3> jac;
        jac << camera.fx / t.z(), 0.0, -camera.fx * t.x() / (t.z() * t.z()), 0.0, camera.fy / t.z(),
            -camera.fy * t.y() / (t.z() * t.z());
        Eigen::Matrix2d cov = jac * cam_cov * jac.transpose();
        cov += settings.low_pass * Eigen::Matrix2d::Identity();
        const double det = std::max(cov.determinant(), 1e-12);
        Eigen::Matrix2d inv;
        inv << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
        proj[i] = {t.z(), camera.fx * t.x() / t.z() + camera.cx, camera.fy * t.y() / t.z() + camera.cy, inv};
        order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return proj[a].depth < proj[b].depth || (proj[a].depth == proj[b].depth && a < b);
    });

    FrameBuffer fb;
    fb.color = Image::zeros(k, camera.width, camera.height);
    fb.alpha.assign(fb.color.plane_size(), 0.0);
    const double cutoff2 = settings.cutoff_sigma * settings.cutoff_sigma;
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x) {
            double trans = 1.0;
            std::vector<double> acc(static_cast<std::size_t>(k), 0.0);
            for (const std::size_t i : order) {
                const Eigen::Vector2d d(x - proj[i].mx, y - proj[i].my);
                const double m2 = d.dot(proj[i].inv_cov * d);
                if (m2 > cutoff2) continue;
                const double alpha = std::min(settings.max_alpha, cloud.opacities[i] * std::exp(-0.5 * m2));
                if (trans * (1.0 - alpha) < settings.transmittance_floor) break;
                for (int c = 0; c < k; ++c) acc[c] += cloud.features[i * k + c] * alpha * trans;
                trans *= 1.0 - alpha;
            }
            for (int c = 0; c < k; ++c) {
                const double bg = settings.background.empty() ? 0.0 : settings.background[c];
                fb.color.at(c, x, y) = acc[c] + bg * trans;
            }
            fb.alpha[static_cast<std::size_t>(y) * camera.width + x] = 1.0 - trans;
        }
    return fb;
}

Image oracle_decode(const Decoder& d, const Image& f) {
    const int w = f.width, h = f.height, ci = d.in_channels, hid = d.hidden_channels;
    Image out = Image::zeros(3, w, h);
    auto px = [&](const Image& img, int c, int x, int y) {
        return img.at(c, std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int o = 0; o < 3; ++o) {
                double v = d.bias[o];
                for (int c = 0; c < ci; ++c) v += d.affine[o * ci + c] * f.at(c, x, y);
                out.at(o, x, y) = v;
            }
    if (d.mode == DecoderMode::affine) return out;
    Image hidden = Image::zeros(hid, w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int o = 0; o < hid; ++o) {
                double v = d.conv1_bias[o];
                for (int c = 0; c < ci; ++c)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx)
                            v += d.conv1[((o * ci + c) * 3 + ky) * 3 + kx] * px(f, c, x + kx - 1, y + ky - 1);
                hidden.at(o, x, y) = std::tanh(v);
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int o = 0; o < 3; ++o) {
                double v = d.conv2_bias[o];
                for (int c = 0; c < hid; ++c)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx)
                            v += d.conv2[((o * hid + c) * 3 + ky) * 3 + kx] * px(hidden, c, x + kx - 1, y + ky - 1);
                out.at(o, x, y) += v;
            }
    return out;
}

std::pair<std::size_t, double> linear_nearest(std::span<const double> points, const double* q) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size() / 3; ++i) {
        const double dx = points[i * 3] - q[0], dy = points[i * 3 + 1] - q[1], dz = points[i * 3 + 2] - q[2];
        const double d = dx * dx + dy * dy + dz * dz;
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return {best, best_d};
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double rel_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

Camera fixture_camera(int width, int height, double fov_deg) {
    return orbit_camera(0.0, 0.0, 3.0, fov_deg, width, height);
}

GaussianCloud fixture_cloud(std::size_t count, int channels, const Camera& camera, std::uint64_t seed,
                            double pixel_scale) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    GaussianCloud c;
    c.channels = channels;
    c.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double px = 2.0 + unit(rng) * (camera.width - 5.0);
        const double py = 2.0 + unit(rng) * (camera.height - 5.0);
        const double depth = 2.0 + 2.0 * unit(rng);
        const Eigen::Vector3d p = unproject(camera, px, py, depth);
        for (int a = 0; a < 3; ++a) c.positions[i * 3 + a] = p[a];
        Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
        q.normalize();
        c.rotations[i * 4] = q.w();
        c.rotations[i * 4 + 1] = q.x();
        c.rotations[i * 4 + 2] = q.y();
        c.rotations[i * 4 + 3] = q.z();
        for (int a = 0; a < 3; ++a) c.scales[i * 3 + a] = pixel_scale * depth / camera.fx * (0.6 + 0.8 * unit(rng));
        c.opacities[i] = 0.2 + 0.5 * unit(rng);
        for (int f = 0; f < channels; ++f) c.features[i * channels + f] = unit(rng);
    }
    return c;
}

PlyData read_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    PlyData out;
    std::string line;
    std::getline(in, line);
    if (line != "ply") throw std::runtime_error("missing ply magic");
    std::vector<std::string> types;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            ls >> out.format;
        } else if (word == "element") {
            std::string el;
            ls >> el >> out.count;
            if (el != "vertex") throw std::runtime_error("unexpected element " + el);
        } else if (word == "property") {
            std::string type, name;
            ls >> type >> name;
            types.push_back(type);
            out.names.push_back(name);
        } else if (word == "end_header") {
            break;
        } else if (word != "comment") {
            throw std::runtime_error("unexpected header line: " + line);
        }
    }
    if (out.format != "binary_little_endian") throw std::runtime_error("unsupported format " + out.format);
    for (std::size_t v = 0; v < out.count; ++v) {
        std::vector<double> row;
        for (const auto& t : types) {
            if (t == "float") {
                float f;
                if (!in.read(reinterpret_cast<char*>(&f), 4)) throw std::runtime_error("truncated body");
                row.push_back(f);
            } else if (t == "uchar") {
                unsigned char c;
                if (!in.read(reinterpret_cast<char*>(&c), 1)) throw std::runtime_error("truncated body");
                row.push_back(c);
            } else {
                throw std::runtime_error("unsupported type " + t);
            }
        }
        out.rows.push_back(std::move(row));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes after body");
    return out;
}

std::vector<SectionRange> container_sections(std::span<const std::uint8_t> bytes) {
    std::uint32_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + 8, 4);
    const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
    std::vector<SectionRange> out;
    std::size_t offset = 12 + header_len;
    for (const auto& s : header.at("sections")) {
        const std::size_t width = s.at("dtype") == "f64" ? 8 : 4;
        const std::size_t len = width * s.at("count").get<std::size_t>();
        out.push_back({s.at("name").get<std::string>(), offset, offset + len});
        offset += len;
    }
    return out;
}

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Central differences of f() with respect to every entry of each block.
template <class F>
std::vector<double> numeric_gradient(const std::vector<std::span<double>>& blocks, F&& f, double h) {
    std::vector<double> g;
    for (auto block : blocks)
        for (double& x : block) {
            const double saved = x;
            x = saved + h;
            const double up = f();
            x = saved - h;
            const double down = f();
            x = saved;
            g.push_back((up - down) / (2.0 * h));
        }
    return g;
}

void append(std::vector<double>& dst, std::span<const double> src) { dst.insert(dst.end(), src.begin(), src.end()); }

double cloud_objective(const GaussianCloud& c, const CloudGradients& w, bool with_positions) {
    double v = dot(c.rotations, w.rotations) + dot(c.scales, w.scales) + dot(c.opacities, w.opacities) +
               dot(c.features, w.features);
    if (with_positions) v += dot(c.positions, w.positions);
    return v;
}

CloudGradients random_cloud_weights(std::size_t n, int k, std::mt19937_64& rng) {
    CloudGradients w = CloudGradients::zeros(n, k);
    for (auto* v : {&w.positions, &w.rotations, &w.scales, &w.opacities, &w.features}) *v = random_vector(v->size(), rng);
    return w;
}

void renderer_checks(std::uint64_t seed, std::vector<GradCheck>& out) {
    std::mt19937_64 rng(seed);
    const int k = 4;
    const Camera cam = fixture_camera(24, 20);
    GaussianCloud cloud = fixture_cloud(20, k, cam, seed, 2.5);
    RenderSettings settings;
    settings.tile_size = 8;
    FrameBuffer w;
    w.color = Image::zeros(k, cam.width, cam.height);
    w.color.data = random_vector(w.color.data.size(), rng);
    w.alpha = random_vector(w.color.plane_size(), rng);
    const auto objective = [&] {
        const FrameBuffer fb = render(cloud, cam, settings);
        return dot(fb.color.data, w.color.data) + dot(fb.alpha, w.alpha);
    };
    const CloudGradients g = render_backward(cloud, cam, settings, w);
    const std::pair<const char*, std::pair<std::vector<double>*, const std::vector<double>*>> groups[] = {
        {"render/positions", {&cloud.positions, &g.positions}}, {"render/rotations", {&cloud.rotations, &g.rotations}},
        {"render/scales", {&cloud.scales, &g.scales}},          {"render/opacities", {&cloud.opacities, &g.opacities}},
        {"render/features", {&cloud.features, &g.features}}};
    for (const auto& [name, arrays] : groups) {
        const auto numeric = numeric_gradient({std::span<double>(*arrays.first)}, objective, 1e-6);
        out.push_back({name, rel_error(*arrays.second, numeric), 1e-3});
    }
}

void lifting_checks(std::uint64_t seed, std::vector<GradCheck>& out) {
    std::mt19937_64 rng(seed);
    const int k = 4, res = 8;
    LiftingGrids grids = LiftingGrids::zeros(res, k);
    const std::size_t rec = grids.record_size();
    std::uniform_real_distribution<double> log_scale(std::log(0.01), std::log(0.2));
    for (auto* sheet : {&grids.front, &grids.back}) {
        *sheet = random_vector(sheet->size(), rng, -1.5, 1.5);
        for (std::size_t p = 0; p < grids.pixels(); ++p)
            for (int a = 0; a < 3; ++a) (*sheet)[p * rec + 1 + k + 1 + a] = log_scale(rng);
    }
    const LiftingPlane plane = plane_through_origin(fixture_camera(32, 32), res, 1.0);
    const CloudGradients w = random_cloud_weights(2 * grids.pixels(), k, rng);
    const auto objective = [&] { return cloud_objective(assemble_dual_lift(grids, plane), w, true); };
    const LiftingGrids g = assemble_dual_lift_backward(grids, plane, w);
    std::vector<double> analytic = g.front;
    append(analytic, g.back);
    const auto numeric = numeric_gradient({std::span<double>(grids.front), std::span<double>(grids.back)}, objective, 1e-6);
    out.push_back({"assemble_dual_lift", rel_error(analytic, numeric), 1e-5});
}

void decoder_checks(std::uint64_t seed, std::vector<GradCheck>& out) {
    for (const DecoderMode mode : {DecoderMode::affine, DecoderMode::conv}) {
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(mode));
        Decoder d = Decoder::create(mode, seed, 4, 3);
        for (auto* v : {&d.affine, &d.bias, &d.conv1, &d.conv1_bias, &d.conv2, &d.conv2_bias})
            *v = random_vector(v->size(), rng, -0.5, 0.5);
        Image f = Image::zeros(4, 7, 6);
        f.data = random_vector(f.data.size(), rng);
        Image w = Image::zeros(3, 7, 6);
        w.data = random_vector(w.data.size(), rng);
        const auto objective = [&] { return dot(decode(d, f).data, w.data); };
        const DecoderGradients g = decode_backward(d, f, w);
        std::vector<double> analytic;
        for (const auto* v : {&g.weights.affine, &g.weights.bias, &g.weights.conv1, &g.weights.conv1_bias,
                              &g.weights.conv2, &g.weights.conv2_bias})
            append(analytic, *v);
        append(analytic, g.features.data);
        std::vector<std::span<double>> blocks;
        for (auto* v : {&d.affine, &d.bias, &d.conv1, &d.conv1_bias, &d.conv2, &d.conv2_bias}) blocks.emplace_back(*v);
        blocks.emplace_back(f.data);
        const auto numeric = numeric_gradient(blocks, objective, 1e-6);
        out.push_back({"decode/" + to_string(mode), rel_error(analytic, numeric), 1e-5});
    }
}

std::vector<std::span<double>> head_blocks(ExpressionHead& head) {
    std::vector<std::span<double>> blocks;
    for (auto& l : head.layers) {
        blocks.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
        blocks.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    return blocks;
}

void head_checks(std::uint64_t seed, std::vector<GradCheck>& out) {
    std::mt19937_64 rng(seed);
    ExpressionHead head = ExpressionHead::create({7, 5, 3, 12}, seed);
    for (auto& l : head.layers) l.bias = Eigen::Map<Eigen::VectorXd>(random_vector(l.bias.size(), rng).data(), l.bias.size());
    auto in_vec = random_vector(7, rng);
    Eigen::Map<Eigen::VectorXd> input(in_vec.data(), 7);
    const auto wv = random_vector(12, rng);
    const Eigen::Map<const Eigen::VectorXd> w(wv.data(), 12);
    const auto objective = [&] { return head_forward(head, input).dot(w); };
    const HeadGradients g = head_backward(head, input, w);
    std::vector<double> analytic;
    for (const auto& l : g.layers) {
        append(analytic, {l.weight.data(), static_cast<std::size_t>(l.weight.size())});
        append(analytic, {l.bias.data(), static_cast<std::size_t>(l.bias.size())});
    }
    append(analytic, {g.input.data(), static_cast<std::size_t>(g.input.size())});
    auto blocks = head_blocks(head);
    blocks.emplace_back(in_vec);
    out.push_back({"head_forward", rel_error(analytic, numeric_gradient(blocks, objective, 1e-6)), 1e-5});

    // Through the attribute activations, with the bank.
    const int k = 4;
    VertexFeatureBank bank = VertexFeatureBank::random(5, seed, 0.8, 4, 3);
    ExpressionHead eh = ExpressionHead::create({7, 6, 3, k + 8}, seed + 1);
    eh.layers.back().bias[k + 1] = eh.layers.back().bias[k + 2] = eh.layers.back().bias[k + 3] = std::log(0.05);
    const auto verts = random_vector(15, rng);
    const CloudGradients cw = random_cloud_weights(5, k, rng);
    const auto expr_objective = [&] {
        return cloud_objective(position_expression_cloud(compute_expression_attributes(bank, eh), verts), cw, false);
    };
    const ExpressionGradients eg =
        expression_backward(bank, eh, compute_expression_attributes(bank, eh, true), cw);
    std::vector<double> ea = eg.bank.per_vertex;
    append(ea, eg.bank.global_feature);
    for (const auto& l : eg.head) {
        append(ea, {l.weight.data(), static_cast<std::size_t>(l.weight.size())});
        append(ea, {l.bias.data(), static_cast<std::size_t>(l.bias.size())});
    }
    std::vector<std::span<double>> eblocks{bank.per_vertex, bank.global_feature};
    for (auto b : head_blocks(eh)) eblocks.push_back(b);
    out.push_back({"expression_branch", rel_error(ea, numeric_gradient(eblocks, expr_objective, 1e-6)), 1e-5});
}

void blendshape_checks(std::uint64_t seed, std::vector<GradCheck>& out) {
    std::mt19937_64 rng(seed);
    ToyModelOptions mo;
    mo.seed = seed;
    mo.vertices = 30;
    mo.n_beta = 4;
    mo.n_theta = 3;
    mo.n_psi = 5;
    const BlendshapeModel model = generate_toy_model(mo);
    ExpressionParams p{random_vector(4, rng), random_vector(3, rng), random_vector(5, rng)};
    const auto w = random_vector(90, rng);
    const auto objective = [&] { return dot(evaluate(model, p), w); };
    const ExpressionParams g = evaluate_backward(model, p, w);
    std::vector<double> analytic = g.beta;
    append(analytic, g.theta);
    append(analytic, g.psi);
    const auto numeric = numeric_gradient({std::span<double>(p.beta), std::span<double>(p.theta), std::span<double>(p.psi)},
                                          objective, 1e-6);
    out.push_back({"blendshape_evaluate", rel_error(analytic, numeric), 1e-5});
}

void loss_checks(std::uint64_t seed, std::vector<GradCheck>& out) {
    std::mt19937_64 rng(seed);
    Image a = Image::zeros(3, 16, 12), t = Image::zeros(3, 16, 12);
    a.data = random_vector(a.data.size(), rng, 0.0, 1.0);
    t.data = random_vector(t.data.size(), rng, 0.0, 1.0);
    {
        const auto g = l1_image_loss(a, t).grad;
        const auto numeric =
            numeric_gradient({std::span<double>(a.data)}, [&] { return l1_image_loss(a, t).value; }, 1e-7);
        out.push_back({"loss/l1", rel_error(g.data, numeric), 1e-5});
    }
    {
        const auto g = pyramid_loss(a, t).grad;
        const auto numeric =
            numeric_gradient({std::span<double>(a.data)}, [&] { return pyramid_loss(a, t).value; }, 1e-7);
        out.push_back({"loss/pyramid", rel_error(g.data, numeric), 1e-5});
    }
    auto verts = random_vector(60, rng);
    auto points = random_vector(300, rng);
    {
        const auto g = lifting_distance_loss(verts, points).grad_positions;
        const auto numeric = numeric_gradient({std::span<double>(points)},
                                              [&] { return lifting_distance_loss(verts, points).value; }, 1e-6);
        out.push_back({"loss/lifting", rel_error(g, numeric), 1e-5});
    }
    {
        Image coarse = Image::zeros(5, 16, 12), fine = Image::zeros(3, 16, 12);
        coarse.data = random_vector(coarse.data.size(), rng, 0.0, 1.0);
        fine.data = random_vector(fine.data.size(), rng, 0.0, 1.0);
        const LossWeights lw{0.7, 0.3};
        const TotalLoss tl = total_loss(coarse, fine, t, verts, points, lw);
        std::vector<double> analytic = tl.grad_coarse.data;
        append(analytic, tl.grad_fine.data);
        append(analytic, tl.grad_positions);
        const auto numeric = numeric_gradient(
            {std::span<double>(coarse.data), std::span<double>(fine.data), std::span<double>(points)},
            [&] { return total_loss(coarse, fine, t, verts, points, lw).parts.total; }, 1e-7);
        out.push_back({"loss/total", rel_error(analytic, numeric), 1e-5});
    }
}

}  // namespace

std::vector<GradCheck> gradient_suite(std::uint64_t seed) {
    std::vector<GradCheck> out;
    renderer_checks(seed, out);
    lifting_checks(seed, out);
    decoder_checks(seed, out);
    head_checks(seed, out);
    blendshape_checks(seed, out);
    loss_checks(seed, out);
    return out;
}

}  // namespace gaga::testing
