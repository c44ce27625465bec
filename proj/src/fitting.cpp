#include "gaga/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>

#include "gaga/errors.hpp"

namespace gaga {

void Avatar::validate(const BlendshapeModel* model) const {
    grids.validate();
    if (!(plane_extent > 0.0) || !std::isfinite(plane_extent))
        throw std::invalid_argument("plane extent must be positive");
    const std::size_t vertices = model ? model->num_vertices() : bank.num_vertices();
    bank.validate(vertices);
    head.validate();
    if (head.input_dim() != bank.vertex_dim + bank.global_dim)
        throw std::invalid_argument("head input width does not match the feature bank");
    if (head.output_dim() != grids.channels + 8)
        throw std::invalid_argument("head output width must be channels + 8");
    decoder.validate();
    if (decoder.in_channels != grids.channels)
        throw std::invalid_argument("decoder input channels do not match the lifting grids");
    source_camera.validate();
    if (model && identity_beta.size() != model->n_beta)
        throw std::invalid_argument("identity shape has " + std::to_string(identity_beta.size()) +
                                    " coefficients, model expects " + std::to_string(model->n_beta));
    for (const double b : identity_beta)
        if (!std::isfinite(b)) throw std::invalid_argument("identity shape contains non-finite values");
}

std::vector<std::span<double>> parameter_blocks(Avatar& a) {
    std::vector<std::span<double>> blocks{a.grids.front, a.grids.back, a.bank.per_vertex, a.bank.global_feature};
    for (auto& l : a.head.layers) {
        blocks.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
        blocks.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    for (auto* v : {&a.decoder.affine, &a.decoder.bias, &a.decoder.conv1, &a.decoder.conv1_bias, &a.decoder.conv2,
                    &a.decoder.conv2_bias})
        blocks.emplace_back(*v);
    return blocks;
}

Avatar zeros_like(const Avatar& avatar) {
    Avatar z = avatar;
    for (auto block : parameter_blocks(z)) std::fill(block.begin(), block.end(), 0.0);
    return z;
}

void quantize_to_float(Avatar& avatar) {
    for (auto block : parameter_blocks(avatar))
        for (double& x : block) x = static_cast<double>(static_cast<float>(x));
    for (double& x : avatar.identity_beta) x = static_cast<double>(static_cast<float>(x));
}

namespace {

// Small output weights and fixed biases so the expression splats start
// faint and point-sized.
void calibrate_output_layer(ExpressionHead& head, int channels, double opacity, double scale, double weight_gain) {
    auto& last = head.layers.back();
    last.weight *= weight_gain;
    const auto k = static_cast<Eigen::Index>(channels);
    last.bias.setZero();
    last.bias[k] = activation::logit(opacity);
    for (Eigen::Index c = 1; c <= 3; ++c) last.bias[k + c] = std::log(scale);
    last.bias[k + 4] = 1.0;
}

}  // namespace

Avatar init_avatar(const BlendshapeModel& model, const Camera& source_camera, const AvatarInit& init,
                   std::uint64_t seed) {
    model.validate();
    source_camera.validate();
    const int channels = init.head.output - 8;
    if (channels < 3) throw std::invalid_argument("head output must carry at least 3 feature channels");
    if (init.head.input != init.vertex_dim + init.global_dim)
        throw std::invalid_argument("head input width must equal vertex_dim + global_dim");
    Avatar a;
    a.grids = init_lifting_grids(init.grid_res, init.extent, seed, channels);
    a.source_camera = source_camera;
    a.plane_extent = init.extent;
    a.bank = VertexFeatureBank::random(model.num_vertices(), seed + 1, init.bank_stddev, init.vertex_dim,
                                       init.global_dim);
    a.freeze_global = init.freeze_global;
    if (a.freeze_global) std::fill(a.bank.global_feature.begin(), a.bank.global_feature.end(), 0.0);
    a.head = ExpressionHead::create(init.head, seed + 2);
    calibrate_output_layer(a.head, channels, 0.1, 0.05, 0.1);
    a.decoder = Decoder::create(init.decoder, seed + 3, channels);
    a.identity_beta.assign(model.n_beta, 0.0);
    a.model_hash = model_hash(model);
    return a;
}

std::vector<std::size_t> TargetSet::indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].split == split) out.push_back(i);
    return out;
}

void TargetSet::validate(int resolution) const {
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& t = items[i];
        const std::string where = "target " + std::to_string(i) + ": ";
        if (t.image.channels != 3) throw std::invalid_argument(where + "image must be RGB");
        if (t.image.data.size() != 3 * t.image.plane_size()) throw std::invalid_argument(where + "image data size");
        t.camera.validate();
        if (t.camera.width != t.image.width || t.camera.height != t.image.height)
            throw std::invalid_argument(where + "camera size does not match image size");
        if (resolution > 0 && (t.image.width != resolution || t.image.height != resolution))
            throw std::invalid_argument(where + "image is " + std::to_string(t.image.width) + "x" +
                                        std::to_string(t.image.height) + ", expected " + std::to_string(resolution));
    }
}

void adam_step(AdamState& state, std::span<const std::span<double>> params, std::span<const std::span<double>> grads,
               const AdamConfig& config) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter/gradient block count mismatch");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam: state does not match parameters");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto p = params[b];
        auto g = grads[b];
        if (p.size() != g.size() || p.size() != state.m[b].size())
            throw std::invalid_argument("adam: block " + std::to_string(b) + " size mismatch");
        double* m = state.m[b].data();
        double* v = state.v[b].data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            p[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.eps);
        }
    }
}

void FitConfig::validate() const {
    if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
        throw std::invalid_argument("Adam betas must lie in [0, 1)");
    if (!(adam.eps > 0.0)) throw std::invalid_argument("Adam eps must be positive");
    if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
    if (batch < 1) throw std::invalid_argument("batch size must be at least 1");
    if (resolution < 1) throw std::invalid_argument("resolution must be positive");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip norm must be positive");
    weights.validate();
    render.validate();
}

AvatarRender render_avatar(const Avatar& avatar, const BlendshapeModel& model, const ExpressionParams& params,
                           const Camera& camera, const RenderSettings& settings) {
    params.check_against(model);
    AvatarRender out;
    GaussianCloud dual = assemble_dual_lift(avatar.grids, avatar.plane());
    out.dual_count = dual.size();
    const auto attrs = compute_expression_attributes(avatar.bank, avatar.head);
    out.cloud = merge_clouds(dual, position_expression_cloud(attrs, evaluate(model, params)));
    out.coarse = render(out.cloud, camera, settings);
    out.fine = decode(avatar.decoder, out.coarse.color);
    return out;
}

StepResult evaluate_target(const Avatar& avatar, const BlendshapeModel& model, const TargetItem& target,
                           const LossWeights& weights, const RenderSettings& settings, bool with_gradients) {
    target.params.check_against(model);
    const LiftingPlane plane = avatar.plane();
    const GaussianCloud dual = assemble_dual_lift(avatar.grids, plane);
    const auto attrs = compute_expression_attributes(avatar.bank, avatar.head, with_gradients);
    const auto vertices = evaluate(model, target.params);
    const GaussianCloud cloud = merge_clouds(dual, position_expression_cloud(attrs, vertices));

    StepResult out;
    out.coarse = render(cloud, target.camera, settings);
    out.fine = decode(avatar.decoder, out.coarse.color);
    TotalLoss loss = total_loss(out.coarse.color, out.fine, target.image, vertices, dual.positions, weights);
    out.loss = loss.parts;
    if (!with_gradients) return out;

    DecoderGradients dec = decode_backward(avatar.decoder, out.coarse.color, loss.grad_fine);
    FrameBuffer upstream;
    upstream.color = std::move(dec.features);
    for (std::size_t i = 0; i < upstream.color.data.size(); ++i) upstream.color.data[i] += loss.grad_coarse.data[i];
    const CloudGradients cg = render_backward(cloud, target.camera, settings, upstream);

    CloudGradients dual_grad = cg.slice(0, dual.size());
    if (!loss.grad_positions.empty())
        for (std::size_t i = 0; i < dual_grad.positions.size(); ++i) dual_grad.positions[i] += loss.grad_positions[i];
    const CloudGradients expr_grad = cg.slice(dual.size(), cloud.size() - dual.size());

    out.grads = zeros_like(avatar);
    out.grads.grids = assemble_dual_lift_backward(avatar.grids, plane, dual_grad);
    ExpressionGradients eg = expression_backward(avatar.bank, avatar.head, attrs, expr_grad);
    out.grads.bank = std::move(eg.bank);
    if (avatar.freeze_global) std::fill(out.grads.bank.global_feature.begin(), out.grads.bank.global_feature.end(), 0.0);
    for (std::size_t l = 0; l < eg.head.size(); ++l) out.grads.head.layers[l] = std::move(eg.head[l]);
    out.grads.decoder = std::move(dec.weights);
    return out;
}

FitResult fit_avatar(const BlendshapeModel& model, const TargetSet& targets, const FitConfig& config,
                     const Avatar& initial, const FitObserver& observer) {
    config.validate();
    model.validate();
    initial.validate(&model);
    targets.validate(config.resolution);
    const auto train = targets.indices(Split::train);
    if (train.empty()) throw std::invalid_argument("target set has no training views");

    FitResult result{initial, {}};
    if (config.iterations == 0) return result;
    Avatar& avatar = result.avatar;
    AdamState adam;
    std::mt19937_64 rng(config.seed);
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    const double inv_batch = 1.0 / config.batch;

    for (int it = 0; it < config.iterations; ++it) {
        Avatar grads;
        LossBreakdown mean{};
        for (int b = 0; b < config.batch; ++b) {
            const auto& target = targets.items[train[pick(rng)]];
            StepResult step = evaluate_target(avatar, model, target, config.weights, config.render, true);
            if (!std::isfinite(step.loss.total))
                throw NumericError("loss became non-finite at iteration " + std::to_string(it) +
                                   " (l1_coarse=" + std::to_string(step.loss.l1_coarse) +
                                   ", l1_fine=" + std::to_string(step.loss.l1_fine) +
                                   ", pyramid=" + std::to_string(step.loss.pyramid) +
                                   ", lifting=" + std::to_string(step.loss.lifting) + ")");
            mean.total += step.loss.total * inv_batch;
            mean.l1_coarse += step.loss.l1_coarse * inv_batch;
            mean.l1_fine += step.loss.l1_fine * inv_batch;
            mean.pyramid += step.loss.pyramid * inv_batch;
            mean.lifting += step.loss.lifting * inv_batch;
            if (b == 0) {
                grads = std::move(step.grads);
                if (config.batch > 1)
                    for (auto block : parameter_blocks(grads))
                        for (double& g : block) g *= inv_batch;
            } else {
                auto dst = parameter_blocks(grads);
                auto src = parameter_blocks(step.grads);
                for (std::size_t k = 0; k < dst.size(); ++k)
                    for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] += src[k][i] * inv_batch;
            }
        }

        auto grad_blocks = parameter_blocks(grads);
        double norm2 = 0.0;
        for (const auto block : grad_blocks)
            for (const double g : block) norm2 += g * g;
        if (!std::isfinite(norm2))
            throw NumericError("gradient became non-finite at iteration " + std::to_string(it));
        const double norm = std::sqrt(norm2);
        if (norm > config.clip_norm) {
            const double s = config.clip_norm / norm;
            for (auto block : grad_blocks)
                for (double& g : block) g *= s;
        }
        adam_step(adam, parameter_blocks(avatar), grad_blocks, config.adam);

        LossRecord record{it, mean};
        result.history.push_back(record);
        if (observer && !observer(record)) break;
    }
    quantize_to_float(avatar);
    return result;
}

double mean_l1(const Avatar& avatar, const BlendshapeModel& model, const TargetSet& targets, Split split,
               const RenderSettings& settings) {
    const auto idx = targets.indices(split);
    if (idx.empty()) throw std::invalid_argument("split has no targets");
    double sum = 0.0;
    for (const auto i : idx) {
        const auto& t = targets.items[i];
        const auto r = render_avatar(avatar, model, t.params, t.camera, settings);
        sum += l1_image_loss(r.fine, t.image).value;
    }
    return sum / static_cast<double>(idx.size());
}

double mean_vertex_lift_distance(const Avatar& avatar, const BlendshapeModel& model, const ExpressionParams& params) {
    params.check_against(model);
    const auto vertices = evaluate(model, params);
    const GaussianCloud dual = assemble_dual_lift(avatar.grids, avatar.plane());
    const KdTree tree(dual.positions);
    double sum = 0.0;
    const std::size_t v = vertices.size() / 3;
    for (std::size_t i = 0; i < v; ++i) sum += std::sqrt(tree.nearest(&vertices[i * 3]).distance2);
    return sum / static_cast<double>(v);
}

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "iteration,total,l1_coarse,l1_fine,pyramid,lifting\n";
    out.precision(9);
    for (const auto& r : history)
        out << r.iteration << ',' << r.parts.total << ',' << r.parts.l1_coarse << ',' << r.parts.l1_fine << ','
            << r.parts.pyramid << ',' << r.parts.lifting << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace gaga
