#include "gaga/expression.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "container.hpp"

namespace gaga {

VertexFeatureBank VertexFeatureBank::zeros(std::size_t vertices, int vertex_dim, int global_dim) {
    VertexFeatureBank bank;
    bank.vertex_dim = vertex_dim;
    bank.global_dim = global_dim;
    bank.per_vertex.assign(vertices * static_cast<std::size_t>(vertex_dim), 0.0);
    bank.global_feature.assign(static_cast<std::size_t>(global_dim), 0.0);
    return bank;
}

VertexFeatureBank VertexFeatureBank::random(std::size_t vertices, std::uint64_t seed, double stddev, int vertex_dim,
                                            int global_dim) {
    VertexFeatureBank bank = zeros(vertices, vertex_dim, global_dim);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, stddev);
    for (double& x : bank.per_vertex) x = normal(rng);
    for (double& x : bank.global_feature) x = normal(rng);
    return bank;
}

void VertexFeatureBank::validate(std::size_t expected_vertices) const {
    if (per_vertex.size() != expected_vertices * static_cast<std::size_t>(vertex_dim))
        throw std::invalid_argument("feature bank holds " + std::to_string(num_vertices()) + " vertices, model has " +
                                    std::to_string(expected_vertices));
    if (global_feature.size() != static_cast<std::size_t>(global_dim))
        throw std::invalid_argument("global feature length mismatch");
    for (const auto* v : {&per_vertex, &global_feature})
        for (const double x : *v)
            if (!std::isfinite(x)) throw std::invalid_argument("feature bank contains non-finite values");
}

std::size_t ExpressionHead::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

ExpressionHead ExpressionHead::zeros(const HeadShape& shape) {
    if (shape.layers < 1) throw std::invalid_argument("head needs at least one layer");
    ExpressionHead head;
    for (int l = 0; l < shape.layers; ++l) {
        const int in = l == 0 ? shape.input : shape.hidden;
        const int out = l + 1 == shape.layers ? shape.output : shape.hidden;
        head.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    }
    return head;
}

ExpressionHead ExpressionHead::create(const HeadShape& shape, std::uint64_t seed) {
    ExpressionHead head = zeros(shape);
    std::mt19937_64 rng(seed);
    for (auto& layer : head.layers) {
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = uniform(rng);
    }
    // Rotation block ends the output record; start near the identity.
    if (shape.output >= 4) head.layers.back().bias(shape.output - 4) = 1.0;
    return head;
}

void ExpressionHead::validate() const {
    if (layers.empty()) throw std::invalid_argument("expression head has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.bias.size() != layer.weight.rows()) throw std::invalid_argument("head bias/weight mismatch");
        if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows())
            throw std::invalid_argument("head layer " + std::to_string(l) + " input size mismatch");
        if (!layer.weight.allFinite() || !layer.bias.allFinite())
            throw std::invalid_argument("head weights contain non-finite values");
    }
}

Eigen::VectorXd head_forward(const ExpressionHead& head, const Eigen::VectorXd& input) {
    if (input.size() != head.input_dim())
        throw std::invalid_argument("head input has " + std::to_string(input.size()) + " values, expected " +
                                    std::to_string(head.input_dim()));
    Eigen::VectorXd x = input;
    for (std::size_t l = 0; l < head.layers.size(); ++l) {
        x = head.layers[l].weight * x + head.layers[l].bias;
        if (l + 1 < head.layers.size()) x = x.array().tanh().matrix();
    }
    return x;
}

HeadGradients head_backward(const ExpressionHead& head, const Eigen::VectorXd& input, const Eigen::VectorXd& grad_output) {
    if (input.size() != head.input_dim()) throw std::invalid_argument("head input dimension mismatch");
    if (grad_output.size() != head.output_dim()) throw std::invalid_argument("head output gradient dimension mismatch");
    const std::size_t n = head.layers.size();
    std::vector<Eigen::VectorXd> acts{input};
    for (std::size_t l = 0; l + 1 < n; ++l)
        acts.push_back((head.layers[l].weight * acts.back() + head.layers[l].bias).array().tanh().matrix());
    HeadGradients out;
    out.layers.resize(n);
    Eigen::VectorXd delta = grad_output;
    for (std::size_t l = n; l-- > 0;) {
        out.layers[l].weight = delta * acts[l].transpose();
        out.layers[l].bias = delta;
        Eigen::VectorXd back = head.layers[l].weight.transpose() * delta;
        if (l > 0) back.array() *= 1.0 - acts[l].array().square();
        delta = std::move(back);
    }
    out.input = std::move(delta);
    return out;
}

namespace {

void check_bank_head(const VertexFeatureBank& bank, const ExpressionHead& head) {
    if (bank.vertex_dim + bank.global_dim != head.input_dim())
        throw std::invalid_argument("feature bank width " + std::to_string(bank.vertex_dim + bank.global_dim) +
                                    " does not match head input " + std::to_string(head.input_dim()));
}

}  // namespace

ExpressionAttributes compute_expression_attributes(const VertexFeatureBank& bank, const ExpressionHead& head,
                                                   bool keep_hidden) {
    check_bank_head(bank, head);
    const auto v = static_cast<Eigen::Index>(bank.num_vertices());
    const Eigen::Map<const Eigen::MatrixXd> features(bank.per_vertex.data(), bank.vertex_dim, v);
    const Eigen::Map<const Eigen::VectorXd> global(bank.global_feature.data(), bank.global_dim);

    ExpressionAttributes out;
    out.channels = head.output_dim() - 8;
    const auto& first = head.layers.front();
    // The identity feature is shared by every vertex, so its contribution to
    // the first layer is a per-avatar offset.
    const Eigen::VectorXd offset = first.weight.leftCols(bank.global_dim) * global + first.bias;
    Eigen::MatrixXd x = first.weight.rightCols(bank.vertex_dim) * features;
    x.colwise() += offset;
    for (std::size_t l = 1; l < head.layers.size(); ++l) {
        x = x.array().tanh().matrix();
        if (keep_hidden) out.hidden.push_back(x);
        Eigen::MatrixXd next = head.layers[l].weight * x;
        next.colwise() += head.layers[l].bias;
        x = std::move(next);
    }
    out.raw = std::move(x);
    return out;
}

GaussianCloud position_expression_cloud(const ExpressionAttributes& attributes, std::span<const double> vertices) {
    const auto v = static_cast<std::size_t>(attributes.raw.cols());
    if (vertices.size() != v * 3)
        throw std::invalid_argument("vertex count " + std::to_string(vertices.size() / 3) +
                                    " does not match attribute count " + std::to_string(v));
    GaussianCloud cloud;
    cloud.channels = attributes.channels;
    cloud.resize(v);
    const auto width = static_cast<std::size_t>(attributes.raw.rows());
    for (std::size_t i = 0; i < v; ++i) {
        for (int c = 0; c < 3; ++c) cloud.positions[i * 3 + c] = vertices[i * 3 + c];
        activation::decode_attributes({attributes.raw.col(static_cast<Eigen::Index>(i)).data(), width},
                                      attributes.channels, cloud, i);
    }
    return cloud;
}

GaussianCloud expression_gaussians(const BlendshapeModel& model, const ExpressionParams& params,
                                   const VertexFeatureBank& bank, const ExpressionHead& head) {
    bank.validate(model.num_vertices());
    const auto vertices = evaluate(model, params);
    return position_expression_cloud(compute_expression_attributes(bank, head), vertices);
}

ExpressionGradients expression_backward(const VertexFeatureBank& bank, const ExpressionHead& head,
                                        const ExpressionAttributes& attributes, const CloudGradients& grad) {
    check_bank_head(bank, head);
    const auto v = static_cast<Eigen::Index>(bank.num_vertices());
    if (grad.size() != static_cast<std::size_t>(v)) throw std::invalid_argument("expression gradient size mismatch");
    if (attributes.hidden.size() + 1 != head.layers.size())
        throw std::invalid_argument("expression attributes were computed without hidden activations");

    const auto width = static_cast<std::size_t>(attributes.raw.rows());
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(attributes.raw.rows(), v);
    for (Eigen::Index i = 0; i < v; ++i)
        activation::decode_attributes_backward({attributes.raw.col(i).data(), width}, attributes.channels, grad,
                                               static_cast<std::size_t>(i), {delta.col(i).data(), width});

    ExpressionGradients out;
    out.head.resize(head.layers.size());
    for (std::size_t l = head.layers.size(); l-- > 1;) {
        const Eigen::MatrixXd& act = attributes.hidden[l - 1];
        out.head[l].weight = delta * act.transpose();
        out.head[l].bias = delta.rowwise().sum();
        Eigen::MatrixXd back = head.layers[l].weight.transpose() * delta;
        back.array() *= 1.0 - act.array().square();
        delta = std::move(back);
    }
    const Eigen::Map<const Eigen::MatrixXd> features(bank.per_vertex.data(), bank.vertex_dim, v);
    const Eigen::Map<const Eigen::VectorXd> global(bank.global_feature.data(), bank.global_dim);
    const auto& first = head.layers.front();
    const Eigen::VectorXd delta_sum = delta.rowwise().sum();
    out.head[0].weight.resize(first.weight.rows(), first.weight.cols());
    out.head[0].weight.leftCols(bank.global_dim) = delta_sum * global.transpose();
    out.head[0].weight.rightCols(bank.vertex_dim) = delta * features.transpose();
    out.head[0].bias = delta_sum;

    out.bank = VertexFeatureBank::zeros(static_cast<std::size_t>(v), bank.vertex_dim, bank.global_dim);
    Eigen::Map<Eigen::MatrixXd>(out.bank.per_vertex.data(), bank.vertex_dim, v) =
        first.weight.rightCols(bank.vertex_dim).transpose() * delta;
    Eigen::Map<Eigen::VectorXd>(out.bank.global_feature.data(), bank.global_dim) =
        first.weight.leftCols(bank.global_dim).transpose() * delta_sum;
    return out;
}

std::uint64_t content_hash(const VertexFeatureBank& bank) {
    std::uint64_t h = detail::fnv1a_doubles(bank.per_vertex);
    return detail::fnv1a_doubles(bank.global_feature, h ^ static_cast<std::uint64_t>(bank.vertex_dim));
}

std::uint64_t content_hash(const ExpressionHead& head) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& l : head.layers) {
        h = detail::fnv1a_doubles({l.weight.data(), static_cast<std::size_t>(l.weight.size())}, h ^ static_cast<std::uint64_t>(l.weight.rows()));
        h = detail::fnv1a_doubles({l.bias.data(), static_cast<std::size_t>(l.bias.size())}, h);
    }
    return h;
}

std::shared_ptr<const ExpressionAttributes> AttributeCache::get_or_compute(const VertexFeatureBank& bank,
                                                                           const ExpressionHead& head,
                                                                           std::uint64_t key) {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    auto attrs = std::make_shared<const ExpressionAttributes>(compute_expression_attributes(bank, head));
    entries_.emplace(key, attrs);
    return attrs;
}

std::size_t AttributeCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

}  // namespace gaga
