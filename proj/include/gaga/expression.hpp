#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gaga/gaussian_cloud.hpp"
#include "gaga/head_model.hpp"

namespace gaga {

/// Learnable per-vertex features plus the avatar-wide identity feature.
struct VertexFeatureBank {
    int vertex_dim = 256;
    int global_dim = 768;
    std::vector<double> per_vertex;      // V*vertex_dim
    std::vector<double> global_feature;  // global_dim

    [[nodiscard]] std::size_t num_vertices() const noexcept {
        return vertex_dim > 0 ? per_vertex.size() / static_cast<std::size_t>(vertex_dim) : 0;
    }
    [[nodiscard]] static VertexFeatureBank zeros(std::size_t vertices, int vertex_dim = 256, int global_dim = 768);
    [[nodiscard]] static VertexFeatureBank random(std::size_t vertices, std::uint64_t seed, double stddev,
                                                  int vertex_dim = 256, int global_dim = 768);
    void validate(std::size_t expected_vertices) const;
};

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
};

struct HeadShape {
    int input = 1024;
    int hidden = 256;
    int layers = 6;
    int output = 40;
};

/// Fully connected head mapping [global | vertex] features to a raw
/// attribute record. tanh between layers, linear output.
struct ExpressionHead {
    std::vector<DenseLayer> layers;

    [[nodiscard]] int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
    [[nodiscard]] int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }
    [[nodiscard]] std::size_t parameter_count() const;

    /// Glorot-uniform weights, zero biases except the rotation-w output (1).
    [[nodiscard]] static ExpressionHead create(const HeadShape& shape, std::uint64_t seed);
    [[nodiscard]] static ExpressionHead zeros(const HeadShape& shape);
    void validate() const;
};

[[nodiscard]] Eigen::VectorXd head_forward(const ExpressionHead& head, const Eigen::VectorXd& input);

struct HeadGradients {
    std::vector<DenseLayer> layers;
    Eigen::VectorXd input;
};

[[nodiscard]] HeadGradients head_backward(const ExpressionHead& head, const Eigen::VectorXd& input,
                                          const Eigen::VectorXd& grad_output);

/// Per-vertex raw head outputs (output_dim x V) and, when requested, the
/// hidden activations needed by expression_backward.
struct ExpressionAttributes {
    Eigen::MatrixXd raw;
    std::vector<Eigen::MatrixXd> hidden;
    int channels = kFeatureDim;
};

[[nodiscard]] ExpressionAttributes compute_expression_attributes(const VertexFeatureBank& bank,
                                                                 const ExpressionHead& head, bool keep_hidden = false);

/// Places the cached attributes at the given vertex positions (V*3).
[[nodiscard]] GaussianCloud position_expression_cloud(const ExpressionAttributes& attributes,
                                                      std::span<const double> vertices);

/// Gaussians anchored at evaluate(model, params) with head-predicted attributes.
[[nodiscard]] GaussianCloud expression_gaussians(const BlendshapeModel& model, const ExpressionParams& params,
                                                 const VertexFeatureBank& bank, const ExpressionHead& head);

struct ExpressionGradients {
    VertexFeatureBank bank;
    std::vector<DenseLayer> head;
};

/// Gradients of the expression attributes with respect to bank and head.
/// `attributes` must come from compute_expression_attributes(..., true).
/// Position gradients are ignored: positions come from the tracked model.
[[nodiscard]] ExpressionGradients expression_backward(const VertexFeatureBank& bank, const ExpressionHead& head,
                                                      const ExpressionAttributes& attributes,
                                                      const CloudGradients& grad);

[[nodiscard]] std::uint64_t content_hash(const VertexFeatureBank& bank);
[[nodiscard]] std::uint64_t content_hash(const ExpressionHead& head);

/// Content-addressed store of attribute sets; lookups may run concurrently
/// while one thread inserts.
class AttributeCache {
public:
    [[nodiscard]] std::shared_ptr<const ExpressionAttributes> get_or_compute(const VertexFeatureBank& bank,
                                                                           const ExpressionHead& head,
                                                                           std::uint64_t key);
    [[nodiscard]] std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::uint64_t, std::shared_ptr<const ExpressionAttributes>> entries_;
};

}  // namespace gaga
