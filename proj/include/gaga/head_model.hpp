#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gaga {

/// Linear blendshape head model: template plus shape, pose-corrective and
/// expression bases. Bases are stored row-major with one row per vertex
/// coordinate, i.e. element (v, c, k) lives at `((v * 3) + c) * n + k`.
struct BlendshapeModel {
    std::vector<double> template_vertices;  // V*3
    std::vector<double> shape_basis;        // V*3*n_beta
    std::vector<double> pose_basis;         // V*3*n_theta
    std::vector<double> expr_basis;         // V*3*n_psi
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::size_t n_beta = 0;
    std::size_t n_theta = 0;
    std::size_t n_psi = 0;
    std::string version_tag = "toy-1";

    [[nodiscard]] std::size_t num_vertices() const noexcept { return template_vertices.size() / 3; }

    /// Throws std::invalid_argument when array sizes, triangle indices or
    /// template geometry are inconsistent.
    void validate() const;

    [[nodiscard]] double bounding_box_diagonal() const;
};

struct ExpressionParams {
    std::vector<double> beta;
    std::vector<double> theta;
    std::vector<double> psi;

    [[nodiscard]] static ExpressionParams zeros(const BlendshapeModel& model);
    void check_against(const BlendshapeModel& model) const;
};

/// T + S*beta + P*theta + E*psi, flattened V*3.
[[nodiscard]] std::vector<double> evaluate(const BlendshapeModel& model, const ExpressionParams& params);

/// Adjoint of `evaluate`: contracts grad_vertices (V*3) against each basis.
[[nodiscard]] ExpressionParams evaluate_backward(const BlendshapeModel& model, const ExpressionParams& params,
                                                 std::span<const double> grad_vertices);

struct ToyModelOptions {
    std::uint64_t seed = 0;
    std::size_t vertices = 1024;
    std::size_t n_beta = 32;
    std::size_t n_theta = 6;
    std::size_t n_psi = 32;
};

/// Procedural head-like ellipsoid with smooth low-frequency bases. Every value
/// is representable in float32, so model files round-trip exactly.
[[nodiscard]] BlendshapeModel generate_toy_model(const ToyModelOptions& options);

/// Unit direction from the head centre towards the mouth region of the toy
/// model; expression column 0 is a bump centred there.
[[nodiscard]] std::array<double, 3> toy_mouth_direction();

// GAGM model files.
[[nodiscard]] std::vector<std::uint8_t> serialize_model(const BlendshapeModel& model);
[[nodiscard]] BlendshapeModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const BlendshapeModel& model, const std::filesystem::path& path);
[[nodiscard]] BlendshapeModel load_model(const std::filesystem::path& path);

/// FNV-1a over the serialized model; avatars reference their model by it.
[[nodiscard]] std::uint64_t model_hash(const BlendshapeModel& model);

}  // namespace gaga
