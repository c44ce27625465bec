#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gaga/camera.hpp"
#include "gaga/decoder.hpp"
#include "gaga/expression.hpp"
#include "gaga/head_model.hpp"
#include "gaga/image.hpp"
#include "gaga/lifting.hpp"
#include "gaga/losses.hpp"
#include "gaga/rasterizer.hpp"

namespace gaga {

/// Everything reconstructed once per identity.
struct Avatar {
    LiftingGrids grids;
    Camera source_camera;  // defines the lifting plane; never changes after creation
    double plane_extent = 1.0;
    VertexFeatureBank bank;
    ExpressionHead head;
    Decoder decoder;
    std::vector<double> identity_beta;  // tracked shape coefficients of this identity
    std::uint64_t model_hash = 0;
    bool freeze_global = false;  // keep the identity feature fixed (at zero) during fitting

    [[nodiscard]] LiftingPlane plane() const { return plane_through_origin(source_camera, grids.res, plane_extent); }
    /// Throws std::invalid_argument on any internal inconsistency; checks the
    /// vertex count against `model` when given.
    void validate(const BlendshapeModel* model = nullptr) const;
};

/// Mutable views over every optimised array, in a fixed order.
[[nodiscard]] std::vector<std::span<double>> parameter_blocks(Avatar& avatar);
/// Same shapes as `avatar` with every optimised value zeroed.
[[nodiscard]] Avatar zeros_like(const Avatar& avatar);
/// Rounds every optimised value to the nearest float32 so files round-trip exactly.
void quantize_to_float(Avatar& avatar);

struct AvatarInit {
    int grid_res = 64;
    double extent = 1.0;
    HeadShape head;
    int vertex_dim = 256;
    int global_dim = 768;
    DecoderMode decoder = DecoderMode::affine;
    double bank_stddev = 0.1;
    bool freeze_global = false;
};

/// Fitting starting point for `model` seen from `source_camera`.
[[nodiscard]] Avatar init_avatar(const BlendshapeModel& model, const Camera& source_camera, const AvatarInit& init,
                                 std::uint64_t seed);

enum class Split { train, holdout };

struct TargetItem {
    Image image;  // RGB
    Camera camera;
    ExpressionParams params;
    Split split = Split::train;
};

struct TargetSet {
    std::vector<TargetItem> items;

    [[nodiscard]] std::vector<std::size_t> indices(Split split) const;
    void validate(int resolution) const;
};

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t step = 0;
};

/// One bias-corrected Adam update of every block.
void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<double>> grads, const AdamConfig& config);

struct FitConfig {
    AdamConfig adam;
    int iterations = 2000;
    int batch = 1;
    LossWeights weights;
    std::uint64_t seed = 0;
    int resolution = 128;
    double clip_norm = 10.0;
    RenderSettings render;

    void validate() const;
};

struct LossRecord {
    int iteration = 0;
    LossBreakdown parts;
};

struct FitResult {
    Avatar avatar;
    std::vector<LossRecord> history;
};

/// Per-iteration observer; return false to stop early.
using FitObserver = std::function<bool(const LossRecord&)>;

/// Optimises `initial` against the train split. Iterations == 0 returns the
/// initial avatar unchanged. Throws NumericError on a non-finite loss.
[[nodiscard]] FitResult fit_avatar(const BlendshapeModel& model, const TargetSet& targets, const FitConfig& config,
                                   const Avatar& initial, const FitObserver& observer = {});

/// Full forward pass of one target plus (optionally) all parameter gradients.
struct StepResult {
    LossBreakdown loss;
    FrameBuffer coarse;
    Image fine;
    Avatar grads;  // only filled when requested
};

[[nodiscard]] StepResult evaluate_target(const Avatar& avatar, const BlendshapeModel& model, const TargetItem& target,
                                         const LossWeights& weights, const RenderSettings& settings,
                                         bool with_gradients);

/// Mean fine-image L1 over one split; never touches the avatar.
[[nodiscard]] double mean_l1(const Avatar& avatar, const BlendshapeModel& model, const TargetSet& targets, Split split,
                             const RenderSettings& settings = {});

/// Mean Euclidean distance from each driven model vertex to its nearest
/// dual-lift point.
[[nodiscard]] double mean_vertex_lift_distance(const Avatar& avatar, const BlendshapeModel& model,
                                               const ExpressionParams& params);

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);

/// Coarse feature render and decoded RGB of an avatar, no caching.
struct AvatarRender {
    GaussianCloud cloud;
    std::size_t dual_count = 0;
    FrameBuffer coarse;
    Image fine;
};

[[nodiscard]] AvatarRender render_avatar(const Avatar& avatar, const BlendshapeModel& model,
                                         const ExpressionParams& params, const Camera& camera,
                                         const RenderSettings& settings = {});

// Synthetic ground truth.

struct GroundTruthOptions {
    int grid_res = 64;
    double extent = 1.0;
    HeadShape head;
    int vertex_dim = 256;
    int global_dim = 768;
    DecoderMode decoder = DecoderMode::affine;
};

/// Textured toy head realisable by the avatar family: sheets follow the
/// template mesh depth as seen from `source_camera`, plus noise.
[[nodiscard]] Avatar make_ground_truth_avatar(const BlendshapeModel& model, const Camera& source_camera,
                                              const GroundTruthOptions& options, std::uint64_t seed);

/// Renders every (camera, expression) pair through the full pipeline.
[[nodiscard]] TargetSet synth_targets(const BlendshapeModel& model, const Avatar& ground_truth,
                                      const std::vector<Camera>& cameras,
                                      const std::vector<ExpressionParams>& expressions, Split split,
                                      const RenderSettings& settings = {});

/// Self-contained desk-scale scene: toy model, ground-truth avatar, 8 ring
/// cameras x 3 expressions for training and a handful of holdout views.
struct ToyScene {
    BlendshapeModel model;
    Avatar ground_truth;
    Camera source_camera;
    TargetSet targets;
};

struct ToySceneOptions {
    std::uint64_t seed = 3;
    std::size_t vertices = 256;
    int grid_res = 64;
    int resolution = 128;
    double camera_distance = 4.0;
    double fov_deg = 36.0;
    DecoderMode decoder = DecoderMode::affine;
    /// Yaw span of the training ring. The default frontal half circle
    /// mirrors face video, where the back of the head is never seen.
    double ring_arc_deg = 180.0;
};

/// `count` cameras at pitch 0 spread over `arc_deg` of yaw around the origin.
[[nodiscard]] std::vector<Camera> ring_cameras(int count, double distance, double fov_deg, int resolution,
                                               double arc_deg = 360.0);
[[nodiscard]] ToyScene make_toy_scene(const ToySceneOptions& options);

}  // namespace gaga
