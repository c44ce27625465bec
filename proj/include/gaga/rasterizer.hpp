#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gaga/camera.hpp"
#include "gaga/gaussian_cloud.hpp"
#include "gaga/image.hpp"

namespace gaga {

struct FrameBuffer {
    Image color;                // K channels
    std::vector<double> alpha;  // H*W, 1 - final transmittance
};

struct RenderSettings {
    int tile_size = 16;
    double near_plane = 0.05;
    std::vector<double> background;  // empty means zeros
    double transmittance_floor = 1e-4;
    double low_pass = 0.3;
    double max_alpha = 0.99;
    double cutoff_sigma = 3.0;

    void validate() const;
};

/// Wall-clock split of one render, milliseconds.
struct RenderStats {
    double clear_ms = 0.0;
    double cull_ms = 0.0;  // projection + frustum/near culling
    double sort_ms = 0.0;
    double bin_ms = 0.0;
    double blend_ms = 0.0;
    std::size_t visible = 0;
    std::size_t pairs = 0;
};

/// Concatenation of a and b (a first).
[[nodiscard]] GaussianCloud merge_clouds(const GaussianCloud& a, const GaussianCloud& b);

/// Tile-based EWA splatting of a K-channel cloud. Gaussians are sorted
/// front-to-back by view depth over the whole frame (ties by index) and
/// composited with alpha = min(max_alpha, o * exp(-d^2 / 2)) inside the
/// cutoff_sigma Mahalanobis radius.
[[nodiscard]] FrameBuffer render(const GaussianCloud& cloud, const Camera& camera, const RenderSettings& settings,
                                 RenderStats* stats = nullptr);

/// Exact gradients of `render` given upstream gradients on colour and alpha
/// (an empty alpha vector means zero).
[[nodiscard]] CloudGradients render_backward(const GaussianCloud& cloud, const Camera& camera,
                                             const RenderSettings& settings, const FrameBuffer& grad);

struct BenchReport {
    std::size_t frames = 0;
    std::size_t gaussians = 0;
    int width = 0;
    int height = 0;
    int channels = 0;
    double fps = 0.0;
    double ms_per_frame = 0.0;
    RenderStats mean;  // per-frame averages

    [[nodiscard]] std::string to_json() const;
};

/// Isotropic-ish random splats inside a ball of `radius` around the origin.
[[nodiscard]] GaussianCloud random_cloud(std::size_t count, int channels, std::uint64_t seed, double radius = 0.8,
                                         double scale = 0.01);

[[nodiscard]] BenchReport bench(const GaussianCloud& cloud, const Camera& camera, const RenderSettings& settings,
                                std::size_t frames);

}  // namespace gaga
