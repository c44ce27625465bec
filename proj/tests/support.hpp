#pragma once

// Reference implementations and finite-difference checks shared by the unit
// tests and the acceptance runner. Everything here is written independently
// of the library internals and favours clarity over speed.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gaga/camera.hpp"
#include "gaga/decoder.hpp"
#include "gaga/gaussian_cloud.hpp"
#include "gaga/image.hpp"
#include "gaga/rasterizer.hpp"

namespace gaga::testing {

/// Per-pixel brute force over every splat, sorted by view depth.
[[nodiscard]] FrameBuffer oracle_render(const GaussianCloud& cloud, const Camera& camera,
                                        const RenderSettings& settings = {});

/// Direct 3x3 convolution with clamped indexing.
[[nodiscard]] Image oracle_decode(const Decoder& decoder, const Image& features);

/// O(N) nearest neighbour; ties go to the lower index.
[[nodiscard]] std::pair<std::size_t, double> linear_nearest(std::span<const double> points, const double* query);

[[nodiscard]] double max_abs_diff(std::span<const double> a, std::span<const double> b);

/// |a - b| / max(|a|, |b|) over whole vectors; 0 when both vanish.
[[nodiscard]] double rel_error(std::span<const double> analytic, std::span<const double> numeric);

/// Random splats in front of `camera` with opacities in [0.2, 0.7].
[[nodiscard]] GaussianCloud fixture_cloud(std::size_t count, int channels, const Camera& camera, std::uint64_t seed,
                                          double pixel_scale = 2.0);

/// Camera on +z looking at the origin.
[[nodiscard]] Camera fixture_camera(int width, int height, double fov_deg = 50.0);

/// Minimal PLY parser (ascii header, binary_little_endian body).
struct PlyData {
    std::string format;
    std::size_t count = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;  // one per vertex, in property order
};

/// Throws std::runtime_error on anything it does not understand.
[[nodiscard]] PlyData read_ply(const std::string& path);

/// Byte range of each named section of a GAGM/GAGA container, parsed
/// straight from the header.
struct SectionRange {
    std::string name;
    std::size_t begin = 0;
    std::size_t end = 0;
};
[[nodiscard]] std::vector<SectionRange> container_sections(std::span<const std::uint8_t> bytes);

struct GradCheck {
    std::string name;
    double error = 0.0;
    double tolerance = 0.0;
    [[nodiscard]] bool pass() const { return error <= tolerance; }
};

/// Every analytic gradient in the library against central differences.
[[nodiscard]] std::vector<GradCheck> gradient_suite(std::uint64_t seed);

}  // namespace gaga::testing
