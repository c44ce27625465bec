#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gaga/fitting.hpp"
#include "gaga/gaussian_cloud.hpp"
#include "gaga/image.hpp"

namespace gaga {

// GAGA avatar files.

/// Provenance stored next to the avatar parameters.
struct AvatarFileInfo {
    std::string model_path;  // where the driving model lived when the avatar was written
    nlohmann::json fit = nlohmann::json::object();  // lambdas, seed, iterations, ...
};

[[nodiscard]] std::vector<std::uint8_t> serialize_avatar(const Avatar& avatar, const AvatarFileInfo& info = {});
[[nodiscard]] Avatar deserialize_avatar(std::span<const std::uint8_t> bytes, AvatarFileInfo* info = nullptr);
void save_avatar(const Avatar& avatar, const std::filesystem::path& path, const AvatarFileInfo& info = {});
[[nodiscard]] Avatar load_avatar(const std::filesystem::path& path, AvatarFileInfo* info = nullptr);

// PNG.

/// Interleaved 8-bit RGB.
struct Rgb8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // width*height*3
};

/// Rounds the first three channels of `image` (clamped to [0, 1]) to bytes.
[[nodiscard]] Rgb8 to_rgb8(const Image& image);
[[nodiscard]] Image from_rgb8(const Rgb8& rgb);

[[nodiscard]] std::vector<std::uint8_t> encode_png(const Rgb8& rgb);
[[nodiscard]] Rgb8 decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const Rgb8& rgb);
[[nodiscard]] Rgb8 read_png(const std::filesystem::path& path);

/// 16-bit single-channel image, e.g. quantized depth.
struct Gray16 {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> pixels;
};

void write_png16(const std::filesystem::path& path, const Gray16& gray);
[[nodiscard]] Gray16 read_png16(const std::filesystem::path& path);

// PLY export.

/// Which part of the avatar each splat came from.
enum class SplatSource : std::uint8_t { front = 0, back = 1, expression = 2 };

/// Binary little-endian PLY with splat-viewer field names. Opacity is written
/// as a logit and scales as logs, as those viewers expect; colours are the
/// first three feature channels mapped from [0, 1] to bytes. Splats with
/// opacity below `opacity_threshold` are skipped. Returns the number written.
std::size_t export_ply(const GaussianCloud& cloud, std::span<const SplatSource> sources,
                       const std::filesystem::path& path, double opacity_threshold);

/// Sources for a dual-lift cloud (front sheet, then back), optionally followed
/// by `expression_count` expression splats.
[[nodiscard]] std::vector<SplatSource> dual_lift_sources(std::size_t dual_count, std::size_t expression_count = 0);

// Target directories: targets.json plus one PNG per view.

void save_targets(const TargetSet& targets, const std::filesystem::path& dir);
[[nodiscard]] TargetSet load_targets(const std::filesystem::path& dir);

[[nodiscard]] nlohmann::json camera_to_json(const Camera& camera);
[[nodiscard]] Camera camera_from_json(const nlohmann::json& j);

}  // namespace gaga
