#pragma once

#include <cstddef>
#include <vector>

namespace gaga {

/// Planar float image: value (c, x, y) at data[(c * height + y) * width + x].
struct Image {
    int channels = 0;
    int width = 0;
    int height = 0;
    std::vector<double> data;

    [[nodiscard]] static Image zeros(int channels, int width, int height) {
        return {channels, width, height,
                std::vector<double>(static_cast<std::size_t>(channels) * static_cast<std::size_t>(width) *
                                        static_cast<std::size_t>(height),
                                    0.0)};
    }
    [[nodiscard]] std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    [[nodiscard]] double& at(int c, int x, int y) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    [[nodiscard]] double at(int c, int x, int y) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    [[nodiscard]] bool same_shape(const Image& other) const noexcept {
        return channels == other.channels && width == other.width && height == other.height;
    }
    /// First `count` channels as a new image.
    [[nodiscard]] Image leading_channels(int count) const {
        Image out{count, width, height, {}};
        out.data.assign(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(count * plane_size()));
        return out;
    }
};

}  // namespace gaga
