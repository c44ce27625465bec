#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gaga/image.hpp"

namespace gaga {

enum class DecoderMode { affine, conv };

[[nodiscard]] std::string to_string(DecoderMode mode);
[[nodiscard]] DecoderMode decoder_mode_from_string(const std::string& name);

/// Feature-to-RGB decoder. Affine mode maps each pixel through A*f + b; conv
/// mode adds a residual refine branch conv2(tanh(conv1(f))) of two 3x3
/// replicate-padded convolutions (in -> hidden -> 3).
struct Decoder {
    DecoderMode mode = DecoderMode::affine;
    int in_channels = 32;
    int hidden_channels = 16;
    std::vector<double> affine;      // 3 x in, row-major
    std::vector<double> bias;        // 3
    std::vector<double> conv1;       // hidden x in x 3 x 3
    std::vector<double> conv1_bias;  // hidden
    std::vector<double> conv2;       // 3 x hidden x 3 x 3
    std::vector<double> conv2_bias;  // 3

    /// A = [I3 | 0], b = 0; conv1 small random, conv2 zero.
    [[nodiscard]] static Decoder create(DecoderMode mode, std::uint64_t seed, int in_channels = 32,
                                        int hidden_channels = 16);
    /// Same shapes, all zeros (used for gradients).
    [[nodiscard]] static Decoder zeros_like(const Decoder& other);
    void validate() const;
};

[[nodiscard]] Image decode(const Decoder& decoder, const Image& features);

struct DecoderGradients {
    Decoder weights;
    Image features;
};

[[nodiscard]] DecoderGradients decode_backward(const Decoder& decoder, const Image& features, const Image& grad_rgb);

}  // namespace gaga
