#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace gaga {

inline constexpr int kFeatureDim = 32;

/// Structure-of-arrays splat set. Rotations are (w, x, y, z).
struct GaussianCloud {
    int channels = kFeatureDim;
    std::vector<double> positions;  // N*3
    std::vector<double> rotations;  // N*4
    std::vector<double> scales;     // N*3
    std::vector<double> opacities;  // N
    std::vector<double> features;   // N*K

    [[nodiscard]] std::size_t size() const noexcept { return opacities.size(); }
    [[nodiscard]] bool empty() const noexcept { return opacities.empty(); }
    void resize(std::size_t n);

    /// Checks array lengths, unit quaternions (1e-6), positive scales,
    /// opacities in (0, 1) and finiteness. Throws std::invalid_argument.
    void validate() const;

    /// Copies entry `src_index` of `src` into slot `dst_index`.
    void copy_entry(std::size_t dst_index, const GaussianCloud& src, std::size_t src_index);
};

/// Gradients with the same layout as GaussianCloud.
struct CloudGradients {
    int channels = kFeatureDim;
    std::vector<double> positions;
    std::vector<double> rotations;
    std::vector<double> scales;
    std::vector<double> opacities;
    std::vector<double> features;

    [[nodiscard]] static CloudGradients zeros(std::size_t n, int channels);
    [[nodiscard]] std::size_t size() const noexcept { return opacities.size(); }
    /// Entries [first, first + count) as a new gradient set.
    [[nodiscard]] CloudGradients slice(std::size_t first, std::size_t count) const;
};

// Attribute activations shared by the lifting sheets and the expression
// branch. A raw attribute record is [features K | opacity logit | log scale 3 |
// rotation 4].
namespace activation {

inline constexpr double kMinScale = 1e-4;
inline constexpr double kMaxScale = 0.5;

[[nodiscard]] inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
[[nodiscard]] inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
[[nodiscard]] inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
[[nodiscard]] inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Writes entry `index` of `cloud` (all attributes except position) from a
/// raw record of length K + 8.
void decode_attributes(std::span<const double> raw, int channels, GaussianCloud& cloud, std::size_t index);

/// Chain rule of `decode_attributes`: accumulates into raw_grad.
void decode_attributes_backward(std::span<const double> raw, int channels, const CloudGradients& grad,
                                std::size_t index, std::span<double> raw_grad);

}  // namespace activation

}  // namespace gaga
