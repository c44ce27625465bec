#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gaga/camera.hpp"
#include "gaga/gaussian_cloud.hpp"

namespace gaga {

/// Two res x res sheets of raw per-pixel parameters. Each record is
/// [distance | features K | opacity logit | log scale 3 | rotation 4], which
/// is 41 values for K = 32.
struct LiftingGrids {
    int res = 0;
    int channels = kFeatureDim;
    std::vector<double> front;
    std::vector<double> back;

    [[nodiscard]] std::size_t record_size() const noexcept { return static_cast<std::size_t>(channels) + 9; }
    [[nodiscard]] std::size_t pixels() const noexcept {
        return static_cast<std::size_t>(res) * static_cast<std::size_t>(res);
    }
    [[nodiscard]] static LiftingGrids zeros(int res, int channels = kFeatureDim);
    /// Throws std::invalid_argument on size mismatch or non-finite values.
    void validate() const;
};

namespace lifting_record {
inline constexpr std::size_t kDistance = 0;
inline constexpr std::size_t kAttributes = 1;  // start of the K + 8 attribute block
}  // namespace lifting_record

/// Starting point for fitting: 0.05 lift, opacity 0.1, one-cell scale,
/// identity rotation, features ~ N(0, 0.01^2).
[[nodiscard]] LiftingGrids init_lifting_grids(int res, double extent, std::uint64_t seed, int channels = kFeatureDim);

/// Front sheet lifts along +normal, back sheet along -normal, both by
/// softplus(distance). Output holds the front sheet first: N = 2*res^2.
[[nodiscard]] GaussianCloud assemble_dual_lift(const LiftingGrids& grids, const LiftingPlane& plane);

/// Gradient of assemble_dual_lift with respect to the raw grids.
[[nodiscard]] LiftingGrids assemble_dual_lift_backward(const LiftingGrids& grids, const LiftingPlane& plane,
                                                       const CloudGradients& grad);

/// One-sheet variant: signed lift extent*tanh(distance) along the normal.
[[nodiscard]] GaussianCloud single_plane_lift(std::span<const double> sheet, int channels, const LiftingPlane& plane);

}  // namespace gaga
