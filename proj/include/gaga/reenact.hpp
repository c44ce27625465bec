#pragma once

#include <memory>
#include <mutex>
#include <optional>

#include "gaga/fitting.hpp"

namespace gaga {

/// Drives a fitted avatar with new expression parameters. The dual-lift cloud
/// and the expression attributes depend only on the avatar, so they are built
/// on first use and reused by every later frame. Safe to share across threads.
class Reenactor {
public:
    Reenactor(std::shared_ptr<const Avatar> avatar, std::shared_ptr<const BlendshapeModel> model,
              RenderSettings settings = {});

    /// Decoded RGB image. `decoder` overrides the avatar's decoder mode.
    [[nodiscard]] Image render(const ExpressionParams& params, const Camera& camera,
                               std::optional<DecoderMode> decoder = std::nullopt, RenderStats* stats = nullptr);

    /// Full splat set for `params` (dual lift first).
    [[nodiscard]] GaussianCloud cloud(const ExpressionParams& params);

    /// Shape coefficients of the avatar identity with the given pose and expression.
    [[nodiscard]] ExpressionParams params(std::span<const double> psi, std::span<const double> theta) const;

    [[nodiscard]] const Avatar& avatar() const noexcept { return *avatar_; }
    [[nodiscard]] const BlendshapeModel& model() const noexcept { return *model_; }
    [[nodiscard]] std::uint64_t avatar_id() const noexcept { return avatar_id_; }
    [[nodiscard]] std::size_t cached_attribute_sets() const { return attributes_.size(); }

private:
    const GaussianCloud& dual();

    std::shared_ptr<const Avatar> avatar_;
    std::shared_ptr<const BlendshapeModel> model_;
    RenderSettings settings_;
    std::uint64_t avatar_id_ = 0;
    std::uint64_t attribute_key_ = 0;
    std::once_flag dual_once_;
    GaussianCloud dual_;
    AttributeCache attributes_;
};

/// One-shot render without caching across calls.
[[nodiscard]] Image reenact(const Avatar& avatar, const BlendshapeModel& model, const ExpressionParams& params,
                            const Camera& camera);

/// Stable identifier of an avatar's content.
[[nodiscard]] std::uint64_t avatar_hash(const Avatar& avatar);

}  // namespace gaga
