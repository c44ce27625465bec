#include "gaga/reenact.hpp"

#include <chrono>
#include <stdexcept>

#include "container.hpp"

namespace gaga {

std::uint64_t avatar_hash(const Avatar& avatar) {
    Avatar copy = avatar;
    std::uint64_t h = detail::fnv1a_doubles(avatar.identity_beta, avatar.model_hash);
    for (const auto block : parameter_blocks(copy)) h = detail::fnv1a_doubles(block, h);
    const auto& c = avatar.source_camera;
    const double cam[] = {c.fx, c.fy, c.cx, c.cy, c.pose.rotation.w(), c.pose.rotation.x(), c.pose.rotation.y(),
                          c.pose.rotation.z(), c.pose.translation.x(), c.pose.translation.y(), c.pose.translation.z(),
                          avatar.plane_extent};
    return detail::fnv1a_doubles(cam, h);
}

Reenactor::Reenactor(std::shared_ptr<const Avatar> avatar, std::shared_ptr<const BlendshapeModel> model,
                     RenderSettings settings)
    : avatar_(std::move(avatar)), model_(std::move(model)), settings_(std::move(settings)) {
    if (!avatar_ || !model_) throw std::invalid_argument("reenactor needs an avatar and a model");
    model_->validate();
    avatar_->validate(model_.get());
    settings_.validate();
    avatar_id_ = avatar_hash(*avatar_);
    attribute_key_ = content_hash(avatar_->bank) ^ (content_hash(avatar_->head) * 0x9e3779b97f4a7c15ULL);
}

const GaussianCloud& Reenactor::dual() {
    std::call_once(dual_once_, [this] { dual_ = assemble_dual_lift(avatar_->grids, avatar_->plane()); });
    return dual_;
}

ExpressionParams Reenactor::params(std::span<const double> psi, std::span<const double> theta) const {
    ExpressionParams p = ExpressionParams::zeros(*model_);
    p.beta = avatar_->identity_beta;
    if (psi.size() != p.psi.size())
        throw std::invalid_argument("psi has " + std::to_string(psi.size()) + " values, model expects " +
                                    std::to_string(p.psi.size()));
    if (theta.size() != p.theta.size())
        throw std::invalid_argument("theta has " + std::to_string(theta.size()) + " values, model expects " +
                                    std::to_string(p.theta.size()));
    p.psi.assign(psi.begin(), psi.end());
    p.theta.assign(theta.begin(), theta.end());
    return p;
}

GaussianCloud Reenactor::cloud(const ExpressionParams& params) {
    params.check_against(*model_);
    const auto attrs = attributes_.get_or_compute(avatar_->bank, avatar_->head, attribute_key_);
    return merge_clouds(dual(), position_expression_cloud(*attrs, evaluate(*model_, params)));
}

Image Reenactor::render(const ExpressionParams& params, const Camera& camera, std::optional<DecoderMode> decoder,
                        RenderStats* stats) {
    camera.validate();
    const GaussianCloud c = cloud(params);
    const FrameBuffer fb = gaga::render(c, camera, settings_, stats);
    if (decoder && *decoder != avatar_->decoder.mode) {
        Decoder d = avatar_->decoder;
        d.mode = *decoder;
        return decode(d, fb.color);
    }
    return decode(avatar_->decoder, fb.color);
}

Image reenact(const Avatar& avatar, const BlendshapeModel& model, const ExpressionParams& params,
              const Camera& camera) {
    return render_avatar(avatar, model, params, camera).fine;
}

}  // namespace gaga
