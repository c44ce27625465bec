#include "gaga/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gaga {

void LossWeights::validate() const {
    if (!(lambda_p >= 0.0) || !(lambda_l >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
}

ImageLoss l1_image_loss(const Image& image, const Image& target) {
    if (!image.same_shape(target))
        throw std::invalid_argument("L1 loss shape mismatch: " + std::to_string(image.channels) + "x" +
                                    std::to_string(image.width) + "x" + std::to_string(image.height) + " vs " +
                                    std::to_string(target.channels) + "x" + std::to_string(target.width) + "x" +
                                    std::to_string(target.height));
    ImageLoss out{0.0, Image::zeros(image.channels, image.width, image.height)};
    const std::size_t n = image.data.size();
    if (n == 0) return out;
    const double inv = 1.0 / static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = image.data[i] - target.data[i];
        sum += std::abs(d);
        out.grad.data[i] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
    }
    out.value = sum * inv;
    return out;
}

namespace {

Image downsample2(const Image& in) {
    Image out = Image::zeros(in.channels, in.width / 2, in.height / 2);
    for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                out.at(c, x, y) = 0.25 * (in.at(c, 2 * x, 2 * y) + in.at(c, 2 * x + 1, 2 * y) +
                                          in.at(c, 2 * x, 2 * y + 1) + in.at(c, 2 * x + 1, 2 * y + 1));
    return out;
}

// Transpose of downsample2.
Image upsample2_adjoint(const Image& grad) {
    Image out = Image::zeros(grad.channels, grad.width * 2, grad.height * 2);
    for (int c = 0; c < grad.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) out.at(c, x, y) = 0.25 * grad.at(c, x / 2, y / 2);
    return out;
}

}  // namespace

ImageLoss pyramid_loss(const Image& image, const Image& target, int levels) {
    if (levels < 1) throw std::invalid_argument("pyramid needs at least one level");
    if (!image.same_shape(target)) throw std::invalid_argument("pyramid loss shape mismatch");
    const int div = 1 << (levels - 1);
    if (image.width % div != 0 || image.height % div != 0)
        throw std::invalid_argument("image size " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                                    " is not divisible by " + std::to_string(div));
    std::vector<Image> a{image}, b{target};
    for (int l = 1; l < levels; ++l) {
        a.push_back(downsample2(a.back()));
        b.push_back(downsample2(b.back()));
    }
    ImageLoss out{0.0, Image::zeros(image.channels, image.width, image.height)};
    Image carry;
    for (int l = levels - 1; l >= 0; --l) {
        ImageLoss level = l1_image_loss(a[l], b[l]);
        out.value += level.value;
        if (l < levels - 1) {
            const Image up = upsample2_adjoint(carry);
            for (std::size_t i = 0; i < level.grad.data.size(); ++i) level.grad.data[i] += up.data[i];
        }
        carry = std::move(level.grad);
    }
    out.grad = std::move(carry);
    return out;
}

LiftingLoss lifting_distance_loss(std::span<const double> vertices, std::span<const double> points) {
    if (points.empty()) throw std::invalid_argument("lifting loss needs a non-empty cloud");
    if (vertices.size() % 3 != 0 || points.size() % 3 != 0)
        throw std::invalid_argument("lifting loss expects N*3 coordinates");
    const std::size_t v = vertices.size() / 3;
    LiftingLoss out;
    out.grad_positions.assign(points.size(), 0.0);
    out.matches.resize(v);
    if (v == 0) return out;
    const KdTree tree(points);
    std::vector<double> dist2(v);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(v); ++i) {
        const auto hit = tree.nearest(&vertices[static_cast<std::size_t>(i) * 3]);
        out.matches[static_cast<std::size_t>(i)] = hit.index;
        dist2[static_cast<std::size_t>(i)] = hit.distance2;
    }
    const double inv = 1.0 / static_cast<double>(v);
    double sum = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
        sum += dist2[i];
        const std::size_t q = out.matches[i];
        for (int c = 0; c < 3; ++c) out.grad_positions[q * 3 + c] += 2.0 * (points[q * 3 + c] - vertices[i * 3 + c]) * inv;
    }
    out.value = sum * inv;
    return out;
}

TotalLoss total_loss(const Image& coarse, const Image& fine, const Image& target, std::span<const double> model_vertices,
                     std::span<const double> lifted_points, const LossWeights& weights) {
    weights.validate();
    if (coarse.channels < target.channels) throw std::invalid_argument("coarse buffer has fewer channels than target");
    const Image coarse_rgb = coarse.leading_channels(target.channels);
    const ImageLoss l1c = l1_image_loss(coarse_rgb, target);
    const ImageLoss l1f = l1_image_loss(fine, target);
    const ImageLoss pc = pyramid_loss(coarse_rgb, target);
    const ImageLoss pf = pyramid_loss(fine, target);

    TotalLoss out;
    out.parts.l1_coarse = l1c.value;
    out.parts.l1_fine = l1f.value;
    out.parts.pyramid = pc.value + pf.value;
    out.grad_coarse = Image::zeros(coarse.channels, coarse.width, coarse.height);
    for (std::size_t i = 0; i < l1c.grad.data.size(); ++i)
        out.grad_coarse.data[i] = l1c.grad.data[i] + weights.lambda_p * pc.grad.data[i];
    out.grad_fine = Image::zeros(fine.channels, fine.width, fine.height);
    for (std::size_t i = 0; i < l1f.grad.data.size(); ++i)
        out.grad_fine.data[i] = l1f.grad.data[i] + weights.lambda_p * pf.grad.data[i];

    out.grad_positions.assign(lifted_points.size(), 0.0);
    if (weights.lambda_l > 0.0 || !model_vertices.empty()) {
        const LiftingLoss lift = lifting_distance_loss(model_vertices, lifted_points);
        out.parts.lifting = lift.value;
        for (std::size_t i = 0; i < lift.grad_positions.size(); ++i)
            out.grad_positions[i] = weights.lambda_l * lift.grad_positions[i];
    }
    out.parts.total = out.parts.l1_coarse + out.parts.l1_fine + weights.lambda_p * out.parts.pyramid +
                      weights.lambda_l * out.parts.lifting;
    return out;
}

}  // namespace gaga
