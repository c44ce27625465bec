#include "gaga/gaussian_cloud.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace gaga {

void GaussianCloud::resize(std::size_t n) {
    positions.assign(n * 3, 0.0);
    rotations.assign(n * 4, 0.0);
    scales.assign(n * 3, 0.0);
    opacities.assign(n, 0.0);
    features.assign(n * static_cast<std::size_t>(channels), 0.0);
}

void GaussianCloud::validate() const {
    const std::size_t n = size();
    const auto k = static_cast<std::size_t>(channels);
    if (positions.size() != n * 3 || rotations.size() != n * 4 || scales.size() != n * 3 || features.size() != n * k)
        throw std::invalid_argument("GaussianCloud arrays have inconsistent lengths");
    for (std::size_t i = 0; i < n; ++i) {
        const double* q = &rotations[i * 4];
        const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
        if (!(std::abs(norm - 1.0) <= 1e-6))
            throw std::invalid_argument("Gaussian " + std::to_string(i) + " has a non-unit rotation");
        for (int c = 0; c < 3; ++c)
            if (!(scales[i * 3 + c] > 0.0) || !std::isfinite(scales[i * 3 + c]))
                throw std::invalid_argument("Gaussian " + std::to_string(i) + " has a non-positive scale");
        if (!(opacities[i] > 0.0 && opacities[i] < 1.0))
            throw std::invalid_argument("Gaussian " + std::to_string(i) + " opacity outside (0, 1)");
    }
    for (const double x : positions)
        if (!std::isfinite(x)) throw std::invalid_argument("Gaussian position is not finite");
    for (const double x : features)
        if (!std::isfinite(x)) throw std::invalid_argument("Gaussian feature is not finite");
}

void GaussianCloud::copy_entry(std::size_t dst, const GaussianCloud& src, std::size_t s) {
    const auto k = static_cast<std::size_t>(channels);
    std::copy_n(&src.positions[s * 3], 3, &positions[dst * 3]);
    std::copy_n(&src.rotations[s * 4], 4, &rotations[dst * 4]);
    std::copy_n(&src.scales[s * 3], 3, &scales[dst * 3]);
    opacities[dst] = src.opacities[s];
    std::copy_n(&src.features[s * k], k, &features[dst * k]);
}

CloudGradients CloudGradients::zeros(std::size_t n, int channels) {
    CloudGradients g;
    g.channels = channels;
    g.positions.assign(n * 3, 0.0);
    g.rotations.assign(n * 4, 0.0);
    g.scales.assign(n * 3, 0.0);
    g.opacities.assign(n, 0.0);
    g.features.assign(n * static_cast<std::size_t>(channels), 0.0);
    return g;
}

CloudGradients CloudGradients::slice(std::size_t first, std::size_t count) const {
    const auto k = static_cast<std::size_t>(channels);
    CloudGradients g;
    g.channels = channels;
    auto take = [&](const std::vector<double>& src, std::size_t width) {
        return std::vector<double>(src.begin() + static_cast<std::ptrdiff_t>(first * width),
                                   src.begin() + static_cast<std::ptrdiff_t>((first + count) * width));
    };
    g.positions = take(positions, 3);
    g.rotations = take(rotations, 4);
    g.scales = take(scales, 3);
    g.opacities = take(opacities, 1);
    g.features = take(features, k);
    return g;
}

namespace activation {

void decode_attributes(std::span<const double> raw, int channels, GaussianCloud& cloud, std::size_t index) {
    const auto k = static_cast<std::size_t>(channels);
    std::copy_n(raw.begin(), k, &cloud.features[index * k]);
    cloud.opacities[index] = sigmoid(raw[k]);
    for (int c = 0; c < 3; ++c)
        cloud.scales[index * 3 + c] = std::clamp(std::exp(raw[k + 1 + c]), kMinScale, kMaxScale);
    const double* q = &raw[k + 4];
    const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    double* out = &cloud.rotations[index * 4];
    if (norm < 1e-12) {
        out[0] = 1.0;
        out[1] = out[2] = out[3] = 0.0;
    } else {
        for (int c = 0; c < 4; ++c) out[c] = q[c] / norm;
    }
}

void decode_attributes_backward(std::span<const double> raw, int channels, const CloudGradients& grad,
                                std::size_t index, std::span<double> raw_grad) {
    const auto k = static_cast<std::size_t>(channels);
    for (std::size_t c = 0; c < k; ++c) raw_grad[c] += grad.features[index * k + c];
    const double o = sigmoid(raw[k]);
    raw_grad[k] += grad.opacities[index] * o * (1.0 - o);
    for (int c = 0; c < 3; ++c) {
        const double s = std::exp(raw[k + 1 + c]);
        if (s > kMinScale && s < kMaxScale) raw_grad[k + 1 + c] += grad.scales[index * 3 + c] * s;
    }
    const double* q = &raw[k + 4];
    const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (norm < 1e-12) return;
    const double* g = &grad.rotations[index * 4];
    double qg = 0.0;
    for (int c = 0; c < 4; ++c) qg += q[c] * g[c];
    for (int c = 0; c < 4; ++c) raw_grad[k + 4 + c] += (g[c] - q[c] * qg / (norm * norm)) / norm;
}

}  // namespace activation

}  // namespace gaga
