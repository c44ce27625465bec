#include "gaga/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace gaga {

std::string to_string(DecoderMode mode) { return mode == DecoderMode::affine ? "affine" : "conv"; }

DecoderMode decoder_mode_from_string(const std::string& name) {
    if (name == "affine") return DecoderMode::affine;
    if (name == "conv") return DecoderMode::conv;
    throw std::invalid_argument("unknown decoder mode '" + name + "' (expected affine or conv)");
}

Decoder Decoder::create(DecoderMode mode, std::uint64_t seed, int in_channels, int hidden_channels) {
    if (in_channels < 3) throw std::invalid_argument("decoder needs at least 3 input channels");
    Decoder d;
    d.mode = mode;
    d.in_channels = in_channels;
    d.hidden_channels = hidden_channels;
    d.affine.assign(3 * static_cast<std::size_t>(in_channels), 0.0);
    for (int c = 0; c < 3; ++c) d.affine[c * in_channels + c] = 1.0;
    d.bias.assign(3, 0.0);
    d.conv1.assign(static_cast<std::size_t>(hidden_channels) * in_channels * 9, 0.0);
    d.conv1_bias.assign(static_cast<std::size_t>(hidden_channels), 0.0);
    d.conv2.assign(3 * static_cast<std::size_t>(hidden_channels) * 9, 0.0);
    d.conv2_bias.assign(3, 0.0);
    std::mt19937_64 rng(seed);
    const double bound = std::sqrt(6.0 / (9.0 * (in_channels + hidden_channels)));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (double& w : d.conv1) w = uniform(rng);
    return d;
}

Decoder Decoder::zeros_like(const Decoder& other) {
    Decoder d = other;
    for (auto* v : {&d.affine, &d.bias, &d.conv1, &d.conv1_bias, &d.conv2, &d.conv2_bias})
        std::fill(v->begin(), v->end(), 0.0);
    return d;
}

void Decoder::validate() const {
    const auto in = static_cast<std::size_t>(in_channels), hid = static_cast<std::size_t>(hidden_channels);
    if (affine.size() != 3 * in || bias.size() != 3 || conv1.size() != hid * in * 9 || conv1_bias.size() != hid ||
        conv2.size() != 3 * hid * 9 || conv2_bias.size() != 3)
        throw std::invalid_argument("decoder weight arrays have inconsistent sizes");
    for (const auto* v : {&affine, &bias, &conv1, &conv1_bias, &conv2, &conv2_bias})
        for (const double x : *v)
            if (!std::isfinite(x)) throw std::invalid_argument("decoder weights contain non-finite values");
}

namespace {

void check_input(const Decoder& d, const Image& f) {
    if (f.channels != d.in_channels)
        throw std::invalid_argument("decoder expects " + std::to_string(d.in_channels) + " channels, got " +
                                    std::to_string(f.channels));
}

// Replicate-padded copy, (w + 2) x (h + 2) per channel.
std::vector<double> pad_replicate(const Image& in) {
    const int w = in.width, h = in.height, pw = w + 2, ph = h + 2;
    std::vector<double> pad(static_cast<std::size_t>(in.channels) * pw * ph);
    for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < ph; ++y) {
            const int sy = std::clamp(y - 1, 0, h - 1);
            double* row = &pad[(static_cast<std::size_t>(c) * ph + y) * pw];
            for (int x = 0; x < pw; ++x) row[x] = in.at(c, std::clamp(x - 1, 0, w - 1), sy);
        }
    return pad;
}

// 3x3 same-size convolution with replicate padding.
Image conv3x3(const Image& in, const std::vector<double>& weight, const std::vector<double>& bias, int out_channels) {
    const int w = in.width, h = in.height, ci = in.channels, pw = w + 2, ph = h + 2;
    const auto pad = pad_replicate(in);
    Image out = Image::zeros(out_channels, w, h);
    for (int o = 0; o < out_channels; ++o) {
        double* dst = &out.data[static_cast<std::size_t>(o) * out.plane_size()];
        std::fill(dst, dst + out.plane_size(), bias[o]);
        for (int i = 0; i < ci; ++i) {
            const double* k = &weight[(static_cast<std::size_t>(o) * ci + i) * 9];
            const double* src = &pad[static_cast<std::size_t>(i) * pw * ph];
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double kv = k[ky * 3 + kx];
                    for (int y = 0; y < h; ++y) {
                        const double* s = src + static_cast<std::size_t>(y + ky) * pw + kx;
                        double* d = dst + static_cast<std::size_t>(y) * w;
                        for (int x = 0; x < w; ++x) d[x] += kv * s[x];
                    }
                }
        }
    }
    return out;
}

// Adjoint of conv3x3: accumulates weight/bias gradients and returns the
// input gradient.
Image conv3x3_backward(const Image& in, const std::vector<double>& weight, const Image& grad_out,
                       std::vector<double>& grad_weight, std::vector<double>& grad_bias) {
    const int w = in.width, h = in.height, ci = in.channels, co = grad_out.channels, pw = w + 2, ph = h + 2;
    const auto pad = pad_replicate(in);
    std::vector<double> grad_pad(pad.size(), 0.0);
    for (int o = 0; o < co; ++o) {
        const double* g = &grad_out.data[static_cast<std::size_t>(o) * grad_out.plane_size()];
        for (std::size_t p = 0; p < grad_out.plane_size(); ++p) grad_bias[o] += g[p];
        for (int i = 0; i < ci; ++i) {
            const double* k = &weight[(static_cast<std::size_t>(o) * ci + i) * 9];
            double* gk = &grad_weight[(static_cast<std::size_t>(o) * ci + i) * 9];
            const double* src = &pad[static_cast<std::size_t>(i) * pw * ph];
            double* gsrc = &grad_pad[static_cast<std::size_t>(i) * pw * ph];
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double kv = k[ky * 3 + kx];
                    double acc = 0.0;
                    for (int y = 0; y < h; ++y) {
                        const double* s = src + static_cast<std::size_t>(y + ky) * pw + kx;
                        double* gs = gsrc + static_cast<std::size_t>(y + ky) * pw + kx;
                        const double* gr = g + static_cast<std::size_t>(y) * w;
                        for (int x = 0; x < w; ++x) {
                            acc += gr[x] * s[x];
                            gs[x] += kv * gr[x];
                        }
                    }
                    gk[ky * 3 + kx] += acc;
                }
        }
    }
    Image grad_in = Image::zeros(ci, w, h);
    for (int c = 0; c < ci; ++c)
        for (int y = 0; y < ph; ++y) {
            const int sy = std::clamp(y - 1, 0, h - 1);
            const double* row = &grad_pad[(static_cast<std::size_t>(c) * ph + y) * pw];
            for (int x = 0; x < pw; ++x) grad_in.at(c, std::clamp(x - 1, 0, w - 1), sy) += row[x];
        }
    return grad_in;
}

}  // namespace

Image decode(const Decoder& d, const Image& features) {
    check_input(d, features);
    const std::size_t plane = features.plane_size();
    Image out = Image::zeros(3, features.width, features.height);
    for (int o = 0; o < 3; ++o) {
        double* dst = &out.data[o * plane];
        std::fill(dst, dst + plane, d.bias[o]);
        for (int c = 0; c < d.in_channels; ++c) {
            const double a = d.affine[o * d.in_channels + c];
            if (a == 0.0) continue;
            const double* src = &features.data[c * plane];
            for (std::size_t p = 0; p < plane; ++p) dst[p] += a * src[p];
        }
    }
    if (d.mode == DecoderMode::conv) {
        Image hidden = conv3x3(features, d.conv1, d.conv1_bias, d.hidden_channels);
        for (double& x : hidden.data) x = std::tanh(x);
        const Image refine = conv3x3(hidden, d.conv2, d.conv2_bias, 3);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += refine.data[i];
    }
    return out;
}

DecoderGradients decode_backward(const Decoder& d, const Image& features, const Image& grad_rgb) {
    check_input(d, features);
    if (grad_rgb.channels != 3 || grad_rgb.width != features.width || grad_rgb.height != features.height)
        throw std::invalid_argument("decoder output gradient shape mismatch");
    const std::size_t plane = features.plane_size();
    DecoderGradients out{Decoder::zeros_like(d), Image::zeros(d.in_channels, features.width, features.height)};
    for (int o = 0; o < 3; ++o) {
        const double* g = &grad_rgb.data[o * plane];
        double gb = 0.0;
        for (std::size_t p = 0; p < plane; ++p) gb += g[p];
        out.weights.bias[o] = gb;
        for (int c = 0; c < d.in_channels; ++c) {
            const double* f = &features.data[c * plane];
            double* gf = &out.features.data[c * plane];
            const double a = d.affine[o * d.in_channels + c];
            double ga = 0.0;
            for (std::size_t p = 0; p < plane; ++p) {
                ga += g[p] * f[p];
                gf[p] += a * g[p];
            }
            out.weights.affine[o * d.in_channels + c] = ga;
        }
    }
    if (d.mode == DecoderMode::conv) {
        Image hidden = conv3x3(features, d.conv1, d.conv1_bias, d.hidden_channels);
        for (double& x : hidden.data) x = std::tanh(x);
        Image g_hidden = conv3x3_backward(hidden, d.conv2, grad_rgb, out.weights.conv2, out.weights.conv2_bias);
        for (std::size_t i = 0; i < g_hidden.data.size(); ++i) g_hidden.data[i] *= 1.0 - hidden.data[i] * hidden.data[i];
        const Image g_feat = conv3x3_backward(features, d.conv1, g_hidden, out.weights.conv1, out.weights.conv1_bias);
        for (std::size_t i = 0; i < g_feat.data.size(); ++i) out.features.data[i] += g_feat.data[i];
    }
    return out;
}

}  // namespace gaga
