#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gaga/io.hpp"

namespace gaga {

std::vector<SplatSource> dual_lift_sources(std::size_t dual_count, std::size_t expression_count) {
    if (dual_count % 2 != 0) throw std::invalid_argument("dual-lift cloud size must be even");
    std::vector<SplatSource> out(dual_count / 2, SplatSource::front);
    out.resize(dual_count, SplatSource::back);
    out.resize(dual_count + expression_count, SplatSource::expression);
    return out;
}

namespace {

void put_f32(std::vector<char>& buf, double v) {
    const float f = static_cast<float>(v);
    char b[4];
    std::memcpy(b, &f, 4);
    buf.insert(buf.end(), b, b + 4);
}

}  // namespace

std::size_t export_ply(const GaussianCloud& cloud, std::span<const SplatSource> sources,
                       const std::filesystem::path& path, double opacity_threshold) {
    if (!(opacity_threshold >= 0.0 && opacity_threshold < 1.0))
        throw std::invalid_argument("opacity threshold must lie in [0, 1)");
    if (sources.size() != cloud.size()) throw std::invalid_argument("one source tag per splat required");
    if (cloud.channels < 3) throw std::invalid_argument("PLY colours need at least 3 feature channels");

    std::vector<char> body;
    std::size_t kept = 0;
    const auto k = static_cast<std::size_t>(cloud.channels);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double o = cloud.opacities[i];
        if (o < opacity_threshold) continue;
        ++kept;
        for (int c = 0; c < 3; ++c) put_f32(body, cloud.positions[i * 3 + c]);
        for (int c = 0; c < 3; ++c)
            body.push_back(static_cast<char>(std::lround(std::clamp(cloud.features[i * k + c], 0.0, 1.0) * 255.0)));
        const double oc = std::clamp(o, 1e-7, 1.0 - 1e-7);
        put_f32(body, std::log(oc / (1.0 - oc)));
        for (int c = 0; c < 3; ++c) put_f32(body, std::log(cloud.scales[i * 3 + c]));
        for (int c = 0; c < 4; ++c) put_f32(body, cloud.rotations[i * 4 + c]);
        body.push_back(static_cast<char>(sources[i]));
    }

    std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(kept) + "\n";
    for (const char* name : {"x", "y", "z"}) header += std::string("property float ") + name + "\n";
    for (const char* name : {"red", "green", "blue"}) header += std::string("property uchar ") + name + "\n";
    header += "property float opacity\n";
    for (int c = 0; c < 3; ++c) header += "property float scale_" + std::to_string(c) + "\n";
    for (int c = 0; c < 4; ++c) header += "property float rot_" + std::to_string(c) + "\n";
    header += "property uchar sheet\nend_header\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw std::runtime_error("failed writing " + path.string());
    return kept;
}

}  // namespace gaga
