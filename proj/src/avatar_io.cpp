#include <cmath>
#include <cstdio>

#include "container.hpp"
#include "gaga/errors.hpp"
#include "gaga/io.hpp"

namespace gaga {

namespace {
constexpr char kAvatarMagic[] = "GAGA";
constexpr std::uint32_t kAvatarVersion = 1;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
    if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos)
        throw FormatError("header", "model_hash must be 16 lowercase hex digits");
    return std::stoull(s, nullptr, 16);
}

std::vector<double> camera_blob(const Camera& c) {
    const auto& q = c.pose.rotation;
    const auto& t = c.pose.translation;
    return {c.fx, c.fy, c.cx, c.cy, static_cast<double>(c.width), static_cast<double>(c.height),
            q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z()};
}

void require_finite(const std::string& section, std::span<const double> values) {
    for (const double x : values)
        if (!std::isfinite(x)) throw FormatError(section, "contains non-finite values");
}

// Reads a section and checks it is finite.
std::vector<double> read_finite(detail::ContainerReader& r, const std::string& name, std::size_t n) {
    auto v = r.read(name, n);
    require_finite(name, v);
    return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_avatar(const Avatar& avatar, const AvatarFileInfo& info) {
    avatar.validate();
    detail::ContainerWriter w(kAvatarMagic, kAvatarVersion);
    const auto& h = avatar.head;
    w.meta() = {
        {"grid_res", avatar.grids.res},
        {"channels", avatar.grids.channels},
        {"plane_extent", avatar.plane_extent},
        {"vertices", avatar.bank.num_vertices()},
        {"vertex_dim", avatar.bank.vertex_dim},
        {"global_dim", avatar.bank.global_dim},
        {"head",
         {{"input", h.input_dim()},
          {"hidden", h.layers.size() > 1 ? h.layers.front().weight.rows() : 0},
          {"layers", h.layers.size()},
          {"output", h.output_dim()}}},
        {"decoder", {{"mode", to_string(avatar.decoder.mode)}, {"hidden", avatar.decoder.hidden_channels}}},
        {"n_beta", avatar.identity_beta.size()},
        {"model_hash", hex64(avatar.model_hash)},
        {"model_path", info.model_path},
        {"freeze_global", avatar.freeze_global},
        {"fit", info.fit},
    };
    w.add_f32("grids_front", avatar.grids.front);
    w.add_f32("grids_back", avatar.grids.back);
    w.add_f32("vertex_features", avatar.bank.per_vertex);
    w.add_f32("global_feature", avatar.bank.global_feature);
    for (std::size_t l = 0; l < h.layers.size(); ++l) {
        const auto& layer = h.layers[l];
        w.add_f32("head_" + std::to_string(l) + "_weight",
                  {layer.weight.data(), static_cast<std::size_t>(layer.weight.size())});
        w.add_f32("head_" + std::to_string(l) + "_bias", {layer.bias.data(), static_cast<std::size_t>(layer.bias.size())});
    }
    const auto& d = avatar.decoder;
    w.add_f32("decoder_affine", d.affine);
    w.add_f32("decoder_bias", d.bias);
    w.add_f32("decoder_conv1", d.conv1);
    w.add_f32("decoder_conv1_bias", d.conv1_bias);
    w.add_f32("decoder_conv2", d.conv2);
    w.add_f32("decoder_conv2_bias", d.conv2_bias);
    w.add_f32("identity_beta", avatar.identity_beta);
    // Stored in double precision: a float-rounded quaternion is not unit to 1e-9.
    w.add_f64("source_camera", camera_blob(avatar.source_camera));
    return w.finish();
}

Avatar deserialize_avatar(std::span<const std::uint8_t> bytes, AvatarFileInfo* info) {
    detail::ContainerReader r(bytes, kAvatarMagic, kAvatarVersion, "GAGA avatar");
    Avatar a;
    int res = 0, channels = 0, vertex_dim = 0, global_dim = 0, hidden = 0, layers = 0, input = 0, output = 0,
        dec_hidden = 0;
    std::size_t vertices = 0, n_beta = 0;
    DecoderMode mode = DecoderMode::affine;
    try {
        const auto& m = r.meta();
        res = m.at("grid_res").get<int>();
        channels = m.at("channels").get<int>();
        a.plane_extent = m.at("plane_extent").get<double>();
        vertices = m.at("vertices").get<std::size_t>();
        vertex_dim = m.at("vertex_dim").get<int>();
        global_dim = m.at("global_dim").get<int>();
        const auto& hm = m.at("head");
        input = hm.at("input").get<int>();
        hidden = hm.at("hidden").get<int>();
        layers = hm.at("layers").get<int>();
        output = hm.at("output").get<int>();
        mode = decoder_mode_from_string(m.at("decoder").at("mode").get<std::string>());
        dec_hidden = m.at("decoder").at("hidden").get<int>();
        n_beta = m.at("n_beta").get<std::size_t>();
        a.model_hash = parse_hex64(m.at("model_hash").get<std::string>());
        a.freeze_global = m.value("freeze_global", false);
        if (info) {
            info->model_path = m.value("model_path", std::string{});
            info->fit = m.value("fit", nlohmann::json::object());
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("header", std::string("bad avatar metadata: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError("header", e.what());
    }
    if (res < 2 || channels < 3 || vertex_dim < 1 || global_dim < 0 || layers < 1 || input != vertex_dim + global_dim ||
        output != channels + 8 || (layers > 1 && hidden < 1) || dec_hidden < 1 || !(a.plane_extent > 0.0))
        throw FormatError("header", "inconsistent avatar dimensions");

    a.grids = LiftingGrids::zeros(res, channels);
    const std::size_t sheet = a.grids.front.size();
    a.grids.front = read_finite(r, "grids_front", sheet);
    a.grids.back = read_finite(r, "grids_back", sheet);
    a.bank.vertex_dim = vertex_dim;
    a.bank.global_dim = global_dim;
    a.bank.per_vertex = read_finite(r, "vertex_features", vertices * static_cast<std::size_t>(vertex_dim));
    a.bank.global_feature = read_finite(r, "global_feature", static_cast<std::size_t>(global_dim));
    for (int l = 0; l < layers; ++l) {
        const int in = l == 0 ? input : hidden;
        const int out = l == layers - 1 ? output : hidden;
        const std::string base = "head_" + std::to_string(l);
        const auto wv = read_finite(r, base + "_weight", static_cast<std::size_t>(in) * out);
        const auto bv = read_finite(r, base + "_bias", static_cast<std::size_t>(out));
        DenseLayer layer;
        layer.weight = Eigen::Map<const Eigen::MatrixXd>(wv.data(), out, in);
        layer.bias = Eigen::Map<const Eigen::VectorXd>(bv.data(), out);
        a.head.layers.push_back(std::move(layer));
    }
    Decoder& d = a.decoder;
    d.mode = mode;
    d.in_channels = channels;
    d.hidden_channels = dec_hidden;
    const auto c = static_cast<std::size_t>(channels), hid = static_cast<std::size_t>(dec_hidden);
    d.affine = read_finite(r, "decoder_affine", 3 * c);
    d.bias = read_finite(r, "decoder_bias", 3);
    d.conv1 = read_finite(r, "decoder_conv1", hid * c * 9);
    d.conv1_bias = read_finite(r, "decoder_conv1_bias", hid);
    d.conv2 = read_finite(r, "decoder_conv2", 3 * hid * 9);
    d.conv2_bias = read_finite(r, "decoder_conv2_bias", 3);
    a.identity_beta = read_finite(r, "identity_beta", n_beta);
    const auto cam = read_finite(r, "source_camera", 13);
    r.finish();

    Camera& sc = a.source_camera;
    sc.fx = cam[0];
    sc.fy = cam[1];
    sc.cx = cam[2];
    sc.cy = cam[3];
    if (cam[4] != std::floor(cam[4]) || cam[5] != std::floor(cam[5]) || cam[4] < 1 || cam[5] < 1 || cam[4] > 1e6 ||
        cam[5] > 1e6)
        throw FormatError("source_camera", "image size must be a positive integer");
    sc.width = static_cast<int>(cam[4]);
    sc.height = static_cast<int>(cam[5]);
    sc.pose.rotation = Eigen::Quaterniond(cam[6], cam[7], cam[8], cam[9]);
    sc.pose.translation = Eigen::Vector3d(cam[10], cam[11], cam[12]);
    try {
        sc.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError("source_camera", e.what());
    }
    try {
        a.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError("header", e.what());
    }
    return a;
}

void save_avatar(const Avatar& avatar, const std::filesystem::path& path, const AvatarFileInfo& info) {
    detail::write_file(path, serialize_avatar(avatar, info));
}

Avatar load_avatar(const std::filesystem::path& path, AvatarFileInfo* info) {
    if (!std::filesystem::exists(path)) throw FormatError("file", "avatar file not found: " + path.string());
    return deserialize_avatar(detail::read_file(path), info);
}

}  // namespace gaga
