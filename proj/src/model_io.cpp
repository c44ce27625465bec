#include <cmath>

#include "container.hpp"
#include "gaga/errors.hpp"
#include "gaga/head_model.hpp"

namespace gaga {

namespace {
constexpr char kModelMagic[] = "GAGM";
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

std::vector<std::uint8_t> serialize_model(const BlendshapeModel& model) {
    model.validate();
    detail::ContainerWriter writer(kModelMagic, kModelVersion);
    writer.meta() = {{"vertices", model.num_vertices()}, {"triangles", model.triangles.size()},
                     {"n_beta", model.n_beta},           {"n_theta", model.n_theta},
                     {"n_psi", model.n_psi},             {"version_tag", model.version_tag}};
    std::vector<double> tris;
    tris.reserve(model.triangles.size() * 3);
    for (const auto& t : model.triangles) tris.insert(tris.end(), t.begin(), t.end());
    writer.add_f32("template_vertices", model.template_vertices);
    writer.add_f32("shape_basis", model.shape_basis);
    writer.add_f32("pose_basis", model.pose_basis);
    writer.add_f32("expr_basis", model.expr_basis);
    writer.add_f32("triangles", tris);
    return writer.finish();
}

BlendshapeModel deserialize_model(std::span<const std::uint8_t> bytes) {
    detail::ContainerReader reader(bytes, kModelMagic, kModelVersion, "GAGM model");
    BlendshapeModel model;
    std::size_t v = 0, f = 0;
    try {
        const auto& meta = reader.meta();
        v = meta.at("vertices").get<std::size_t>();
        f = meta.at("triangles").get<std::size_t>();
        model.n_beta = meta.at("n_beta").get<std::size_t>();
        model.n_theta = meta.at("n_theta").get<std::size_t>();
        model.n_psi = meta.at("n_psi").get<std::size_t>();
        model.version_tag = meta.value("version_tag", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("header", std::string("missing model dimensions: ") + e.what());
    }
    model.template_vertices = reader.read("template_vertices", v * 3);
    model.shape_basis = reader.read("shape_basis", v * 3 * model.n_beta);
    model.pose_basis = reader.read("pose_basis", v * 3 * model.n_theta);
    model.expr_basis = reader.read("expr_basis", v * 3 * model.n_psi);
    const auto tris = reader.read("triangles", f * 3);
    reader.finish();
    model.triangles.resize(f);
    for (std::size_t i = 0; i < f; ++i)
        for (int c = 0; c < 3; ++c) {
            const double idx = tris[i * 3 + c];
            if (idx < 0 || idx != std::floor(idx) || idx >= static_cast<double>(v))
                throw FormatError("triangles", "invalid vertex index " + std::to_string(idx));
            model.triangles[i][c] = static_cast<std::uint32_t>(idx);
        }
    try {
        model.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError("template_vertices", e.what());
    }
    return model;
}

void save_model(const BlendshapeModel& model, const std::filesystem::path& path) {
    detail::write_file(path, serialize_model(model));
}

BlendshapeModel load_model(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw FormatError("file", "model file not found: " + path.string());
    return deserialize_model(detail::read_file(path));
}

std::uint64_t model_hash(const BlendshapeModel& model) { return detail::fnv1a(serialize_model(model)); }

}  // namespace gaga
