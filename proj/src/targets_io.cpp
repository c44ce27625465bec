#include <cstdio>
#include <fstream>

#include "gaga/errors.hpp"
#include "gaga/io.hpp"

namespace gaga {

nlohmann::json camera_to_json(const Camera& c) {
    const auto& q = c.pose.rotation;
    const auto& t = c.pose.translation;
    return {{"fx", c.fx},
            {"fy", c.fy},
            {"cx", c.cx},
            {"cy", c.cy},
            {"width", c.width},
            {"height", c.height},
            {"rotation", {q.w(), q.x(), q.y(), q.z()}},
            {"translation", {t.x(), t.y(), t.z()}}};
}

Camera camera_from_json(const nlohmann::json& j) {
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    const auto q = j.at("rotation").get<std::vector<double>>();
    const auto t = j.at("translation").get<std::vector<double>>();
    if (q.size() != 4 || t.size() != 3) throw std::invalid_argument("camera rotation/translation has the wrong length");
    c.pose.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
    c.pose.translation = Eigen::Vector3d(t[0], t[1], t[2]);
    c.validate();
    return c;
}

void save_targets(const TargetSet& targets, const std::filesystem::path& dir) {
    targets.validate(0);
    std::filesystem::create_directories(dir);
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = 0; i < targets.items.size(); ++i) {
        const auto& t = targets.items[i];
        char name[32];
        std::snprintf(name, sizeof name, "view_%03zu.png", i);
        write_png(dir / name, to_rgb8(t.image));
        items.push_back({{"image", name},
                         {"split", t.split == Split::train ? "train" : "holdout"},
                         {"camera", camera_to_json(t.camera)},
                         {"beta", t.params.beta},
                         {"theta", t.params.theta},
                         {"psi", t.params.psi}});
    }
    std::ofstream out(dir / "targets.json");
    out << nlohmann::json{{"version", 1}, {"items", items}}.dump(1) << '\n';
    if (!out) throw std::runtime_error("failed writing " + (dir / "targets.json").string());
}

TargetSet load_targets(const std::filesystem::path& dir) {
    const auto index = dir / "targets.json";
    std::ifstream in(index);
    if (!in) throw FormatError("targets.json", "cannot open " + index.string());
    TargetSet set;
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("version").get<int>() != 1) throw FormatError("targets.json", "unsupported version");
        for (const auto& e : j.at("items")) {
            TargetItem t;
            const auto split = e.at("split").get<std::string>();
            if (split != "train" && split != "holdout") throw FormatError("targets.json", "unknown split " + split);
            t.split = split == "train" ? Split::train : Split::holdout;
            t.camera = camera_from_json(e.at("camera"));
            t.params.beta = e.at("beta").get<std::vector<double>>();
            t.params.theta = e.at("theta").get<std::vector<double>>();
            t.params.psi = e.at("psi").get<std::vector<double>>();
            t.image = from_rgb8(read_png(dir / e.at("image").get<std::string>()));
            set.items.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("targets.json", e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError("targets.json", e.what());
    }
    set.validate(0);
    return set;
}

}  // namespace gaga
