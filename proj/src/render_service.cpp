#include "gaga/render_service.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "httplib.h"

#include "gaga/errors.hpp"
#include "gaga/io.hpp"

namespace gaga {

namespace {

bool read_number(const nlohmann::json& obj, const char* key, const std::string& path, double& out,
                 std::vector<FieldError>& errors) {
    if (!obj.contains(key)) return false;
    const auto& v = obj[key];
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
        errors.push_back({path + key, "must be a finite number"});
        return false;
    }
    out = v.get<double>();
    return true;
}

void read_array(const nlohmann::json& obj, const char* key, const std::string& path, std::vector<double>& out,
                std::vector<FieldError>& errors) {
    if (!obj.contains(key)) return;
    const auto& v = obj[key];
    if (!v.is_array()) {
        errors.push_back({path + key, "must be an array of numbers"});
        return;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
            errors.push_back({path + key + "[" + std::to_string(i) + "]", "must be a finite number"});
            return;
        }
        out.push_back(v[i].get<double>());
    }
}

void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known, const std::string& path,
                    std::vector<FieldError>& errors) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) errors.push_back({path + it.key(), "unknown field"});
    }
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

HttpResponse json_response(int status, const nlohmann::json& j) {
    return {status, "application/json", j.dump(), -1.0};
}

HttpResponse error_response(int status, const std::vector<FieldError>& errors) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& e : errors) list.push_back({{"field", e.field}, {"message", e.message}});
    return json_response(status, {{"error", status == 422 ? "dimension mismatch" : "invalid request"}, {"fields", list}});
}

}  // namespace

ParsedRequest parse_render_request(const std::string& body, int max_resolution, double near_plane) {
    ParsedRequest out;
    auto& errors = out.errors;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        errors.push_back({"body", std::string("not valid JSON: ") + e.what()});
        return out;
    }
    if (!j.is_object()) {
        errors.push_back({"body", "must be a JSON object"});
        return out;
    }
    reject_unknown(j, {"camera", "expression", "resolution", "decoder"}, "", errors);
    RenderRequest r;
    if (j.contains("camera")) {
        const auto& c = j["camera"];
        if (!c.is_object()) {
            errors.push_back({"camera", "must be an object"});
        } else {
            reject_unknown(c, {"yaw", "pitch", "distance", "fov"}, "camera.", errors);
            read_number(c, "yaw", "camera.", r.yaw, errors);
            if (read_number(c, "pitch", "camera.", r.pitch, errors) && std::abs(r.pitch) > 89.0)
                errors.push_back({"camera.pitch", "must lie in [-89, 89] degrees"});
            if (read_number(c, "distance", "camera.", r.distance, errors) &&
                !(r.distance > near_plane && r.distance <= 100.0))
                errors.push_back({"camera.distance", "must be greater than the near plane (" +
                                                         std::to_string(near_plane) + ") and at most 100"});
            if (read_number(c, "fov", "camera.", r.fov, errors) && !(r.fov > 1.0 && r.fov < 170.0))
                errors.push_back({"camera.fov", "must lie in (1, 170) degrees"});
        }
    }
    if (j.contains("expression")) {
        const auto& e = j["expression"];
        if (!e.is_object()) {
            errors.push_back({"expression", "must be an object"});
        } else {
            reject_unknown(e, {"psi", "theta"}, "expression.", errors);
            read_array(e, "psi", "expression.", r.psi, errors);
            read_array(e, "theta", "expression.", r.theta, errors);
        }
    }
    if (j.contains("resolution")) {
        const auto& v = j["resolution"];
        if (!v.is_number_integer()) {
            errors.push_back({"resolution", "must be an integer"});
        } else {
            const auto res = v.get<std::int64_t>();
            if (res < 16 || res > max_resolution)
                errors.push_back({"resolution", "must lie in [16, " + std::to_string(max_resolution) + "]"});
            else
                r.resolution = static_cast<int>(res);
        }
    }
    if (j.contains("decoder")) {
        const auto& v = j["decoder"];
        if (!v.is_string() || (v != "affine" && v != "conv"))
            errors.push_back({"decoder", "must be \"affine\" or \"conv\""});
        else
            r.decoder = decoder_mode_from_string(v.get<std::string>());
    }
    if (errors.empty()) out.request = std::move(r);
    return out;
}

nlohmann::json request_to_json(const RenderRequest& r) {
    nlohmann::json j = {{"camera", {{"yaw", r.yaw}, {"pitch", r.pitch}, {"distance", r.distance}, {"fov", r.fov}}},
                        {"expression", {{"psi", r.psi}, {"theta", r.theta}}},
                        {"resolution", r.resolution}};
    if (r.decoder) j["decoder"] = to_string(*r.decoder);
    return j;
}

Camera request_camera(const RenderRequest& r) {
    return orbit_camera(r.yaw, r.pitch, r.distance, r.fov, r.resolution, r.resolution);
}

std::vector<std::uint8_t> render_png(Reenactor& reenactor, const RenderRequest& request, double* render_ms) {
    const auto& model = reenactor.model();
    std::vector<double> psi = request.psi.empty() ? std::vector<double>(model.n_psi, 0.0) : request.psi;
    std::vector<double> theta = request.theta.empty() ? std::vector<double>(model.n_theta, 0.0) : request.theta;
    const ExpressionParams params = reenactor.params(psi, theta);
    const auto start = std::chrono::steady_clock::now();
    const Image img = reenactor.render(params, request_camera(request), request.decoder);
    for (const double v : img.data)
        if (!std::isfinite(v)) throw NumericError("render produced non-finite pixels");
    if (render_ms)
        *render_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return encode_png(to_rgb8(img));
}

RenderService::RenderService(std::shared_ptr<Reenactor> reenactor, ServiceOptions options)
    : reenactor_(std::move(reenactor)), options_(std::move(options)) {
    if (options_.max_resolution < 16) throw std::invalid_argument("max resolution must be at least 16");
}

HttpResponse RenderService::meta() const {
    if (!reenactor_) return json_response(503, {{"error", "no avatar loaded"}});
    const auto& model = reenactor_->model();
    const auto& avatar = reenactor_->avatar();
    nlohmann::json resolutions = nlohmann::json::array();
    for (const int r : {64, 128, 256, 512, 1024})
        if (r <= options_.max_resolution) resolutions.push_back(r);
    const RenderRequest defaults;
    return json_response(
        200, {{"api", kServiceApiVersion},
              {"avatar_id", hex64(reenactor_->avatar_id())},
              {"model",
               {{"vertices", model.num_vertices()},
                {"n_beta", model.n_beta},
                {"n_theta", model.n_theta},
                {"n_psi", model.n_psi}}},
              {"psi", {{"length", model.n_psi}, {"range", {-kSliderLimit, kSliderLimit}}}},
              {"theta", {{"length", model.n_theta}, {"range", {-kSliderLimit, kSliderLimit}}}},
              {"resolutions", resolutions},
              {"max_resolution", options_.max_resolution},
              {"grid_res", avatar.grids.res},
              {"decoder", to_string(avatar.decoder.mode)},
              {"default_camera",
               {{"yaw", defaults.yaw}, {"pitch", defaults.pitch}, {"distance", defaults.distance},
                {"fov", defaults.fov}}}});
}

HttpResponse RenderService::render(const std::string& body) {
    if (!reenactor_) return json_response(503, {{"error", "no avatar loaded"}});
    auto parsed = parse_render_request(body, options_.max_resolution);
    if (!parsed.request) return error_response(400, parsed.errors);
    const auto& req = *parsed.request;
    const auto& model = reenactor_->model();
    std::vector<FieldError> dims;
    if (!req.psi.empty() && req.psi.size() != model.n_psi)
        dims.push_back({"expression.psi", "has " + std::to_string(req.psi.size()) + " values, model expects " +
                                              std::to_string(model.n_psi)});
    if (!req.theta.empty() && req.theta.size() != model.n_theta)
        dims.push_back({"expression.theta", "has " + std::to_string(req.theta.size()) + " values, model expects " +
                                                std::to_string(model.n_theta)});
    if (!dims.empty()) return error_response(422, dims);
    try {
        double ms = 0.0;
        const auto png = render_png(*reenactor_, req, &ms);
        return {200, "image/png", std::string(png.begin(), png.end()), ms};
    } catch (const NumericError& e) {
        return json_response(500, {{"error", "numeric failure"}, {"detail", e.what()}});
    }
}

void RenderService::mount(httplib::Server& server) {
    const auto send = [](httplib::Response& res, const HttpResponse& r) {
        res.status = r.status;
        if (r.render_ms >= 0.0) res.set_header("X-Render-Ms", std::to_string(r.render_ms));
        res.set_content(r.body, r.content_type);
    };
    server.Get("/meta", [this, send](const httplib::Request&, httplib::Response& res) { send(res, meta()); });
    server.Post("/render", [this, send](const httplib::Request& req, httplib::Response& res) {
        try {
            send(res, render(req.body));
        } catch (const std::exception& e) {
            send(res, json_response(500, {{"error", "render failed"}, {"detail", e.what()}}));
        }
    });
    if (!options_.static_dir.empty()) {
        if (!server.set_mount_point("/", options_.static_dir.string()))
            throw std::invalid_argument("static directory not found: " + options_.static_dir.string());
    }
}

}  // namespace gaga
