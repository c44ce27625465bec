#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gaga/reenact.hpp"

namespace httplib {
class Server;
}

namespace gaga {

inline constexpr int kServiceApiVersion = 1;
inline constexpr double kSliderLimit = 3.0;

/// Orbit camera plus expression; what a slider UI sends.
struct RenderRequest {
    double yaw = 0.0;
    double pitch = 0.0;
    double distance = 4.0;
    double fov = 36.0;
    std::vector<double> psi;    // empty means zeros
    std::vector<double> theta;  // empty means zeros
    int resolution = 256;
    std::optional<DecoderMode> decoder;
};

struct FieldError {
    std::string field;
    std::string message;
};

struct ParsedRequest {
    std::optional<RenderRequest> request;
    std::vector<FieldError> errors;  // non-empty iff request is empty
};

/// Field-level validation of a JSON request body.
[[nodiscard]] ParsedRequest parse_render_request(const std::string& body, int max_resolution,
                                                 double near_plane = RenderSettings{}.near_plane);
[[nodiscard]] nlohmann::json request_to_json(const RenderRequest& request);

[[nodiscard]] Camera request_camera(const RenderRequest& request);

/// Renders and PNG-encodes one request. Throws std::invalid_argument on
/// coefficient-length mismatch and NumericError on non-finite output. This is
/// the single code path shared by the CLI and the HTTP service.
[[nodiscard]] std::vector<std::uint8_t> render_png(Reenactor& reenactor, const RenderRequest& request,
                                                   double* render_ms = nullptr);

struct ServiceOptions {
    int max_resolution = 512;
    std::filesystem::path static_dir;  // served at "/" when set
};

struct HttpResponse {
    int status = 200;
    std::string content_type;
    std::string body;
    double render_ms = -1.0;  // only for successful renders
};

/// Endpoint logic, independent of the transport.
class RenderService {
public:
    RenderService(std::shared_ptr<Reenactor> reenactor, ServiceOptions options);

    [[nodiscard]] HttpResponse meta() const;
    [[nodiscard]] HttpResponse render(const std::string& body);

    /// Registers GET /meta, POST /render and the static mount.
    void mount(httplib::Server& server);

private:
    std::shared_ptr<Reenactor> reenactor_;
    ServiceOptions options_;
};

}  // namespace gaga
