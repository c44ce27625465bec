// gaga: command-line front end for models, fitting, rendering and serving.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include "gaga/errors.hpp"
#include "gaga/fitting.hpp"
#include "gaga/io.hpp"
#include "gaga/reenact.hpp"
#include "gaga/render_service.hpp"

// After Eigen: <resolv.h> defines a macro named _res.
#include "CLI11.hpp"
#include "httplib.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadArgs = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumeric = 4;

struct LoadedAvatar {
    std::shared_ptr<gaga::Avatar> avatar;
    std::shared_ptr<gaga::BlendshapeModel> model;
};

// The model path falls back to the one recorded in the avatar file.
LoadedAvatar load_pair(const std::string& avatar_path, const std::string& model_path) {
    gaga::AvatarFileInfo info;
    auto avatar = std::make_shared<gaga::Avatar>(gaga::load_avatar(avatar_path, &info));
    const std::string path = model_path.empty() ? info.model_path : model_path;
    if (path.empty()) throw std::invalid_argument("avatar does not record its model; pass --model");
    auto model = std::make_shared<gaga::BlendshapeModel>(gaga::load_model(path));
    if (gaga::model_hash(*model) != avatar->model_hash)
        throw gaga::FormatError("model", "model " + path + " does not match the avatar's model hash");
    return {avatar, model};
}

std::filesystem::path beside(const std::filesystem::path& out, const std::string& suffix) {
    auto p = out;
    p.replace_extension(suffix);
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gaga: dual-lifting Gaussian head avatars"};
    app.require_subcommand(1);

    // model gen
    auto* model_cmd = app.add_subcommand("model", "blendshape model tools");
    model_cmd->require_subcommand(1);
    auto* gen = model_cmd->add_subcommand("gen", "write a procedural toy model");
    gaga::ToyModelOptions gen_opts;
    std::string gen_out;
    gen->add_option("--seed", gen_opts.seed, "random seed");
    gen->add_option("--vertices", gen_opts.vertices, "vertex count")->check(CLI::Range(4, 1000000));
    gen->add_option("--n-beta", gen_opts.n_beta, "shape coefficients");
    gen->add_option("--n-theta", gen_opts.n_theta, "pose coefficients");
    gen->add_option("--n-psi", gen_opts.n_psi, "expression coefficients");
    gen->add_option("--out", gen_out, "output .gagm")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "write a toy model, ground-truth avatar and target views");
    gaga::ToySceneOptions scene_opts;
    std::string synth_dir, synth_decoder = "affine";
    synth->add_option("--seed", scene_opts.seed, "random seed");
    synth->add_option("--vertices", scene_opts.vertices, "model vertex count");
    synth->add_option("--grid-res", scene_opts.grid_res, "lifting grid resolution");
    synth->add_option("--res", scene_opts.resolution, "target image resolution");
    synth->add_option("--arc", scene_opts.ring_arc_deg, "yaw span of the training ring, degrees")
        ->check(CLI::Range(0.0, 360.0));
    synth->add_option("--decoder", synth_decoder, "ground-truth decoder")->check(CLI::IsMember({"affine", "conv"}));
    synth->add_option("--out-dir", synth_dir, "output directory")->required();

    // fit
    auto* fit = app.add_subcommand("fit", "fit an avatar to target views");
    std::string fit_model, fit_targets, fit_out, fit_decoder = "affine";
    gaga::FitConfig fit_cfg;
    fit_cfg.adam.learning_rate = 1e-2;
    int fit_grid = 64;
    bool fit_freeze_global = false;
    int fit_source = -1;
    fit->add_option("--model", fit_model, "model .gagm")->required();
    fit->add_option("--targets", fit_targets, "targets directory")->required();
    fit->add_option("--out", fit_out, "output .gaga (loss CSV is written beside it)")->required();
    fit->add_option("--iters", fit_cfg.iterations, "iterations")->check(CLI::PositiveNumber);
    fit->add_option("--lambda-p", fit_cfg.weights.lambda_p, "pyramid loss weight")->check(CLI::NonNegativeNumber);
    fit->add_option("--lambda-l", fit_cfg.weights.lambda_l, "lifting loss weight")->check(CLI::NonNegativeNumber);
    fit->add_option("--decoder", fit_decoder, "decoder mode")->check(CLI::IsMember({"affine", "conv"}));
    fit->add_option("--seed", fit_cfg.seed, "random seed");
    fit->add_option("--lr", fit_cfg.adam.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    fit->add_option("--batch", fit_cfg.batch, "views per step")->check(CLI::PositiveNumber);
    fit->add_option("--grid-res", fit_grid, "lifting grid resolution")->check(CLI::Range(2, 4096));
    fit->add_flag("--no-global-feature", fit_freeze_global, "keep the identity feature at zero");
    fit->add_option("--source-view", fit_source, "target index defining the lifting plane (default: most frontal)")
        ->check(CLI::NonNegativeNumber);

    // render
    auto* render = app.add_subcommand("render", "render an avatar to PNG");
    std::string render_avatar_path, render_model, render_out, render_decoder;
    gaga::RenderRequest req;
    render->add_option("--avatar", render_avatar_path, "avatar .gaga")->required();
    render->add_option("--model", render_model, "model .gagm (defaults to the path stored in the avatar)");
    render->add_option("--yaw", req.yaw, "degrees");
    render->add_option("--pitch", req.pitch, "degrees")->check(CLI::Range(-89.0, 89.0));
    render->add_option("--dist", req.distance, "camera distance")->check(CLI::Range(0.06, 100.0));
    render->add_option("--fov", req.fov, "vertical field of view, degrees")->check(CLI::Range(1.0, 170.0));
    render->add_option("--psi", req.psi, "expression coefficients")->delimiter(',');
    render->add_option("--theta", req.theta, "pose coefficients")->delimiter(',');
    render->add_option("--res", req.resolution, "square image size")->check(CLI::Range(16, 4096));
    render->add_option("--decoder", render_decoder, "decoder override")->check(CLI::IsMember({"affine", "conv"}));
    render->add_option("--out", render_out, "output PNG")->required();

    // export-ply
    auto* ply = app.add_subcommand("export-ply", "export the dual-lift point cloud");
    std::string ply_avatar, ply_model, ply_out;
    double ply_threshold = 0.5;
    bool ply_expression = false;
    ply->add_option("--avatar", ply_avatar, "avatar .gaga")->required();
    ply->add_option("--threshold", ply_threshold, "minimum opacity")->check(CLI::Range(0.0, 0.999999));
    ply->add_option("--out", ply_out, "output .ply (defaults beside the avatar)");
    ply->add_option("--model", ply_model, "model .gagm, needed with --with-expression");
    ply->add_flag("--with-expression", ply_expression, "append neutral expression splats");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "time the splatting renderer");
    std::size_t bench_count = 175232, bench_frames = 5;
    int bench_res = 512, bench_channels = 32;
    std::uint64_t bench_seed = 0;
    std::string bench_out;
    bench_cmd->add_option("--gaussians", bench_count, "splat count")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--res", bench_res, "square image size")->check(CLI::Range(16, 4096));
    bench_cmd->add_option("--channels", bench_channels, "feature channels")->check(CLI::Range(1, 256));
    bench_cmd->add_option("--frames", bench_frames, "frames to time")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--seed", bench_seed, "random seed");
    bench_cmd->add_option("--out", bench_out, "write the JSON report here instead of stdout");

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP reenactment service");
    std::string serve_avatar, serve_model, serve_host = "127.0.0.1", serve_static;
    int serve_port = 8080;
    gaga::ServiceOptions serve_opts;
    serve->add_option("--avatar", serve_avatar, "avatar .gaga");
    serve->add_option("--model", serve_model, "model .gagm");
    serve->add_option("--port", serve_port, "TCP port")->check(CLI::Range(1, 65535));
    serve->add_option("--host", serve_host, "bind address");
    serve->add_option("--max-res", serve_opts.max_resolution, "largest accepted resolution")
        ->check(CLI::Range(16, 4096));
    serve->add_option("--static-dir", serve_static, "viewer bundle served at /");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitBadArgs;
    }

    try {
        if (gen->parsed()) {
            gaga::save_model(gaga::generate_toy_model(gen_opts), gen_out);
        } else if (synth->parsed()) {
            scene_opts.decoder = gaga::decoder_mode_from_string(synth_decoder);
            const auto scene = gaga::make_toy_scene(scene_opts);
            const std::filesystem::path dir = synth_dir;
            std::filesystem::create_directories(dir);
            gaga::save_model(scene.model, dir / "model.gagm");
            gaga::AvatarFileInfo info;
            info.model_path = (dir / "model.gagm").string();
            info.fit = {{"seed", scene_opts.seed}, {"ground_truth", true}};
            gaga::save_avatar(scene.ground_truth, dir / "ground_truth.gaga", info);
            gaga::save_targets(scene.targets, dir / "targets");
            std::printf("wrote %zu targets to %s\n", scene.targets.items.size(), (dir / "targets").c_str());
        } else if (fit->parsed()) {
            const auto model = gaga::load_model(fit_model);
            const auto targets = gaga::load_targets(fit_targets);
            if (targets.items.empty()) throw std::invalid_argument("target set is empty");
            fit_cfg.resolution = targets.items.front().image.width;
            const auto train = targets.indices(gaga::Split::train);
            if (train.empty()) throw std::invalid_argument("target set has no training views");
            gaga::AvatarInit init;
            init.grid_res = fit_grid;
            init.decoder = gaga::decoder_mode_from_string(fit_decoder);
            init.freeze_global = fit_freeze_global;
            // Source view: the training camera looking most nearly down -z.
            std::size_t source = train.front();
            if (fit_source >= 0) {
                source = static_cast<std::size_t>(fit_source);
                if (source >= targets.items.size())
                    throw std::invalid_argument("--source-view " + std::to_string(fit_source) + " is out of range");
            } else {
                for (const std::size_t i : train)
                    if (targets.items[i].camera.view_direction().z() < targets.items[source].camera.view_direction().z())
                        source = i;
            }
            gaga::Avatar start = gaga::init_avatar(model, targets.items[source].camera, init, fit_cfg.seed);
            start.identity_beta = targets.items[source].params.beta;
            const auto t0 = std::chrono::steady_clock::now();
            const auto result = gaga::fit_avatar(model, targets, fit_cfg, start, [&](const gaga::LossRecord& r) {
                if (r.iteration % 100 == 0)
                    std::fprintf(stderr, "iter %5d  loss %.6f  l1_fine %.6f\n", r.iteration, r.parts.total,
                                 r.parts.l1_fine);
                return true;
            });
            gaga::AvatarFileInfo info;
            info.model_path = std::filesystem::absolute(fit_model).string();
            info.fit = {{"lambda_p", fit_cfg.weights.lambda_p}, {"lambda_l", fit_cfg.weights.lambda_l},
                        {"seed", fit_cfg.seed},                 {"iterations", fit_cfg.iterations},
                        {"learning_rate", fit_cfg.adam.learning_rate}};
            gaga::save_avatar(result.avatar, fit_out, info);
            gaga::write_loss_csv(result.history, beside(fit_out, ".csv"));
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("fit %d iterations in %.1f s, final loss %.6f\n", fit_cfg.iterations, secs,
                        result.history.empty() ? 0.0 : result.history.back().parts.total);
        } else if (render->parsed()) {
            const auto pair = load_pair(render_avatar_path, render_model);
            if (!render_decoder.empty()) req.decoder = gaga::decoder_mode_from_string(render_decoder);
            gaga::Reenactor reenactor(pair.avatar, pair.model);
            const auto png = gaga::render_png(reenactor, req);
            std::ofstream out(render_out, std::ios::binary);
            out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
            if (!out) throw std::runtime_error("failed writing " + render_out);
        } else if (ply->parsed()) {
            gaga::AvatarFileInfo info;
            const auto avatar = gaga::load_avatar(ply_avatar, &info);
            gaga::GaussianCloud cloud = gaga::assemble_dual_lift(avatar.grids, avatar.plane());
            const std::size_t dual = cloud.size();
            std::size_t expr = 0;
            if (ply_expression) {
                const auto pair = load_pair(ply_avatar, ply_model);
                auto params = gaga::ExpressionParams::zeros(*pair.model);
                params.beta = avatar.identity_beta;
                const auto e = gaga::expression_gaussians(*pair.model, params, avatar.bank, avatar.head);
                expr = e.size();
                cloud = gaga::merge_clouds(cloud, e);
            }
            const std::string out = ply_out.empty() ? beside(ply_avatar, ".ply").string() : ply_out;
            const auto kept = gaga::export_ply(cloud, gaga::dual_lift_sources(dual, expr), out, ply_threshold);
            std::printf("wrote %zu of %zu splats to %s\n", kept, cloud.size(), out.c_str());
        } else if (bench_cmd->parsed()) {
            const auto cloud = gaga::random_cloud(bench_count, bench_channels, bench_seed);
            const auto camera = gaga::orbit_camera(0.0, 0.0, 3.0, 36.0, bench_res, bench_res);
            const auto report = gaga::bench(cloud, camera, {}, bench_frames);
            if (bench_out.empty()) {
                std::printf("%s\n", report.to_json().c_str());
            } else {
                std::ofstream out(bench_out);
                out << report.to_json() << '\n';
            }
        } else if (serve->parsed()) {
            std::shared_ptr<gaga::Reenactor> reenactor;
            if (!serve_avatar.empty()) {
                const auto pair = load_pair(serve_avatar, serve_model);
                reenactor = std::make_shared<gaga::Reenactor>(pair.avatar, pair.model);
            }
            serve_opts.static_dir = serve_static;
            gaga::RenderService service(reenactor, serve_opts);
            httplib::Server server;
            service.mount(server);
            std::printf("listening on http://%s:%d\n", serve_host.c_str(), serve_port);
            std::fflush(stdout);
            if (!server.listen(serve_host, serve_port)) throw std::runtime_error("cannot bind port");
        }
    } catch (const gaga::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return kExitFormat;
    } catch (const gaga::NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid argument: %s\n", e.what());
        return kExitBadArgs;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kExitOk;
}
