#include "gaga/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace gaga {

namespace {

// Signed ray parameters of every triangle crossing the line o + t*d.
void line_hits(const std::vector<double>& verts, const BlendshapeModel& model, const Eigen::Vector3d& o,
               const Eigen::Vector3d& d, double& t_min, double& t_max, int& count) {
    t_min = std::numeric_limits<double>::infinity();
    t_max = -std::numeric_limits<double>::infinity();
    count = 0;
    for (const auto& tri : model.triangles) {
        const Eigen::Vector3d a(&verts[tri[0] * 3]), b(&verts[tri[1] * 3]), c(&verts[tri[2] * 3]);
        const Eigen::Vector3d e1 = b - a, e2 = c - a;
        const Eigen::Vector3d p = d.cross(e2);
        const double det = e1.dot(p);
        if (std::abs(det) < 1e-14) continue;
        const double inv = 1.0 / det;
        const Eigen::Vector3d s = o - a;
        const double u = s.dot(p) * inv;
        if (u < 0.0 || u > 1.0) continue;
        const Eigen::Vector3d q = s.cross(e1);
        const double v = d.dot(q) * inv;
        if (v < 0.0 || u + v > 1.0) continue;
        const double t = e2.dot(q) * inv;
        t_min = std::min(t_min, t);
        t_max = std::max(t_max, t);
        ++count;
    }
}

Eigen::Vector3d texture(const Eigen::Vector3d& p) {
    return {0.72 + 0.18 * std::sin(6.0 * p.x() + 2.0 * p.y()),
            0.52 + 0.16 * std::sin(5.0 * p.y() + 1.0) * std::cos(4.0 * p.z()),
            0.42 + 0.16 * std::cos(6.0 * p.z() - 3.0 * p.x())};
}

}  // namespace

Avatar make_ground_truth_avatar(const BlendshapeModel& model, const Camera& source_camera,
                                const GroundTruthOptions& options, std::uint64_t seed) {
    model.validate();
    AvatarInit init;
    init.grid_res = options.grid_res;
    init.extent = options.extent;
    init.head = options.head;
    init.vertex_dim = options.vertex_dim;
    init.global_dim = options.global_dim;
    init.decoder = options.decoder;
    init.bank_stddev = 1.0;
    Avatar gt = init_avatar(model, source_camera, init, seed);

    const LiftingPlane plane = gt.plane();
    const auto verts = evaluate(model, ExpressionParams::zeros(model));
    const auto k = static_cast<std::size_t>(gt.grids.channels);
    const std::size_t rec = gt.grids.record_size();
    const double cell = 2.0 * options.extent / (options.grid_res - 1);
    std::mt19937_64 rng(seed + 17);
    std::normal_distribution<double> noise(0.0, 1.0);
    const Eigen::Vector3d n = plane.plane.normal;

    for (std::size_t p = 0; p < gt.grids.pixels(); ++p) {
        const Eigen::Vector3d o(&plane.points[p * 3]);
        double t_min = 0.0, t_max = 0.0;
        int hits = 0;
        line_hits(verts, model, o, n, t_min, t_max, hits);
        const bool inside = hits >= 2 && t_max > 0.0 && t_min < 0.0;
        for (int s = 0; s < 2; ++s) {
            double* r = (s == 0 ? gt.grids.front.data() : gt.grids.back.data()) + p * rec;
            double* a = r + lifting_record::kAttributes;
            const double lift = inside ? (s == 0 ? t_max : -t_min) : 0.05;
            r[lifting_record::kDistance] = activation::softplus_inverse(std::max(lift, 0.01)) + 0.01 * noise(rng);
            const Eigen::Vector3d surface = o + (s == 0 ? lift : -lift) * n;
            const Eigen::Vector3d rgb = texture(surface);
            for (std::size_t c = 0; c < k; ++c) a[c] = c < 3 ? rgb[static_cast<Eigen::Index>(c)] : 0.1 * noise(rng);
            a[k] = inside ? activation::logit(0.95) + 0.2 * noise(rng) : activation::logit(0.01);
            for (int c = 0; c < 3; ++c) a[k + 1 + c] = std::log(1.6 * cell) + 0.05 * noise(rng);
            a[k + 4] = 1.0;
            for (int c = 5; c < 8; ++c) a[k + c] = 0.05 * noise(rng);
        }
    }

    // Visible, mouth-tinted expression splats.
    auto& last = gt.head.layers.back();
    last.weight *= 5.0;
    const double tint[3] = {0.75, 0.25, 0.3};
    for (int c = 0; c < 3; ++c) last.bias[c] = tint[c];
    last.bias[static_cast<Eigen::Index>(k)] = activation::logit(0.7);
    for (int c = 1; c <= 3; ++c) last.bias[static_cast<Eigen::Index>(k) + c] = std::log(0.035);
    gt.grids.validate();
    return gt;
}

TargetSet synth_targets(const BlendshapeModel& model, const Avatar& ground_truth, const std::vector<Camera>& cameras,
                        const std::vector<ExpressionParams>& expressions, Split split, const RenderSettings& settings) {
    TargetSet set;
    for (const auto& cam : cameras)
        for (const auto& params : expressions) {
            TargetItem item;
            item.camera = cam;
            item.params = params;
            item.split = split;
            item.image = render_avatar(ground_truth, model, params, cam, settings).fine;
            set.items.push_back(std::move(item));
        }
    return set;
}

std::vector<Camera> ring_cameras(int count, double distance, double fov_deg, int resolution, double arc_deg) {
    if (count < 1) throw std::invalid_argument("ring needs at least one camera");
    if (!(arc_deg >= 0.0 && arc_deg <= 360.0)) throw std::invalid_argument("ring arc must lie in [0, 360] degrees");
    std::vector<Camera> out;
    for (int i = 0; i < count; ++i) {
        // A full circle spaces cameras evenly without repeating the start;
        // a partial arc is centred on the frontal view and includes both ends.
        const double yaw = arc_deg >= 360.0 ? 360.0 * i / count
                           : count == 1     ? 0.0
                                            : -0.5 * arc_deg + arc_deg * i / (count - 1);
        out.push_back(orbit_camera(yaw, 0.0, distance, fov_deg, resolution, resolution));
    }
    return out;
}

ToyScene make_toy_scene(const ToySceneOptions& options) {
    ToyScene scene;
    ToyModelOptions mo;
    mo.seed = options.seed;
    mo.vertices = options.vertices;
    scene.model = generate_toy_model(mo);
    scene.source_camera =
        orbit_camera(0.0, 0.0, options.camera_distance, options.fov_deg, options.resolution, options.resolution);
    GroundTruthOptions go;
    go.grid_res = options.grid_res;
    go.decoder = options.decoder;
    scene.ground_truth = make_ground_truth_avatar(scene.model, scene.source_camera, go, options.seed + 100);

    auto neutral = ExpressionParams::zeros(scene.model);
    auto open = neutral;
    open.psi[0] = 2.5;
    auto mixed = neutral;
    mixed.psi[0] = -1.5;
    mixed.psi[1] = 1.5;
    mixed.theta[0] = 0.3;
    auto half = neutral;
    half.psi[0] = 1.2;

    const auto ring =
        ring_cameras(8, options.camera_distance, options.fov_deg, options.resolution, options.ring_arc_deg);
    scene.targets = synth_targets(scene.model, scene.ground_truth, ring, {neutral, open, mixed}, Split::train);

    // Novel poses between and above the training views.
    const double views[4][2] = {{22.5, 10.0}, {-67.5, -8.0}, {50.0, 5.0}, {0.0, 20.0}};
    const ExpressionParams* held[4] = {&open, &neutral, &mixed, &half};
    for (int i = 0; i < 4; ++i) {
        const Camera cam = orbit_camera(views[i][0], views[i][1], options.camera_distance, options.fov_deg,
                                        options.resolution, options.resolution);
        auto extra = synth_targets(scene.model, scene.ground_truth, {cam}, {*held[i]}, Split::holdout);
        scene.targets.items.push_back(std::move(extra.items.front()));
    }
    return scene;
}

}  // namespace gaga
