#include <cmath>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "gaga/errors.hpp"
#include "gaga/fitting.hpp"
#include "gaga/reenact.hpp"
#include "support.hpp"

using namespace gaga;

namespace {

ToySceneOptions small_scene_options() {
    ToySceneOptions o;
    o.seed = 7;
    o.vertices = 64;
    o.grid_res = 16;
    o.resolution = 32;
    return o;
}

const ToyScene& small_scene() {
    static const ToyScene scene = make_toy_scene(small_scene_options());
    return scene;
}

AvatarInit small_init() {
    AvatarInit init;
    init.grid_res = 16;
    init.head = {64, 32, 3, kFeatureDim + 8};
    init.vertex_dim = 32;
    init.global_dim = 32;
    return init;
}

FitConfig small_config(int iterations) {
    FitConfig cfg;
    cfg.adam.learning_rate = 1e-2;
    cfg.iterations = iterations;
    cfg.resolution = 32;
    cfg.seed = 1;
    return cfg;
}

}  // namespace

TEST_CASE("adam step follows the bias-corrected update") {
    std::vector<double> p{1.0, -2.0}, g{0.5, -0.25};
    std::vector<std::span<double>> params{p}, grads{g};
    AdamState st;
    AdamConfig cfg;
    cfg.learning_rate = 0.1;
    adam_step(st, params, grads, cfg);
    // First step: m_hat = g, v_hat = g^2, so every value moves by lr * sign(g).
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)));
    CHECK(p[1] == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-8)));
    g = {0.1, 0.1};
    adam_step(st, params, grads, cfg);
    const double m = 0.9 * (0.1 * 0.5) + 0.1 * 0.1, v = 0.999 * (0.001 * 0.25) + 0.001 * 0.01;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8) - 0.1 * mh / (std::sqrt(vh) + 1e-8)));
    CHECK(st.step == 2);
}

TEST_CASE("adam rejects mismatched blocks") {
    std::vector<double> p{1.0}, g{1.0, 2.0};
    std::vector<std::span<double>> params{p}, grads{g};
    AdamState st;
    CHECK_THROWS_AS(adam_step(st, params, grads, {}), std::invalid_argument);
}

TEST_CASE("fit config validation") {
    FitConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.iterations = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.adam.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.batch = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("toy scene has the ring and holdout splits") {
    const ToyScene& s = small_scene();
    CHECK(s.targets.indices(Split::train).size() == 24);
    CHECK(s.targets.indices(Split::holdout).size() == 4);
    CHECK_NOTHROW(s.targets.validate(32));
    CHECK_THROWS_AS(s.targets.validate(64), std::invalid_argument);
    for (const auto& t : s.targets.items)
        for (double x : t.image.data) CHECK(std::isfinite(x));
    const auto ring = ring_cameras(8, 4.0, 36.0, 32);
    CHECK(ring.size() == 8);
    for (const auto& c : ring) CHECK(c.center().norm() == doctest::Approx(4.0));
    CHECK(ring[4].center().z() == doctest::Approx(-4.0));
    const auto arc = ring_cameras(8, 4.0, 36.0, 32, 180.0);
    CHECK(arc.front().center().x() == doctest::Approx(-4.0));
    CHECK(arc.back().center().x() == doctest::Approx(4.0));
    for (const auto& c : arc) CHECK(c.center().z() >= -1e-12);
    CHECK_THROWS_AS((void)ring_cameras(8, 4.0, 36.0, 32, 400.0), std::invalid_argument);
}

TEST_CASE("ground truth reproduces its own targets") {
    const ToyScene& s = small_scene();
    CHECK(mean_l1(s.ground_truth, s.model, s.targets, Split::train) <= 1e-10);
    LossWeights w;
    w.lambda_l = 0.0;
    for (const auto& t : s.targets.items) {
        const LossBreakdown l = evaluate_target(s.ground_truth, s.model, t, w, {}, false).loss;
        CHECK(l.l1_coarse + l.l1_fine + l.pyramid <= 1e-10);
    }
}

TEST_CASE("zero iterations return the initial avatar") {
    const ToyScene& s = small_scene();
    const Avatar init = init_avatar(s.model, s.source_camera, small_init(), 2);
    const FitResult r = fit_avatar(s.model, s.targets, small_config(0), init);
    CHECK(r.history.empty());
    Avatar a = init, b = r.avatar;
    const auto pa = parameter_blocks(a), pb = parameter_blocks(b);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(std::equal(pa[i].begin(), pa[i].end(), pb[i].begin()));
}

TEST_CASE("short fit lowers the training loss and is deterministic") {
    const ToyScene& s = small_scene();
    const Avatar init = init_avatar(s.model, s.source_camera, small_init(), 2);
    FitConfig cfg = small_config(60);
    cfg.batch = 2;
    int observed = 0;
    const FitResult r = fit_avatar(s.model, s.targets, cfg, init, [&](const LossRecord&) {
        ++observed;
        return true;
    });
    CHECK(observed == 60);
    CHECK(r.history.size() == 60);
    CHECK(mean_l1(r.avatar, s.model, s.targets, Split::train) < mean_l1(init, s.model, s.targets, Split::train));
    const FitResult again = fit_avatar(s.model, s.targets, cfg, init);
    for (std::size_t i = 0; i < 60; ++i) CHECK(again.history[i].parts.total == r.history[i].parts.total);
}

TEST_CASE("observer can stop a fit early") {
    const ToyScene& s = small_scene();
    const Avatar init = init_avatar(s.model, s.source_camera, small_init(), 2);
    const FitResult r =
        fit_avatar(s.model, s.targets, small_config(50), init, [](const LossRecord& rec) { return rec.iteration < 4; });
    CHECK(r.history.size() == 5);
}

TEST_CASE("fitted avatars are float32-exact") {
    const ToyScene& s = small_scene();
    const Avatar init = init_avatar(s.model, s.source_camera, small_init(), 2);
    FitResult r = fit_avatar(s.model, s.targets, small_config(3), init);
    for (const auto block : parameter_blocks(r.avatar))
        for (double x : block) CHECK(static_cast<double>(static_cast<float>(x)) == x);
}

TEST_CASE("frozen identity feature stays at zero") {
    const ToyScene& s = small_scene();
    AvatarInit init = small_init();
    init.freeze_global = true;
    const Avatar start = init_avatar(s.model, s.source_camera, init, 2);
    for (double x : start.bank.global_feature) CHECK(x == 0.0);
    const FitResult r = fit_avatar(s.model, s.targets, small_config(5), start);
    for (double x : r.avatar.bank.global_feature) CHECK(x == 0.0);
}

TEST_CASE("non-finite parameters raise NumericError") {
    const ToyScene& s = small_scene();
    Avatar bad = init_avatar(s.model, s.source_camera, small_init(), 2);
    bad.decoder.bias[0] = std::nan("");
    CHECK_THROWS_AS((void)fit_avatar(s.model, s.targets, small_config(2), bad), std::exception);
}

TEST_CASE("avatar gradient matches finite differences on sampled parameters") {
    const ToyScene& s = small_scene();
    Avatar a = init_avatar(s.model, s.source_camera, small_init(), 5);
    const TargetItem& t = s.targets.items[3];
    LossWeights w;
    RenderSettings rs;
    const StepResult base = evaluate_target(a, s.model, t, w, rs, true);
    Avatar grads = base.grads;
    auto pa = parameter_blocks(a);
    auto pg = parameter_blocks(grads);
    std::vector<double> analytic, numeric;
    for (std::size_t b = 0; b < pa.size(); ++b) {
        if (pa[b].empty()) continue;
        // Largest-gradient entry of each block, away from L1 kinks.
        std::size_t best = 0;
        for (std::size_t i = 0; i < pg[b].size(); ++i)
            if (std::abs(pg[b][i]) > std::abs(pg[b][best])) best = i;
        if (pg[b][best] == 0.0) continue;
        const double saved = pa[b][best], h = 1e-6;
        pa[b][best] = saved + h;
        const double up = evaluate_target(a, s.model, t, w, rs, false).loss.total;
        pa[b][best] = saved - h;
        const double down = evaluate_target(a, s.model, t, w, rs, false).loss.total;
        pa[b][best] = saved;
        analytic.push_back(pg[b][best]);
        numeric.push_back((up - down) / (2 * h));
    }
    CHECK(analytic.size() >= 8);
    CHECK(testing::rel_error(analytic, numeric) < 1e-3);
}

TEST_CASE("loss csv has one row per record") {
    std::vector<LossRecord> h(3);
    for (int i = 0; i < 3; ++i) h[i].iteration = i;
    const auto path = std::filesystem::temp_directory_path() / "gaga_loss_test.csv";
    write_loss_csv(h, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "iteration,total,l1_coarse,l1_fine,pyramid,lifting");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3);
}

TEST_CASE("reenactor caches lifting work and matches the uncached path") {
    const ToyScene& s = small_scene();
    auto avatar = std::make_shared<Avatar>(s.ground_truth);
    auto model = std::make_shared<BlendshapeModel>(s.model);
    Reenactor re(avatar, model);
    CHECK(re.cached_attribute_sets() == 0);
    ExpressionParams p = re.params(std::vector<double>(model->n_psi, 0.0), std::vector<double>(model->n_theta, 0.0));
    p.psi[0] = 1.5;
    const Camera cam = orbit_camera(20, 5, 4, 36, 32, 32);
    const Image a = re.render(p, cam);
    CHECK(re.cached_attribute_sets() == 1);
    const Image b = re.render(p, cam);
    CHECK(re.cached_attribute_sets() == 1);
    CHECK(a.data == b.data);
    CHECK(a.data == reenact(*avatar, *model, p, cam).data);
    CHECK(re.avatar_id() == avatar_hash(*avatar));
    CHECK_THROWS_AS((void)re.params(std::vector<double>(3, 0.0), std::vector<double>(model->n_theta, 0.0)),
                    std::invalid_argument);
}

TEST_CASE("reenactor is safe to share across threads") {
    const ToyScene& s = small_scene();
    auto avatar = std::make_shared<Avatar>(s.ground_truth);
    auto model = std::make_shared<BlendshapeModel>(s.model);
    Reenactor re(avatar, model);
    const Camera cam = orbit_camera(0, 0, 4, 36, 32, 32);
    const ExpressionParams p = ExpressionParams::zeros(*model);
    const Image reference = reenact(*avatar, *model, p, cam);
    std::vector<Image> out(4);
    std::vector<std::thread> threads;
    for (int i = 0; i < 4; ++i) threads.emplace_back([&, i] { out[i] = re.render(p, cam); });
    for (auto& t : threads) t.join();
    for (const auto& img : out) CHECK(img.data == reference.data);
    CHECK(re.cached_attribute_sets() == 1);
}

TEST_CASE("expression moves only the expression splats") {
    const ToyScene& s = small_scene();
    auto avatar = std::make_shared<Avatar>(s.ground_truth);
    Reenactor re(avatar, std::make_shared<BlendshapeModel>(s.model));
    ExpressionParams p = ExpressionParams::zeros(s.model);
    const GaussianCloud neutral = re.cloud(p);
    p.psi[0] = 2.0;
    const GaussianCloud open = re.cloud(p);
    const std::size_t dual = 2u * 16u * 16u;
    CHECK(neutral.size() == dual + 64);
    for (std::size_t i = 0; i < dual * 3; ++i) CHECK(neutral.positions[i] == open.positions[i]);
    double moved = 0.0;
    for (std::size_t i = dual * 3; i < neutral.positions.size(); ++i)
        moved += std::abs(neutral.positions[i] - open.positions[i]);
    CHECK(moved > 0.0);
    CHECK(neutral.features == open.features);
}
