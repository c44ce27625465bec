#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gaga/camera.hpp"
#include "gaga/head_model.hpp"
#include "gaga/lifting.hpp"
#include "support.hpp"

using namespace gaga;

TEST_CASE("orbit camera looks at the origin with +y up") {
    const Camera cam = orbit_camera(0.0, 0.0, 4.0, 36.0, 128, 96);
    CHECK(cam.center().isApprox(Eigen::Vector3d(0, 0, 4)));
    CHECK(cam.view_direction().isApprox(Eigen::Vector3d(0, 0, -1)));
    const Projection origin = project(cam, Eigen::Vector3d::Zero());
    CHECK(origin.in_front);
    CHECK(origin.x == doctest::Approx(cam.cx));
    CHECK(origin.y == doctest::Approx(cam.cy));
    CHECK(cam.cx == doctest::Approx(63.5));
    // Image y grows downwards while world +y is up.
    CHECK(project(cam, Eigen::Vector3d(0, 0.5, 0)).y < cam.cy);
    CHECK(cam.fx == doctest::Approx(0.5 * 128 / std::tan(18.0 * M_PI / 180.0)));
}

TEST_CASE("project and unproject are inverse") {
    const Camera cam = orbit_camera(40.0, -15.0, 3.0, 50.0, 64, 64);
    const Eigen::Vector3d p(0.2, -0.3, 0.1);
    const Projection pr = project(cam, p);
    CHECK((unproject(cam, pr.x, pr.y, pr.depth) - p).norm() < 1e-12);
}

TEST_CASE("points behind the camera are flagged") {
    const Camera cam = orbit_camera(0.0, 0.0, 2.0, 40.0, 32, 32);
    CHECK_FALSE(project(cam, Eigen::Vector3d(0, 0, 5)).in_front);
}

TEST_CASE("rigid transforms compose and invert") {
    RigidTransform a, b;
    a.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.4, Eigen::Vector3d::UnitY()));
    a.translation = Eigen::Vector3d(1, 2, 3);
    b.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(-1.1, Eigen::Vector3d(1, 1, 0).normalized()));
    b.translation = Eigen::Vector3d(-0.5, 0, 2);
    const Eigen::Vector3d p(0.3, -0.7, 1.9);
    CHECK(((a * b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
    CHECK((a.inverse().apply(a.apply(p)) - p).norm() < 1e-12);
}

TEST_CASE("camera validation rejects bad intrinsics") {
    Camera cam = orbit_camera(0, 0, 4, 36, 32, 32);
    cam.fx = -1.0;
    CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
    cam = orbit_camera(0, 0, 4, 36, 32, 32);
    cam.width = 0;
    CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
}

TEST_CASE("lifting plane passes through the origin facing the camera") {
    const Camera cam = orbit_camera(30.0, 10.0, 4.0, 36.0, 64, 64);
    const LiftingPlane lp = plane_through_origin(cam, 8, 1.0);
    CHECK(lp.points.size() == 8u * 8u * 3u);
    CHECK(lp.plane.normal.dot(cam.view_direction()) == doctest::Approx(-1.0));
    CHECK(lp.plane.u_axis.dot(lp.plane.v_axis) == doctest::Approx(0.0));
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < 64; ++i) mean += Eigen::Vector3d(&lp.points[i * 3]);
    CHECK((mean / 64.0).norm() < 1e-12);
    for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(Eigen::Vector3d(&lp.points[i * 3]).dot(lp.plane.normal)) < 1e-12);
}

TEST_CASE("toy model shapes and zero-coefficient identity") {
    ToyModelOptions mo;
    mo.vertices = 200;
    mo.seed = 1;
    const BlendshapeModel m = generate_toy_model(mo);
    CHECK(m.num_vertices() == 200);
    CHECK(m.shape_basis.size() == 200u * 3u * m.n_beta);
    CHECK(m.pose_basis.size() == 200u * 3u * m.n_theta);
    CHECK(m.expr_basis.size() == 200u * 3u * m.n_psi);
    CHECK_FALSE(m.triangles.empty());
    for (const auto& t : m.triangles)
        for (auto i : t) CHECK(i < 200u);
    CHECK(evaluate(m, ExpressionParams::zeros(m)) == m.template_vertices);
    CHECK(generate_toy_model(mo).template_vertices == m.template_vertices);
    CHECK(model_hash(m) == model_hash(generate_toy_model(mo)));
    mo.seed = 2;
    CHECK(model_hash(m) != model_hash(generate_toy_model(mo)));
}

TEST_CASE("blendshape evaluation is affine in every coefficient block") {
    ToyModelOptions mo;
    mo.vertices = 64;
    const BlendshapeModel m = generate_toy_model(mo);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01;
    ExpressionParams p = ExpressionParams::zeros(m);
    for (double& x : p.psi) x = n01(rng);
    ExpressionParams twice = p;
    for (double& x : twice.psi) x *= 2.0;
    const auto v1 = evaluate(m, p), v2 = evaluate(m, twice);
    for (std::size_t i = 0; i < v1.size(); ++i)
        CHECK(v2[i] - m.template_vertices[i] == doctest::Approx(2.0 * (v1[i] - m.template_vertices[i])).epsilon(1e-12));
}

TEST_CASE("coefficient length mismatch throws") {
    ToyModelOptions mo;
    mo.vertices = 32;
    const BlendshapeModel m = generate_toy_model(mo);
    ExpressionParams p = ExpressionParams::zeros(m);
    p.psi.pop_back();
    CHECK_THROWS_AS((void)evaluate(m, p), std::invalid_argument);
}

TEST_CASE("dual lift emits two sheets of res^2 splats") {
    const Camera cam = orbit_camera(0, 0, 4, 36, 64, 64);
    const LiftingGrids g = init_lifting_grids(12, 1.0, 3, 8);
    const GaussianCloud c = assemble_dual_lift(g, plane_through_origin(cam, 12));
    CHECK(c.size() == 2u * 144u);
    CHECK(c.channels == 8);
    c.validate();
    for (double o : c.opacities) CHECK((o > 0.0 && o < 1.0));
    for (double s : c.scales) CHECK(s >= activation::kMinScale);
}

TEST_CASE("front sheet lifts toward the camera and back sheet away") {
    const Camera cam = orbit_camera(0, 0, 4, 36, 64, 64);
    const LiftingPlane lp = plane_through_origin(cam, 4);
    LiftingGrids g = LiftingGrids::zeros(4, 4);
    const std::size_t rec = g.record_size();
    for (std::size_t p = 0; p < g.pixels(); ++p) {
        g.front[p * rec + lifting_record::kDistance] = 0.3;
        g.back[p * rec + lifting_record::kDistance] = 0.3;
    }
    const GaussianCloud c = assemble_dual_lift(g, lp);
    const Eigen::Vector3d to_cam = lp.plane.normal;
    for (std::size_t i = 0; i < 16; ++i) {
        const double front = (Eigen::Vector3d(&c.positions[i * 3]) - Eigen::Vector3d(&lp.points[i * 3])).dot(to_cam);
        const double back =
            (Eigen::Vector3d(&c.positions[(16 + i) * 3]) - Eigen::Vector3d(&lp.points[i * 3])).dot(to_cam);
        CHECK(front > 0.0);
        CHECK(back < 0.0);
        CHECK(std::abs(front) == doctest::Approx(std::abs(back)));
    }
}

TEST_CASE("lifting grids validate record layout") {
    LiftingGrids g = LiftingGrids::zeros(4, 4);
    g.front.pop_back();
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}
