#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gaga/decoder.hpp"
#include "gaga/rasterizer.hpp"
#include "support.hpp"

using namespace gaga;

namespace {

GaussianCloud single_splat(double opacity, int channels = 3) {
    GaussianCloud c;
    c.channels = channels;
    c.resize(1);
    c.rotations = {1, 0, 0, 0};
    c.scales = {0.05, 0.05, 0.05};
    c.opacities = {opacity};
    for (int k = 0; k < channels; ++k) c.features[k] = 0.25 * (k + 1);
    return c;
}

}  // namespace

TEST_CASE("tile renderer matches the brute-force oracle") {
    for (const int tile : {4, 8, 16}) {
        CAPTURE(tile);
        const Camera cam = testing::fixture_camera(40, 28);
        const GaussianCloud cloud = testing::fixture_cloud(60, 5, cam, 17, 2.5);
        RenderSettings s;
        s.tile_size = tile;
        s.background = {0.1, 0.2, 0.3, 0.4, 0.5};
        const FrameBuffer a = render(cloud, cam, s);
        const FrameBuffer b = testing::oracle_render(cloud, cam, s);
        CHECK(testing::max_abs_diff(a.color.data, b.color.data) <= 1e-12);
        CHECK(testing::max_abs_diff(a.alpha, b.alpha) <= 1e-12);
    }
}

TEST_CASE("tile size does not change the image") {
    const Camera cam = testing::fixture_camera(50, 37);
    const GaussianCloud cloud = testing::fixture_cloud(80, 4, cam, 5, 4.0);
    RenderSettings a, b;
    a.tile_size = 16;
    b.tile_size = 5;
    CHECK(testing::max_abs_diff(render(cloud, cam, a).color.data, render(cloud, cam, b).color.data) <= 1e-12);
}

TEST_CASE("empty cloud renders the background") {
    GaussianCloud empty;
    empty.channels = 2;
    RenderSettings s;
    s.background = {0.3, 0.7};
    const FrameBuffer fb = render(empty, testing::fixture_camera(8, 8), s);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            CHECK(fb.color.at(0, x, y) == 0.3);
            CHECK(fb.color.at(1, x, y) == 0.7);
        }
    for (double a : fb.alpha) CHECK(a == 0.0);
}

TEST_CASE("centred splat peaks at the principal point with clamped alpha") {
    const Camera cam = testing::fixture_camera(33, 33);
    const FrameBuffer fb = render(single_splat(1.0), cam, {});
    const int c = 16;
    CHECK(fb.alpha[static_cast<std::size_t>(c * 33 + c)] == doctest::Approx(0.99));
    CHECK(fb.color.at(0, c, c) == doctest::Approx(0.25 * 0.99));
    CHECK(fb.alpha[0] == 0.0);
}

TEST_CASE("splats behind the near plane are culled") {
    GaussianCloud c = single_splat(0.9);
    c.positions = {0, 0, 3.5};  // camera sits at z = 3 looking down -z
    const FrameBuffer fb = render(c, testing::fixture_camera(16, 16), {});
    for (double a : fb.alpha) CHECK(a == 0.0);
}

TEST_CASE("nearer splat occludes farther one") {
    GaussianCloud c = single_splat(0.99, 1);
    GaussianCloud far = single_splat(0.99, 1);
    far.positions = {0, 0, -1};
    far.features = {1.0};
    c.features = {0.0};
    const Camera cam = testing::fixture_camera(17, 17);
    const FrameBuffer fb = render(merge_clouds(far, c), cam, {});
    CHECK(fb.color.at(0, 8, 8) < 0.02);
}

TEST_CASE("render rejects inconsistent clouds and settings") {
    GaussianCloud c = single_splat(0.5);
    c.features.pop_back();
    CHECK_THROWS_AS((void)render(c, testing::fixture_camera(8, 8), {}), std::invalid_argument);
    RenderSettings s;
    s.tile_size = 0;
    CHECK_THROWS_AS((void)render(single_splat(0.5), testing::fixture_camera(8, 8), s), std::invalid_argument);
    s = {};
    s.background = {1.0};
    CHECK_THROWS_AS((void)render(single_splat(0.5), testing::fixture_camera(8, 8), s), std::invalid_argument);
}

TEST_CASE("render stats count visible splats and pairs") {
    const Camera cam = testing::fixture_camera(32, 32);
    const GaussianCloud cloud = testing::fixture_cloud(30, 3, cam, 1);
    RenderStats st;
    (void)render(cloud, cam, {}, &st);
    CHECK(st.visible == 30);
    CHECK(st.pairs >= 30);
}

TEST_CASE("bench report serialises every field") {
    const Camera cam = testing::fixture_camera(32, 32);
    const BenchReport r = bench(random_cloud(200, 4, 2), cam, {}, 2);
    CHECK(r.frames == 2);
    CHECK(r.gaussians == 200);
    CHECK(r.fps > 0.0);
    const std::string js = r.to_json();
    for (const char* key : {"fps", "ms_per_frame", "breakdown_ms", "blend", "channels"})
        CHECK(js.find(key) != std::string::npos);
}

TEST_CASE("merge keeps order and rejects channel mismatch") {
    const GaussianCloud a = single_splat(0.3), b = single_splat(0.6);
    const GaussianCloud m = merge_clouds(a, b);
    CHECK(m.size() == 2);
    CHECK(m.opacities[0] == 0.3);
    CHECK(m.opacities[1] == 0.6);
    CHECK_THROWS_AS((void)merge_clouds(a, single_splat(0.6, 4)), std::invalid_argument);
}

TEST_CASE("every analytic gradient matches central differences") {
    for (const auto& check : testing::gradient_suite(21)) {
        CAPTURE(check.name);
        CAPTURE(check.error);
        CHECK(check.pass());
    }
}

TEST_CASE("decoder matches the direct convolution oracle") {
    for (const DecoderMode mode : {DecoderMode::affine, DecoderMode::conv}) {
        Decoder d = Decoder::create(mode, 3, 6, 4);
        std::mt19937_64 rng(2);
        std::normal_distribution<double> n01(0.0, 0.3);
        for (double& w : d.conv2) w = n01(rng);
        for (double& w : d.affine) w += n01(rng);
        Image f = Image::zeros(6, 9, 7);
        for (double& x : f.data) x = n01(rng);
        CHECK(testing::max_abs_diff(decode(d, f).data, testing::oracle_decode(d, f).data) <= 1e-12);
    }
}

TEST_CASE("fresh decoder passes the first three channels through") {
    for (const DecoderMode mode : {DecoderMode::affine, DecoderMode::conv}) {
        const Decoder d = Decoder::create(mode, 1, 5, 4);
        Image f = Image::zeros(5, 4, 3);
        std::iota(f.data.begin(), f.data.end(), 0.0);
        const Image rgb = decode(d, f);
        CHECK(rgb.channels == 3);
        for (std::size_t i = 0; i < rgb.data.size(); ++i) CHECK(rgb.data[i] == f.data[i]);
    }
}

TEST_CASE("decoder mode strings round trip") {
    CHECK(decoder_mode_from_string(to_string(DecoderMode::affine)) == DecoderMode::affine);
    CHECK(decoder_mode_from_string(to_string(DecoderMode::conv)) == DecoderMode::conv);
    CHECK_THROWS_AS((void)decoder_mode_from_string("unet"), std::invalid_argument);
}

TEST_CASE("decoder rejects channel mismatch") {
    const Decoder d = Decoder::create(DecoderMode::affine, 1, 5);
    CHECK_THROWS_AS((void)decode(d, Image::zeros(4, 3, 3)), std::invalid_argument);
}
