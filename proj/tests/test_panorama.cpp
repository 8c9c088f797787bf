#include <doctest.h>

#include <cmath>

#include "shlight/panorama.hpp"
#include "shlight/sh.hpp"
#include "test_util.hpp"

using namespace shlight;

TEST_CASE("identity rotation returns the map unchanged") {
    RadianceMap map = shtest::smooth_panorama(3, 64, 32);
    RadianceMap rot = rotate_panorama(map, 0.0, 0.0);
    CHECK(shtest::max_abs_diff(rot.data, map.data) < 1e-6);
}

TEST_CASE("full-turn yaw equals no rotation") {
    RadianceMap map = shtest::smooth_panorama(4, 64, 32);
    RadianceMap a = rotate_panorama(map, 360.0, 0.0);
    RadianceMap b = rotate_panorama(map, 0.0, 0.0);
    CHECK(shtest::max_abs_diff(a.data, b.data) < 1e-6);
}

TEST_CASE("rotation preserves the constant SH component") {
    RadianceMap map = shtest::smooth_panorama(5, 256, 128);
    SHCoeffs before = project_panorama(map, 2);
    SHCoeffs after = project_panorama(rotate_panorama(map, 71.0, 12.0), 2);
    for (int ch = 0; ch < 3; ++ch)
        CHECK(after.at(ch, 0) == doctest::Approx(before.at(ch, 0)).epsilon(0.01));
}

TEST_CASE("rotation preserves per-band power") {
    RadianceMap map = shtest::smooth_panorama(6, 256, 128);
    SHCoeffs before = project_panorama(map, 2);
    SHCoeffs after = project_panorama(rotate_panorama(map, -48.0, 9.0), 2);
    for (int ch = 0; ch < 3; ++ch)
        for (int band = 0; band <= 2; ++band) {
            double pb = before.band_power(ch, band);
            double pa = after.band_power(ch, band);
            CHECK(pa == doctest::Approx(pb).epsilon(0.02));
        }
}

TEST_CASE("rotation requires a full panorama") {
    RadianceMap view(10, 10);
    CHECK_THROWS_AS(rotate_panorama(view, 0, 0), std::invalid_argument);
}

TEST_CASE("warp with t=0 is the identity") {
    RadianceMap map = shtest::smooth_panorama(7, 64, 32);
    RadianceMap w = warp_panorama(map, 30.0, 0.0);
    CHECK(shtest::max_abs_diff(w.data, map.data) < 1e-6);
}

TEST_CASE("warp rejects camera outside the sphere") {
    RadianceMap map = shtest::smooth_panorama(8, 32, 16);
    CHECK_THROWS_AS(warp_panorama(map, 0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(warp_panorama(map, 0.0, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(warp_panorama(map, 0.0, -0.1), std::invalid_argument);
}

TEST_CASE("warp toward nadir magnifies nadir content") {
    // Analytic check of the resampling geometry: moving the camera t of the
    // way toward the nadir surface point shrinks the distance to it to
    // (1 - t), so a small angular offset around nadir grows by 1/(1 - t).
    const double t = 0.5;
    // output direction a small angle eps away from nadir, in the forward plane
    const double eps = 1e-3;
    Vec3 p{0.0, -t, 0.0};
    Vec3 d{std::sin(eps), -std::cos(eps), 0.0};
    double b = p.dot(d);
    double lambda = -b + std::sqrt(b * b - (p.dot(p) - 1.0));
    Vec3 s = p + d * lambda;
    // source angle from nadir
    double src = std::atan2(s.x, -s.y);
    CHECK(src / eps == doctest::Approx(1.0 - t).epsilon(1e-3));
    // solid angle of the patch grows by ~(1/(1-t))^2 = 4
    CHECK(std::pow(eps / src, 2) == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("consecutive warps compose like a single translation") {
    // smooth low-frequency content keeps the first-order composition model
    // within tolerance
    SHCoeffs c(2, SHDomain::radiance);
    Rng rng(9);
    for (int ch = 0; ch < 3; ++ch) {
        c.at(ch, 0) = 1.5;
        for (int i = 1; i < 9; ++i) c.at(ch, i) = rng.uniform(-0.05, 0.05);
    }
    RadianceMap map = reconstruct_envmap(c, 512, 256);

    const double t1 = 0.05, t2 = 0.04, beta = 20.0;
    RadianceMap two_step = warp_panorama(warp_panorama(map, beta, t1), beta, t2);
    RadianceMap one_step = warp_panorama(map, beta, t1 + t2 * (1.0 - t1));
    CHECK(shtest::mean_abs_diff(two_step.data, one_step.data) < 1e-3);
}

TEST_CASE("warp followed by the opposite warp restores the map") {
    SHCoeffs c(2, SHDomain::radiance);
    Rng rng(10);
    for (int ch = 0; ch < 3; ++ch) {
        c.at(ch, 0) = 2.0;
        for (int i = 1; i < 9; ++i) c.at(ch, i) = rng.uniform(-0.1, 0.1);
    }
    RadianceMap map = reconstruct_envmap(c, 512, 256);
    const double t = 0.3, beta = 35.0;
    RadianceMap warped = warp_panorama(map, beta, t);
    RadianceMap restored = warp_panorama(warped, beta + 180.0, t);
    CHECK(shtest::mean_abs_diff(restored.data, map.data) < 5e-3);
}

TEST_CASE("perspective projection of a constant map is constant") {
    RadianceMap map = RadianceMap::constant(64, 32, {0.3f, 0.6f, 0.9f});
    CameraSpec cam;
    RadianceMap view = project_perspective(map, cam);
    REQUIRE(view.width == 256);
    REQUIRE(view.height == 192);
    for (int y = 0; y < view.height; ++y)
        for (int x = 0; x < view.width; ++x) {
            CHECK(view.pixel(x, y)[0] == doctest::Approx(0.3).epsilon(1e-5));
            CHECK(view.pixel(x, y)[2] == doctest::Approx(0.9).epsilon(1e-5));
        }
}

TEST_CASE("perspective corner ray hits the marked texel") {
    // fov = 90, square output: the corner ray in camera space is
    // (focal, +-focal, +-focal) up to the half-pixel offset.
    const int W = 128, H = 128;
    const int pano_w = 512, pano_h = 256;
    CameraSpec cam;
    cam.horizontal_fov_deg = 90.0;
    cam.out_width = W;
    cam.out_height = H;

    const double focal = (W / 2.0) / std::tan(radians(90.0) / 2.0);
    // top-left view pixel (i=0, j=0)
    Vec3 corner{focal, H / 2.0 - 0.5, 0.5 - W / 2.0};
    Direction dir = Direction::normalized(corner.x, corner.y, corner.z);

    EquirectGrid grid{pano_w, pano_h};
    int mu = static_cast<int>(std::lround(grid.u_of(dir)));
    int mv = static_cast<int>(std::lround(grid.v_of(dir)));

    RadianceMap pano(pano_w, pano_h);
    // mark a 3x3 block so bilinear lookup keeps full brightness at the center
    for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
            int x = (mu + du + pano_w) % pano_w;
            int y = std::clamp(mv + dv, 0, pano_h - 1);
            pano.pixel(x, y)[0] = 10.0f;
        }

    RadianceMap view = project_perspective(pano, cam);
    CHECK(view.pixel(0, 0)[0] == doctest::Approx(10.0).epsilon(1e-3));
    // center of the view looks at unmarked panorama
    CHECK(view.pixel(W / 2, H / 2)[0] == doctest::Approx(0.0));
}

TEST_CASE("camera yaw commutes with panorama pre-rotation") {
    RadianceMap map = shtest::smooth_panorama(11, 256, 128);
    CameraSpec cam_rot;
    cam_rot.yaw_deg = 90.0;
    CameraSpec cam_zero;
    RadianceMap direct = project_perspective(map, cam_rot);
    RadianceMap pre = project_perspective(rotate_panorama(map, 90.0, 0.0), cam_zero);
    CHECK(shtest::max_abs_diff(direct.data, pre.data) < 1e-6);
}

TEST_CASE("camera spec validation") {
    CameraSpec cam;
    cam.pitch_deg = 20.0;
    CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
    cam.pitch_deg = 0.0;
    cam.horizontal_fov_deg = 5.0;
    CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
    cam.horizontal_fov_deg = 175.0;
    CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
}

TEST_CASE("tonemap transfer") {
    RadianceMap v(2, 1);
    v.pixel(0, 0)[0] = 0.0f;
    v.pixel(0, 0)[1] = 0.25f;
    v.pixel(0, 0)[2] = 0.5f;
    v.pixel(1, 0)[0] = 100.0f;
    v.pixel(1, 0)[1] = -0.5f;  // negative light must not produce NaN

    SUBCASE("identity transfer at gamma 1") {
        LdrImage out = tonemap_gamma(v, 1.0, 1.0);
        CHECK(out.pixel(0, 0)[0] == 0.0f);
        CHECK(out.pixel(0, 0)[1] == doctest::Approx(0.25));
        CHECK(out.pixel(1, 0)[0] == 1.0f);  // clamped
        CHECK(out.pixel(1, 0)[1] == 0.0f);  // clamped below
    }

    SUBCASE("gamma 2.2 on 0.5") {
        LdrImage out = tonemap_gamma(v, 1.0, 2.2);
        // second implementation of the transfer, straight from the formula
        double want = std::pow(0.5, 1.0 / 2.2);
        CHECK(out.pixel(0, 0)[2] == doctest::Approx(want).epsilon(1e-6));
        CHECK(want == doctest::Approx(0.7297).epsilon(1e-3));
    }

    SUBCASE("monotone per channel") {
        RadianceMap ramp(8, 1);
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) ramp.pixel(x, 0)[c] = 0.1f * x;
        LdrImage out = tonemap_gamma(ramp, 0.9, 2.2);
        for (int x = 1; x < 8; ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(out.pixel(x, 0)[c] >= out.pixel(x - 1, 0)[c]);
    }

    SUBCASE("no NaN survives") {
        LdrImage out = tonemap_gamma(v, 2.0, 2.2);
        for (float f : out.data) CHECK(std::isfinite(f));
    }
}

TEST_CASE("auto exposure anchors the chosen percentile") {
    RadianceMap view = shtest::smooth_panorama(13, 64, 32);
    double e = auto_exposure(view, 0.90, 0.80, 2.2);
    LdrImage out = tonemap_gamma(view, e, 2.2);

    // after tonemapping, ~10% of pixels sit above the 0.8 target
    std::vector<double> luma;
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const float* p = out.pixel(x, y);
            luma.push_back(0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]);
        }
    std::size_t above = 0;
    for (double l : luma)
        if (l > 0.80) ++above;
    double frac = static_cast<double>(above) / luma.size();
    CHECK(frac > 0.05);
    CHECK(frac < 0.15);

    // black view falls back to exposure 1
    RadianceMap black(8, 4);
    CHECK(auto_exposure(black) == 1.0);
}

TEST_CASE("beta tracks the lowest visible point") {
    CameraSpec cam;  // 90 deg hfov at 4:3 -> vfov ~73.74 deg
    double beta = beta_from_camera(cam);
    CHECK(beta == doctest::Approx(90.0 - cam.vertical_fov_deg() / 2.0).epsilon(1e-12));
    cam.pitch_deg = 10.0;
    CHECK(beta_from_camera(cam) == doctest::Approx(beta + 10.0).epsilon(1e-9));
}
