#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "shlight/dataset.hpp"
#include "shlight/errors.hpp"
#include "shlight/image_io.hpp"
#include "shlight/sh.hpp"
#include "test_util.hpp"

using namespace shlight;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    auto dir = fs::temp_directory_path() / "shlight_dataset_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Manifest tiny_manifest(int n_panos, int views_each = 2) {
    Manifest m;
    m.views_per_panorama = views_each;
    for (int i = 0; i < n_panos; ++i)
        for (int k = 0; k < views_each; ++k) {
            Sample s;
            s.panorama_id = "pano_" + std::to_string(i);
            s.view_index = k;
            s.sh_target.assign(27, 0.1 * i);
            m.samples.push_back(s);
        }
    return m;
}

}  // namespace

TEST_CASE("synthetic panorama generation") {
    SUBCASE("ambient only gives a constant map") {
        SynthLightSpec spec;
        spec.ambient = {0.2, 0.2, 0.2};
        RadianceMap map = synth_panorama(spec, 64, 32, 5);
        for (std::size_t i = 0; i < map.data.size(); ++i)
            CHECK(map.data[i] == 0.2f);
    }

    SUBCASE("one +z light dominates the band-1 z coefficient") {
        SynthLightSpec spec;
        spec.ambient = {0, 0, 0};
        SynthLight l;
        l.direction = Direction{0, 0, 1};
        l.radius_deg = 25.0;
        l.radiance = {2, 2, 2};
        spec.lights = {l};
        RadianceMap map = synth_panorama(spec, 128, 64, 5);
        SHCoeffs sh = project_panorama(map, 2);
        // i = 2 is the z-aligned band-1 slot
        CHECK(sh.at(0, 2) > 0.0);
        CHECK(sh.at(0, 2) > std::abs(sh.at(0, 1)) * 5.0);
        CHECK(sh.at(0, 2) > std::abs(sh.at(0, 3)) * 5.0);
    }

    SUBCASE("same spec and seed are byte-identical") {
        Rng rng(11);
        SynthLightSpec spec = random_light_spec(rng);
        RadianceMap a = synth_panorama(spec, 64, 32, 77);
        RadianceMap b = synth_panorama(spec, 64, 32, 77);
        CHECK(a.data == b.data);
    }

    SUBCASE("spec validation") {
        SynthLightSpec spec;
        spec.lights.resize(5);
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
        spec.lights.resize(1);
        spec.lights[0].radius_deg = 1.0;
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
}

TEST_CASE("view generation") {
    RadianceMap pano = shtest::smooth_panorama(42, 128, 64);
    ViewConfig config;
    config.view_width = 64;
    config.view_height = 48;

    SUBCASE("n views, distinct draws, determinism") {
        auto views = generate_views(pano, "p0", 8, 123, config);
        REQUIRE(views.size() == 8);
        std::set<double> yaws;
        for (const auto& gv : views) {
            CHECK(gv.sample.yaw_deg >= -180.0);
            CHECK(gv.sample.yaw_deg <= 180.0);
            CHECK(gv.sample.pitch_deg >= -15.0);
            CHECK(gv.sample.pitch_deg <= 15.0);
            yaws.insert(gv.sample.yaw_deg);
        }
        CHECK(yaws.size() == 8);  // draws are distinct

        auto again = generate_views(pano, "p0", 8, 123, config);
        for (std::size_t i = 0; i < views.size(); ++i) {
            CHECK(again[i].sample.yaw_deg == views[i].sample.yaw_deg);
            CHECK(again[i].sample.sh_target == views[i].sample.sh_target);
            CHECK(again[i].mrv.data == views[i].mrv.data);
        }
    }

    SUBCASE("constant panorama gives band-0-only targets and constant views") {
        RadianceMap flat = RadianceMap::constant(128, 64, {0.5f, 0.5f, 0.5f});
        auto views = generate_views(flat, "flat", 2, 9, config);
        for (const auto& gv : views) {
            for (int ch = 0; ch < 3; ++ch)
                for (int i = 1; i < 9; ++i)
                    CHECK(std::abs(gv.sample.sh_target[ch * 9 + i]) < 1e-3);
            float first = gv.mrv.data[0];
            for (float v : gv.mrv.data) CHECK(v == doctest::Approx(first).epsilon(1e-4));
        }
    }

    SUBCASE("de-normalized target equals direct projection of the warped map") {
        ViewConfig scaled = config;
        scaled.norm_scale = 4.0;
        auto views = generate_views(pano, "p0", 1, 5, scaled);
        const Sample& s = views[0].sample;

        RadianceMap rotated = rotate_panorama(pano, s.yaw_deg, s.pitch_deg);
        RadianceMap warped = warp_panorama(rotated, s.beta_deg, s.t);
        SHCoeffs direct = project_panorama(warped, 2);
        for (int i = 0; i < 27; ++i)
            CHECK(std::abs(s.sh_target[i] * s.norm_scale - direct.values()[i]) < 1e-9);
    }

    SUBCASE("invalid view count") {
        CHECK_THROWS_AS(generate_views(pano, "p0", 0, 1, config), std::invalid_argument);
    }
}

TEST_CASE("dataset splitting") {
    SUBCASE("10 panoramas split 7/2/1 with disjoint ids") {
        Manifest m = tiny_manifest(10);
        split_dataset(m, {0.70, 0.15, 0.15}, 3);
        CHECK(m.train_ids.size() == 7);
        CHECK(m.train_ids.size() + m.val_ids.size() + m.test_ids.size() == 10);
        CHECK(m.val_ids.size() >= 1);
        CHECK(m.test_ids.size() >= 1);
        m.validate();

        // a panorama id is never found in two splits
        for (const std::string& id : m.train_ids) {
            CHECK(std::find(m.val_ids.begin(), m.val_ids.end(), id) == m.val_ids.end());
            CHECK(std::find(m.test_ids.begin(), m.test_ids.end(), id) == m.test_ids.end());
        }

        // all views of one panorama share the split
        for (const Sample& s : m.samples) CHECK(s.split == m.split_of(s.panorama_id));
    }

    SUBCASE("sizes stay within one panorama of the ratios") {
        Manifest m = tiny_manifest(256, 1);
        split_dataset(m, {0.70, 0.15, 0.15}, 9);
        CHECK(std::abs(static_cast<double>(m.train_ids.size()) - 0.70 * 256) <= 1.0);
        CHECK(std::abs(static_cast<double>(m.val_ids.size()) - 0.15 * 256) <= 1.0);
        CHECK(std::abs(static_cast<double>(m.test_ids.size()) - 0.15 * 256) <= 1.0);
    }

    SUBCASE("too few panoramas") {
        Manifest m = tiny_manifest(2);
        CHECK_THROWS_AS(split_dataset(m, {0.70, 0.15, 0.15}, 3), std::invalid_argument);
    }

    SUBCASE("ratios must sum to one") {
        Manifest m = tiny_manifest(10);
        CHECK_THROWS_AS(split_dataset(m, {0.5, 0.2, 0.2}, 3), std::invalid_argument);
    }
}

TEST_CASE("norm scale") {
    Sample a, b;
    a.sh_target = {0.5, -8.0, 1.0};
    b.sh_target = {2.0, 3.0, -1.0};
    CHECK(compute_norm_scale({&a, &b}) == doctest::Approx(8.4));

    Sample zero;
    zero.sh_target = {0, 0, 0};
    CHECK(compute_norm_scale({&zero}) == 1.0);

    // normalized training targets stay strictly inside (-1, 1)
    double scale = compute_norm_scale({&a, &b});
    double max_norm = 0.0;
    for (const Sample* s : {&a, &b})
        for (double v : s->sh_target) max_norm = std::max(max_norm, std::abs(v / scale));
    CHECK(max_norm == doctest::Approx(1.0 / 1.05));
    CHECK(max_norm < 1.0);
}

TEST_CASE("gen_dataset writes a reproducible tree") {
    GenDatasetOptions opt;
    opt.synthetic_count = 4;
    opt.synth_width = 64;
    opt.synth_height = 32;
    opt.views_per_panorama = 2;
    opt.seed = 21;
    opt.view.view_width = 32;
    opt.view.view_height = 24;

    auto dir_a = temp_dir("run_a");
    auto dir_b = temp_dir("run_b");
    opt.out_dir = dir_a.string();
    Manifest ma = gen_dataset(opt);
    opt.out_dir = dir_b.string();
    Manifest mb = gen_dataset(opt);

    CHECK(ma.samples.size() == 8);
    CHECK(ma.norm_scale == mb.norm_scale);

    // byte-identical manifests and images
    auto bytes_a = read_file((dir_a / "manifest.jsonl").string());
    auto bytes_b = read_file((dir_b / "manifest.jsonl").string());
    CHECK(bytes_a == bytes_b);
    for (const Sample& s : ma.samples) {
        auto img_a = read_file((dir_a / s.mrv_path).string());
        auto img_b = read_file((dir_b / s.mrv_path).string());
        CHECK(img_a == img_b);
    }

    // manifest round trip
    Manifest loaded = load_manifest((dir_a / "manifest.jsonl").string());
    CHECK(loaded.norm_scale == ma.norm_scale);
    REQUIRE(loaded.samples.size() == ma.samples.size());
    for (std::size_t i = 0; i < loaded.samples.size(); ++i) {
        CHECK(loaded.samples[i].panorama_id == ma.samples[i].panorama_id);
        CHECK(loaded.samples[i].sh_target == ma.samples[i].sh_target);
        CHECK(loaded.samples[i].split == ma.samples[i].split);
    }

    // train targets fit the softsign range with headroom
    double max_train = 0.0;
    for (const Sample* s : loaded.split_samples("train"))
        for (double v : s->sh_target) max_train = std::max(max_train, std::abs(v));
    CHECK(max_train < 1.0);

    fs::remove_all(dir_a.parent_path());
}

TEST_CASE("manifest parse errors") {
    auto dir = temp_dir("bad_manifest");
    auto path = dir / "m.jsonl";
    {
        std::ofstream f(path);
        f << "{\"type\":\"sample\"}\n";
    }
    CHECK_THROWS_AS(load_manifest(path.string()), parse_error);
    fs::remove_all(dir);
}
