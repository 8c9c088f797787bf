#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>

#include "shlight/errors.hpp"
#include "shlight/image_io.hpp"
#include "test_util.hpp"

using namespace shlight;

namespace {

std::filesystem::path temp_file(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "shlight_io_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<std::uint8_t> rgbe_flat_image(int w, int h,
                                          const std::vector<std::array<std::uint8_t, 4>>& pixels) {
    std::string header = "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " + std::to_string(h) + " +X " +
                         std::to_string(w) + "\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    for (const auto& p : pixels) bytes.insert(bytes.end(), p.begin(), p.end());
    return bytes;
}

}  // namespace

TEST_CASE("RGBE decode rule") {
    // (128,128,128,129) -> 128/256 * 2^(129-128) = 1.0
    auto bytes = rgbe_flat_image(2, 1, {{128, 128, 128, 129}, {0, 0, 0, 0}});
    RadianceMap map = read_radiance_map(bytes);
    REQUIRE(map.width == 2);
    REQUIRE(map.height == 1);
    CHECK(map.pixel(0, 0)[0] == doctest::Approx(1.0));
    CHECK(map.pixel(0, 0)[1] == doctest::Approx(1.0));
    CHECK(map.pixel(0, 0)[2] == doctest::Approx(1.0));
    // zero exponent decodes to black
    CHECK(map.pixel(1, 0)[0] == 0.0f);
    CHECK(map.pixel(1, 0)[1] == 0.0f);
    CHECK(map.pixel(1, 0)[2] == 0.0f);
}

TEST_CASE("RGBE malformed inputs carry byte offsets") {
    SUBCASE("missing format") {
        std::string s = "#?RADIANCE\n\n-Y 1 +X 1\n";
        std::vector<std::uint8_t> bytes(s.begin(), s.end());
        CHECK_THROWS_AS(read_radiance_map(bytes), parse_error);
    }
    SUBCASE("truncated scanline") {
        auto bytes = rgbe_flat_image(4, 1, {{128, 128, 128, 129}});  // one of four pixels
        try {
            read_radiance_map(bytes);
            FAIL("expected parse_error");
        } catch (const parse_error& e) {
            CHECK(e.byte_offset() > 0);
        }
    }
    SUBCASE("unknown magic") {
        std::vector<std::uint8_t> bytes{'X', 'Y', 'Z', 'Z', 'Y'};
        CHECK_THROWS_AS(read_radiance_map(bytes), parse_error);
    }
}

TEST_CASE("RGBE round trip through the RLE writer") {
    RadianceMap src = shtest::smooth_panorama(17, 64, 32);
    RadianceMap back = read_radiance_map(encode_hdr(src));
    REQUIRE(back.width == src.width);
    REQUIRE(back.height == src.height);
    // The 8-bit shared-exponent mantissa quantizes each channel on a grid of
    // (pixel max) / 128 at worst.
    for (std::size_t i = 0; i < src.data.size(); i += 3) {
        double pix_max = std::max({src.data[i], src.data[i + 1], src.data[i + 2]});
        for (int c = 0; c < 3; ++c) {
            double err = std::abs(static_cast<double>(back.data[i + c]) - src.data[i + c]);
            CHECK(err <= pix_max / 128.0 + 1e-4);
        }
    }
}

TEST_CASE("PFM grayscale and color") {
    SUBCASE("little-endian 1x1 grayscale replicates to RGB") {
        std::string header = "Pf\n1 1\n-1.0\n";
        std::vector<std::uint8_t> bytes(header.begin(), header.end());
        float v = 2.5f;
        const std::uint8_t* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + 4);
        RadianceMap map = read_radiance_map(bytes);
        REQUIRE(map.width == 1);
        REQUIRE(map.height == 1);
        CHECK(map.pixel(0, 0)[0] == doctest::Approx(2.5));
        CHECK(map.pixel(0, 0)[1] == doctest::Approx(2.5));
        CHECK(map.pixel(0, 0)[2] == doctest::Approx(2.5));
    }

    SUBCASE("color round trip is exact") {
        RadianceMap src = shtest::smooth_panorama(23, 32, 16);
        RadianceMap back = read_radiance_map(encode_pfm(src));
        REQUIRE(back.width == src.width);
        REQUIRE(back.height == src.height);
        CHECK(back.data == src.data);
    }

    SUBCASE("big-endian input") {
        std::string header = "PF\n1 1\n1.0\n";  // positive scale: big-endian data
        std::vector<std::uint8_t> bytes(header.begin(), header.end());
        float v = 0.5f;
        std::uint8_t le[4];
        std::memcpy(le, &v, 4);
        for (int c = 0; c < 3; ++c)
            for (int i = 3; i >= 0; --i) bytes.push_back(le[i]);
        RadianceMap map = read_radiance_map(bytes);
        CHECK(map.pixel(0, 0)[0] == doctest::Approx(0.5));
        CHECK(map.pixel(0, 0)[2] == doctest::Approx(0.5));
    }

    SUBCASE("zero scale is rejected") {
        std::string s = "PF\n1 1\n0\n0000000000000000";
        std::vector<std::uint8_t> bytes(s.begin(), s.end());
        CHECK_THROWS_AS(read_radiance_map(bytes), parse_error);
    }
}

TEST_CASE("PNG write and read") {
    LdrImage img(9, 7);
    Rng rng(31);
    for (float& v : img.data)
        v = static_cast<float>(std::round(rng.uniform() * 255.0) / 255.0);

    auto path = temp_file("roundtrip.png");
    save_png(path.string(), img);
    LdrImage back = load_png(path.string());
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
    std::filesystem::remove(path);
}
