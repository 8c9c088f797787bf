#include "shlight/image_io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "shlight/errors.hpp"

namespace shlight {

namespace {

// ---------------------------------------------------------------- cursor --

struct Cursor {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;

    bool eof() const { return pos >= size; }

    std::uint8_t byte() {
        if (pos >= size) throw parse_error("unexpected end of input", pos);
        return data[pos++];
    }

    void read(void* dst, std::size_t n) {
        if (pos + n > size) throw parse_error("unexpected end of input", pos);
        std::memcpy(dst, data + pos, n);
        pos += n;
    }

    // Reads up to and including '\n'; rejects unreasonably long header lines.
    std::string line() {
        std::string out;
        while (true) {
            char c = static_cast<char>(byte());
            if (c == '\n') break;
            out.push_back(c);
            if (out.size() > 512) throw parse_error("header line too long", pos);
        }
        return out;
    }
};

// ------------------------------------------------------------------ RGBE --

void rgbe_to_float(const std::uint8_t rgbe[4], float* out) {
    if (rgbe[3] == 0) {
        out[0] = out[1] = out[2] = 0.0f;
        return;
    }
    // value = mantissa / 256 * 2^(exponent - 128)
    float scale = std::ldexp(1.0f, static_cast<int>(rgbe[3]) - (128 + 8));
    out[0] = rgbe[0] * scale;
    out[1] = rgbe[1] * scale;
    out[2] = rgbe[2] * scale;
}

void float_to_rgbe(const float* rgb, std::uint8_t out[4]) {
    float v = std::max(rgb[0], std::max(rgb[1], rgb[2]));
    if (v < 1e-32f) {
        out[0] = out[1] = out[2] = out[3] = 0;
        return;
    }
    int e;
    float m = std::frexp(v, &e);
    float scale = m * 256.0f / v;
    out[0] = static_cast<std::uint8_t>(rgb[0] * scale);
    out[1] = static_cast<std::uint8_t>(rgb[1] * scale);
    out[2] = static_cast<std::uint8_t>(rgb[2] * scale);
    out[3] = static_cast<std::uint8_t>(e + 128);
}

RadianceMap read_rgbe(Cursor& in) {
    std::string magic = in.line();
    if (magic.rfind("#?", 0) != 0) throw parse_error("missing #? signature", 0);

    bool format_ok = false;
    double exposure = 1.0;
    while (true) {
        std::size_t line_start = in.pos;
        std::string line = in.line();
        if (line.empty()) break;  // header terminator
        if (line[0] == '#') continue;
        if (line == "FORMAT=32-bit_rle_rgbe") {
            format_ok = true;
        } else if (line.rfind("FORMAT=", 0) == 0) {
            throw parse_error("unsupported FORMAT \"" + line.substr(7) + "\"", line_start);
        } else if (line.rfind("EXPOSURE=", 0) == 0) {
            exposure *= std::strtod(line.c_str() + 9, nullptr);
        }
        // GAMMA and other variables are tolerated and ignored
    }
    if (!format_ok) throw parse_error("no FORMAT specifier in header", in.pos);

    std::size_t res_start = in.pos;
    std::string res = in.line();
    int w = 0, h = 0;
    if (std::sscanf(res.c_str(), "-Y %d +X %d", &h, &w) != 2)
        throw parse_error("missing or unsupported resolution line \"" + res + "\"", res_start);
    if (w <= 0 || h <= 0 || static_cast<long long>(w) * h > (1ll << 28))
        throw parse_error("implausible image size", res_start);

    RadianceMap map(w, h);
    if (exposure > 0.0 && exposure != 1.0) map.exposure_scale = static_cast<float>(1.0 / exposure);

    std::vector<std::uint8_t> scanline(static_cast<std::size_t>(w) * 4);
    for (int y = 0; y < h; ++y) {
        std::size_t row_start = in.pos;
        std::uint8_t head[4];
        in.read(head, 4);
        const bool rle = head[0] == 2 && head[1] == 2 && !(head[2] & 0x80);
        if (rle) {
            int run_width = (static_cast<int>(head[2]) << 8) | head[3];
            if (run_width != w) throw parse_error("RLE scanline width mismatch", row_start);
            // four channel planes, each run-length encoded
            for (int c = 0; c < 4; ++c) {
                int x = 0;
                while (x < w) {
                    std::uint8_t count = in.byte();
                    if (count > 128) {
                        int run = count - 128;
                        if (x + run > w) throw parse_error("RLE run overflows scanline", in.pos);
                        std::uint8_t value = in.byte();
                        for (int k = 0; k < run; ++k) scanline[(x + k) * 4 + c] = value;
                        x += run;
                    } else {
                        if (count == 0) throw parse_error("zero-length RLE literal", in.pos);
                        if (x + count > w) throw parse_error("RLE literal overflows scanline", in.pos);
                        for (int k = 0; k < count; ++k) scanline[(x + k) * 4 + c] = in.byte();
                        x += count;
                    }
                }
            }
        } else {
            // flat scanline, possibly with old-style (255,255,255,n) repeats
            scanline[0] = head[0];
            scanline[1] = head[1];
            scanline[2] = head[2];
            scanline[3] = head[3];
            int x = 1;
            int shift = 0;
            while (x < w) {
                std::uint8_t px[4];
                in.read(px, 4);
                if (px[0] == 255 && px[1] == 255 && px[2] == 255) {
                    int run = px[3] << shift;
                    if (x == 0 || x + run > w) throw parse_error("bad old-style repeat", in.pos);
                    for (int k = 0; k < run; ++k)
                        std::memcpy(&scanline[(x + k) * 4], &scanline[(x - 1) * 4], 4);
                    x += run;
                    shift += 8;
                } else {
                    std::memcpy(&scanline[x * 4], px, 4);
                    ++x;
                    shift = 0;
                }
            }
        }
        float* row = map.pixel(0, y);
        for (int x = 0; x < w; ++x) rgbe_to_float(&scanline[x * 4], row + 3 * x);
    }
    if (map.exposure_scale != 1.0f)
        for (float& v : map.data) v *= map.exposure_scale;
    return map;
}

// ------------------------------------------------------------------- PFM --

float swap_float(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u = ((u & 0xff000000u) >> 24) | ((u & 0x00ff0000u) >> 8) | ((u & 0x0000ff00u) << 8) |
        ((u & 0x000000ffu) << 24);
    std::memcpy(&f, &u, 4);
    return f;
}

// whitespace-delimited token, PFM headers allow any blank separator
std::string pfm_token(Cursor& in) {
    std::string t;
    while (!in.eof()) {
        char c = static_cast<char>(in.byte());
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!t.empty()) return t;
        } else {
            t.push_back(c);
            if (t.size() > 64) throw parse_error("PFM header token too long", in.pos);
        }
    }
    throw parse_error("unexpected end of PFM header", in.pos);
}

RadianceMap read_pfm(Cursor& in) {
    std::string magic = pfm_token(in);
    const bool color = magic == "PF";
    if (!color && magic != "Pf") throw parse_error("not a PFM stream", 0);

    std::size_t dims_at = in.pos;
    int w = 0, h = 0;
    try {
        w = std::stoi(pfm_token(in));
        h = std::stoi(pfm_token(in));
    } catch (const std::exception&) {
        throw parse_error("malformed PFM dimensions", dims_at);
    }
    if (w <= 0 || h <= 0 || static_cast<long long>(w) * h > (1ll << 28))
        throw parse_error("implausible PFM size", dims_at);

    std::size_t scale_at = in.pos;
    double scale = 0.0;
    try {
        scale = std::stod(pfm_token(in));
    } catch (const std::exception&) {
        throw parse_error("malformed PFM scale", scale_at);
    }
    if (scale == 0.0) throw parse_error("PFM scale must be nonzero", scale_at);
    const bool little = scale < 0.0;
    const float magnitude = static_cast<float>(std::abs(scale));
    const bool host_little = std::endian::native == std::endian::little;
    const bool needs_swap = little != host_little;

    RadianceMap map(w, h);
    map.exposure_scale = magnitude;
    const int channels = color ? 3 : 1;
    std::vector<float> row(static_cast<std::size_t>(w) * channels);
    // rows are stored bottom-to-top
    for (int y = h - 1; y >= 0; --y) {
        in.read(row.data(), row.size() * 4);
        float* out = map.pixel(0, y);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = row[x * channels + (color ? c : 0)];
                if (needs_swap) v = swap_float(v);
                out[3 * x + c] = v * magnitude;
            }
        }
    }
    return map;
}

}  // namespace

// ---------------------------------------------------------------- public --

RadianceMap read_radiance_map(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2) throw parse_error("input too short to identify", 0);
    Cursor in{bytes.data(), bytes.size()};
    if (bytes[0] == '#' && bytes[1] == '?') return read_rgbe(in);
    if (bytes[0] == 'P' && (bytes[1] == 'F' || bytes[1] == 'f')) return read_pfm(in);
    throw parse_error("unrecognized radiance format (expected Radiance RGBE or PFM)", 0);
}

RadianceMap load_radiance_map(const std::string& path) {
    try {
        return read_radiance_map(read_file(path));
    } catch (const parse_error& e) {
        throw parse_error(path + ": " + e.what(), e.byte_offset());
    }
}

std::vector<std::uint8_t> encode_hdr(const RadianceMap& map) {
    std::string header = "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " + std::to_string(map.height) +
                         " +X " + std::to_string(map.width) + "\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());

    const int w = map.width;
    std::vector<std::uint8_t> plane(w);
    for (int y = 0; y < map.height; ++y) {
        std::vector<std::uint8_t> rgbe(static_cast<std::size_t>(w) * 4);
        for (int x = 0; x < w; ++x) float_to_rgbe(map.pixel(x, y), &rgbe[x * 4]);
        if (w < 8 || w > 0x7fff) {  // RLE not representable; store flat
            out.insert(out.end(), rgbe.begin(), rgbe.end());
            continue;
        }
        out.push_back(2);
        out.push_back(2);
        out.push_back(static_cast<std::uint8_t>(w >> 8));
        out.push_back(static_cast<std::uint8_t>(w & 0xff));
        for (int c = 0; c < 4; ++c) {
            for (int x = 0; x < w; ++x) plane[x] = rgbe[x * 4 + c];
            int x = 0;
            while (x < w) {
                int run = 1;
                while (x + run < w && run < 127 && plane[x + run] == plane[x]) ++run;
                if (run >= 4) {
                    out.push_back(static_cast<std::uint8_t>(128 + run));
                    out.push_back(plane[x]);
                    x += run;
                } else {
                    int lit = x;
                    while (lit < w && lit - x < 128) {
                        int r = 1;
                        while (lit + r < w && r < 4 && plane[lit + r] == plane[lit]) ++r;
                        if (r >= 4) break;
                        ++lit;
                    }
                    int count = lit - x;
                    out.push_back(static_cast<std::uint8_t>(count));
                    out.insert(out.end(), plane.begin() + x, plane.begin() + x + count);
                    x = lit;
                }
            }
        }
    }
    return out;
}

void save_hdr(const std::string& path, const RadianceMap& map) {
    write_file(path, encode_hdr(map));
}

std::vector<std::uint8_t> encode_pfm(const RadianceMap& map) {
    if (std::endian::native != std::endian::little)
        throw std::runtime_error("PFM writer assumes a little-endian host");
    std::string header =
        "PF\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1.0\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    std::size_t row_bytes = static_cast<std::size_t>(map.width) * 12;
    for (int y = map.height - 1; y >= 0; --y) {
        const std::uint8_t* row = reinterpret_cast<const std::uint8_t*>(map.pixel(0, y));
        out.insert(out.end(), row, row + row_bytes);
    }
    return out;
}

void save_pfm(const std::string& path, const RadianceMap& map) {
    write_file(path, encode_pfm(map));
}

// ------------------------------------------------------------------- PNG --

void save_png(const std::string& path, const LdrImage& image) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("libpng write error for " + path);
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);

    std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width) * 3);
    for (int y = 0; y < image.height; ++y) {
        const float* src = image.pixel(0, y);
        for (int x = 0; x < image.width * 3; ++x) {
            float v = std::clamp(src[x], 0.0f, 1.0f);
            row[x] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

LdrImage load_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw parse_error(path + ": malformed PNG");
    }

    png_init_io(png, fp);
    png_read_info(png, info);

    png_set_expand(png);                     // palette/gray-1,2,4 -> 8-bit
    png_set_strip_16(png);                   // 16-bit -> 8-bit
    png_set_strip_alpha(png);                // drop alpha
    png_set_gray_to_rgb(png);                // gray -> RGB
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    LdrImage image(w, h);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        float* dst = image.pixel(0, y);
        for (int x = 0; x < w * 3; ++x) dst[x] = row[x] / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return image;
}

// ------------------------------------------------------------------ file --

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    std::string s = ss.str();
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("short write to " + path);
}

}  // namespace shlight
