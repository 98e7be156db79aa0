#include "morphofilter/raster.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace morphofilter {

namespace {

void write_file(const std::string& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw std::runtime_error("write failed: " + path);
}

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    buf.push_back(static_cast<unsigned char>(v >> 24));
    buf.push_back(static_cast<unsigned char>(v >> 16));
    buf.push_back(static_cast<unsigned char>(v >> 8));
    buf.push_back(static_cast<unsigned char>(v));
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& payload) {
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const auto crc = crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

int clamp_channel(double v) {
    return v < 0.0 ? 0 : (v > 255.0 ? 255 : static_cast<int>(v + 0.5));
}

}  // namespace

void write_ppm(const Image& img, const std::string& path) {
    std::string header =
        "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<unsigned char> buf(header.begin(), header.end());
    buf.insert(buf.end(), img.rgb.begin(), img.rgb.end());
    write_file(path, buf.data(), buf.size());
}

void write_png(const Image& img, const std::string& path) {
    // Raw scanlines, filter byte 0 per row.
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<std::size_t>(img.height) * (1 + 3 * img.width));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const unsigned char* row = img.rgb.data() + 3 * static_cast<std::size_t>(y) * img.width;
        raw.insert(raw.end(), row, row + 3 * img.width);
    }
    uLongf zsize = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> zdata(zsize);
    if (compress2(zdata.data(), &zsize, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw std::runtime_error("png deflate failed: " + path);
    zdata.resize(zsize);

    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<unsigned char> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", zdata);
    append_chunk(out, "IEND", {});
    write_file(path, out.data(), out.size());
}

std::array<unsigned char, 3> heat_color(double t) {
    if (t < 0.0) t = 0.0;
    if (t > 1.0) t = 1.0;
    // cool blue -> warm red through light gray
    const double r0 = 59, g0 = 76, b0 = 192;
    const double r1 = 180, g1 = 4, b1 = 38;
    const double rm = 221, gm = 221, bm = 221;
    double r, g, b;
    if (t < 0.5) {
        const double u = 2.0 * t;
        r = r0 + (rm - r0) * u;
        g = g0 + (gm - g0) * u;
        b = b0 + (bm - b0) * u;
    } else {
        const double u = 2.0 * t - 1.0;
        r = rm + (r1 - rm) * u;
        g = gm + (g1 - gm) * u;
        b = bm + (b1 - bm) * u;
    }
    return {static_cast<unsigned char>(clamp_channel(r)),
            static_cast<unsigned char>(clamp_channel(g)),
            static_cast<unsigned char>(clamp_channel(b))};
}

Image render_density(const Eigen::VectorXd& values, int nelx, int nely) {
    Image img(nelx, nely);
    for (int ex = 0; ex < nelx; ++ex) {
        for (int ey = 0; ey < nely; ++ey) {
            double v = values[ex * nely + ey];
            if (v < 0.0) v = 0.0;
            if (v > 1.0) v = 1.0;
            const auto gray = static_cast<unsigned char>(clamp_channel(255.0 * (1.0 - v)));
            img.set(ex, nely - 1 - ey, gray, gray, gray);
        }
    }
    return img;
}

Image render_heat(const Eigen::VectorXd& values, int nelx, int nely, double lo, double hi) {
    Image img(nelx, nely);
    const double span = (hi > lo) ? hi - lo : 1.0;
    for (int ex = 0; ex < nelx; ++ex) {
        for (int ey = 0; ey < nely; ++ey) {
            const auto c = heat_color((values[ex * nely + ey] - lo) / span);
            img.set(ex, nely - 1 - ey, c[0], c[1], c[2]);
        }
    }
    return img;
}

Image render_importance(const Eigen::VectorXd& density, const Eigen::VectorXd& importance,
                        int nelx, int nely) {
    Image img(nelx, nely);
    for (int ex = 0; ex < nelx; ++ex) {
        for (int ey = 0; ey < nely; ++ey) {
            const int e = ex * nely + ey;
            double a = density[e];
            if (a < 0.0) a = 0.0;
            if (a > 1.0) a = 1.0;
            const auto c = heat_color(importance[e]);
            img.set(ex, nely - 1 - ey,
                    static_cast<unsigned char>(clamp_channel(255.0 * (1 - a) + c[0] * a)),
                    static_cast<unsigned char>(clamp_channel(255.0 * (1 - a) + c[1] * a)),
                    static_cast<unsigned char>(clamp_channel(255.0 * (1 - a) + c[2] * a)));
        }
    }
    return img;
}

}  // namespace morphofilter
