#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace morphofilter {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> rgb;  // row-major, 3 bytes per pixel

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(3 * w * h, 255) {}
    void set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
        const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
};

void write_ppm(const Image& img, const std::string& path);  // binary P6
void write_png(const Image& img, const std::string& path);  // 8-bit RGB, zlib deflate

/// Blue (low) to red (high) hue used for condensation/importance maps.
std::array<unsigned char, 3> heat_color(double t);

/// Element field as pixels, value 1 -> black, 0 -> white (material is dark).
/// Values are indexed e = ex*nely + ey with ey increasing upward.
Image render_density(const Eigen::VectorXd& values, int nelx, int nely);

/// Element field on the heat colormap, linearly mapped from [lo, hi].
Image render_heat(const Eigen::VectorXd& values, int nelx, int nely, double lo, double hi);

/// Two-axis map: hue encodes importance in [0,1], opacity encodes density
/// in [0,1] over a white background.
Image render_importance(const Eigen::VectorXd& density, const Eigen::VectorXd& importance,
                        int nelx, int nely);

}  // namespace morphofilter
