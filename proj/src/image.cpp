#include "stclust/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

namespace stclust {

void write_png(const std::filesystem::path& path, const Image& img) {
    png_image pi;
    std::memset(&pi, 0, sizeof pi);
    pi.version = PNG_IMAGE_VERSION;
    pi.width = static_cast<png_uint_32>(img.width);
    pi.height = static_cast<png_uint_32>(img.height);
    pi.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&pi, path.string().c_str(), 0, img.rgb.data(), 0, nullptr))
        throw Error("cannot write PNG " + path.string() + ": " + pi.message);
}

Image read_png(const std::filesystem::path& path) {
    png_image pi;
    std::memset(&pi, 0, sizeof pi);
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pi, path.string().c_str()))
        throw Error("cannot read PNG " + path.string() + ": " + pi.message);
    pi.format = PNG_FORMAT_RGB;
    Image img(static_cast<int>(pi.width), static_cast<int>(pi.height));
    if (!png_image_finish_read(&pi, nullptr, img.rgb.data(), 0, nullptr)) {
        png_image_free(&pi);
        throw Error("cannot decode PNG " + path.string() + ": " + pi.message);
    }
    return img;
}

namespace {

// 3x5 digit glyphs, one row per 3-bit value, top row first.
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits{{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

std::array<std::uint8_t, 3> id_color(int id) {
    // Golden-angle hue walk, full saturation.
    const double h = std::fmod(id * 137.508, 360.0) / 60.0;
    const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h)) {
        case 0: r = 1, g = x; break;
        case 1: r = x, g = 1; break;
        case 2: g = 1, b = x; break;
        case 3: g = x, b = 1; break;
        case 4: r = x, b = 1; break;
        default: r = 1, b = x; break;
    }
    return {static_cast<std::uint8_t>(255 * r), static_cast<std::uint8_t>(255 * g), static_cast<std::uint8_t>(255 * b)};
}

void put(Image& img, int x, int y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    auto* p = &img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
}

void draw_number(Image& img, int x0, int y0, int value, int scale, std::array<std::uint8_t, 3> c) {
    const std::string s = std::to_string(value);
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto& g = kDigits[s[k] - '0'];
        for (int row = 0; row < 5; ++row)
            for (int col = 0; col < 3; ++col) {
                if (!(g[row] >> (2 - col) & 1)) continue;
                for (int dy = 0; dy < scale; ++dy)
                    for (int dx = 0; dx < scale; ++dx)
                        put(img, x0 + (static_cast<int>(k) * 4 + col) * scale + dx, y0 + row * scale + dy, c);
            }
    }
}

}  // namespace

Image render_overlay(const Frame& frame, int frame_w, int frame_h, int scale) {
    if (scale < 1) throw Error("render: scale must be >= 1");
    Image out(frame_w * scale, frame_h * scale);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            std::array<std::uint8_t, 3> c{0, 0, 0};
            if (frame.image && frame.image->width == frame_w && frame.image->height == frame_h) {
                const auto* p = &frame.image->rgb[(static_cast<std::size_t>(y / scale) * frame_w + x / scale) * 3];
                c = {p[0], p[1], p[2]};
            }
            put(out, x, y, c);
        }
    for (const Detection& d : frame.detections) {
        const auto col = d.label ? id_color(*d.label) : std::array<std::uint8_t, 3>{128, 128, 128};
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                if (!d.mask.support(x / scale, y / scale)) continue;
                auto* p = &out.rgb[(static_cast<std::size_t>(y) * out.width + x) * 3];
                for (int k = 0; k < 3; ++k) p[k] = static_cast<std::uint8_t>((p[k] + col[k]) / 2);
            }
        if (!d.label) continue;
        const PixelRect r = support_rect(d.mask);
        if (r.empty()) continue;
        draw_number(out, r.x0 * scale + 1, r.y0 * scale + 1, *d.label, std::max(1, scale), {255, 255, 255});
    }
    return out;
}

}  // namespace stclust
