#include "stclust/core.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace stclust {

Mask::Mask(int width, int height, int channels)
    : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0)
        throw Error("mask dimensions must be positive");
    if (channels != 1 && channels != 3)
        throw Error("mask channels must be 1 or 3");
    data_.assign(static_cast<std::size_t>(width) * height * channels, 0.0f);
}

bool Mask::support(int x, int y) const {
    const std::size_t base = index(x, y, 0);
    for (int c = 0; c < channels_; ++c)
        if (data_[base + c] > 0.0f) return true;
    return false;
}

std::size_t Mask::support_area() const {
    std::size_t n = 0;
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x)
            n += support(x, y) ? 1 : 0;
    return n;
}

Mask Mask::binary() const {
    if (empty()) return {};
    Mask out(width_, height_, 1);
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x)
            out.at(x, y) = support(x, y) ? 1.0f : 0.0f;
    return out;
}

double mask_iou(const Mask& a, const Mask& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw Error("mask_iou: dimension mismatch");
    std::size_t inter = 0, uni = 0;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            const bool sa = a.support(x, y);
            const bool sb = b.support(x, y);
            inter += (sa && sb) ? 1 : 0;
            uni += (sa || sb) ? 1 : 0;
        }
    }
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::string rle_encode(const Mask& m) {
    std::ostringstream os;
    bool current = false;
    long run = 0;
    bool first = true;
    auto flush = [&] {
        if (!first) os << ' ';
        os << run;
        first = false;
    };
    for (int x = 0; x < m.width(); ++x) {
        for (int y = 0; y < m.height(); ++y) {
            const bool v = m.support(x, y);
            if (v != current) {
                flush();
                current = v;
                run = 0;
            }
            ++run;
        }
    }
    flush();
    return os.str();
}

Mask rle_decode(const std::string& counts, int width, int height) {
    Mask out(width, height, 1);
    const long total = static_cast<long>(width) * height;
    long pos = 0;
    bool value = false;
    bool any = false;
    const char* p = counts.data();
    const char* end = p + counts.size();
    while (p < end) {
        while (p < end && *p == ' ') ++p;
        if (p == end) break;
        long run = 0;
        auto [next, ec] = std::from_chars(p, end, run);
        if (ec != std::errc() || (next < end && *next != ' ') || run < 0)
            throw Error("rle_decode: malformed count string");
        if (pos + run > total)
            throw Error("rle_decode: counts exceed width*height");
        for (long i = pos; i < pos + run; ++i) {
            const int x = static_cast<int>(i / height);
            const int y = static_cast<int>(i % height);
            out.at(x, y) = value ? 1.0f : 0.0f;
        }
        pos += run;
        value = !value;
        any = true;
        p = next;
    }
    if (!any || pos != total)
        throw Error("rle_decode: counts do not sum to width*height");
    return out;
}

PixelRect support_rect(const Mask& m) {
    PixelRect r{m.width(), m.height(), 0, 0};
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m.support(x, y)) continue;
            r.x0 = std::min(r.x0, x);
            r.y0 = std::min(r.y0, y);
            r.x1 = std::max(r.x1, x + 1);
            r.y1 = std::max(r.y1, y + 1);
        }
    }
    if (r.empty()) return {};
    return r;
}

BBox support_box(const Mask& m) {
    const PixelRect r = support_rect(m);
    if (r.empty()) return {};
    return {0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1), static_cast<double>(r.width()),
            static_cast<double>(r.height())};
}

Mask crop_to_support(const Mask& m) {
    const PixelRect r = support_rect(m);
    if (r.empty()) throw Error("crop_to_support: mask has empty support");
    Mask out(r.width(), r.height(), m.channels());
    for (int y = 0; y < r.height(); ++y)
        for (int x = 0; x < r.width(); ++x)
            for (int c = 0; c < m.channels(); ++c)
                out.at(x, y, c) = m.at(r.x0 + x, r.y0 + y, c);
    return out;
}

std::array<double, 4> normalize_box(const BBox& b, int frame_w, int frame_h) {
    if (frame_w <= 0 || frame_h <= 0) throw Error("normalize_box: frame dims must be positive");
    if (!b.valid()) throw Error("normalize_box: box must have positive width and height");
    auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
    const double fw = frame_w, fh = frame_h;
    return {clamp01(b.cx / fw), clamp01(b.cy / fh), clamp01(b.w / fw), clamp01(b.h / fh)};
}

BBox denormalize_box(std::span<const double> v, int frame_w, int frame_h) {
    if (v.size() != 4) throw Error("denormalize_box: expected 4 components");
    return {v[0] * frame_w, v[1] * frame_h, v[2] * frame_w, v[3] * frame_h};
}

Mask appearance_mask(const Mask& binary_mask, const Image& image) {
    if (binary_mask.width() != image.width || binary_mask.height() != image.height)
        throw Error("appearance_mask: image and mask sizes differ");
    Mask out(binary_mask.width(), binary_mask.height(), 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            if (!binary_mask.support(x, y)) continue;
            const std::size_t p = (static_cast<std::size_t>(y) * image.width + x) * 3;
            // floor at one intensity step so the support survives black pixels
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = std::max<float>(image.rgb[p + c], 1.0f) / 255.0f;
        }
    }
    return out;
}

}  // namespace stclust
