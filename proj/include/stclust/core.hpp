#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stclust {

/// Raised for contract violations on inputs (bad dimensions, malformed
/// files, invalid configs). Internal invariant breaks use InvariantError.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Axis-aligned box in pixel units, stored as centroid + extent.
struct BBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    bool valid() const { return w > 0.0 && h > 0.0; }
};

/// Dense mask grid, row-major, channel-last. channels == 1 is a binary
/// shape mask; channels == 3 is the appearance variant (RGB in [0, 1],
/// zero outside the object support).
class Mask {
public:
    Mask() = default;
    Mask(int width, int height, int channels = 1);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    float& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }

    /// True when any channel at (x, y) is nonzero.
    bool support(int x, int y) const;
    std::size_t support_area() const;

    /// Collapses to a single-channel 0/1 mask.
    Mask binary() const;

    bool operator==(const Mask& other) const = default;

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::vector<float> data_;
};

/// Integer pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
};

struct Detection {
    int frame = 0;
    BBox box;
    Mask mask;
    double confidence = 1.0;
    int class_id = 0;
    std::optional<int> label;
};

/// Interleaved 8-bit RGB image.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
};

struct Frame {
    int index = 0;
    std::vector<Detection> detections;
    std::optional<Image> image;
};

double mask_iou(const Mask& a, const Mask& b);

/// Column-major run lengths of the binary support, alternating
/// background/foreground and always starting with a background run
/// (which may be 0). Counts are space separated. Not COCO-compatible.
std::string rle_encode(const Mask& m);
Mask rle_decode(const std::string& counts, int width, int height);

/// Tight bounding rectangle of the mask support; empty rect if no support.
PixelRect support_rect(const Mask& m);
/// Box of the support rectangle, in pixel coordinates.
BBox support_box(const Mask& m);
/// Copy of the mask restricted to the support rectangle.
Mask crop_to_support(const Mask& m);

std::array<double, 4> normalize_box(const BBox& b, int frame_w, int frame_h);
BBox denormalize_box(std::span<const double> v, int frame_w, int frame_h);

/// Mask multiplied by the RGB content of the image (appearance model, D = 3).
Mask appearance_mask(const Mask& binary_mask, const Image& image);

}  // namespace stclust
