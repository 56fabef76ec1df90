#pragma once

#include <filesystem>
#include <vector>

#include "stclust/core.hpp"

namespace stclust {

void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

/// Colored masks blended over the frame (or a black canvas) with each
/// identity number drawn at the top-left of its box. Unlabelled
/// detections are outlined in grey.
Image render_overlay(const Frame& frame, int frame_w, int frame_h, int scale = 1);

}  // namespace stclust
