#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stclust/core.hpp"

namespace stclust {

enum class ShapeSet { sprites, digits };

std::string to_string(ShapeSet s);
ShapeSet shape_set_from_string(const std::string& s);

struct SynthConfig {
    int frame_w = 128;
    int frame_h = 128;
    int object_size = 28;
    int density = 3;
    double birth_prob = 0.5;
    double mean_speed = 5.3;
    double speed_std = 1.0;
    double direction_jitter_deg = 15.0;
    int num_frames = 500;
    ShapeSet shape_set = ShapeSet::sprites;
    std::uint64_t seed = 0;
    bool render_images = true;

    /// Throws Error on invalid settings.
    void validate() const;
};

struct GtSequence {
    SynthConfig config;
    std::vector<Frame> frames;
    /// identity -> shape class (sprite index or digit value)
    std::map<int, int> track_shape;
};

int shape_count(ShapeSet s);

/// Binary template of the given shape class at the given side length.
Mask shape_template(ShapeSet set, int shape_class, int size);

GtSequence generate_sequence(const SynthConfig& cfg);

/// Simulated noisy detector output: independent drops, confidence noise,
/// identities stripped.
GtSequence perturb_detections(const GtSequence& seq, double drop_prob, double conf_noise,
                              std::uint64_t seed);

}  // namespace stclust
