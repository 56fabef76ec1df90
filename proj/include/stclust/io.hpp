#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stclust/core.hpp"
#include "stclust/synthgen.hpp"

namespace stclust {

/// Contents of a sequence directory: seq.json plus optional
/// frames/NNNNNN.png.
struct SequenceData {
    int frame_w = 0;
    int frame_h = 0;
    std::vector<Frame> frames;
    std::optional<SynthConfig> synth;
    std::map<int, int> track_shape;
};

SequenceData from_generated(const GtSequence& seq);

void write_sequence_dir(const std::filesystem::path& dir, const SequenceData& seq, bool write_png);
/// Images are loaded when present and requested.
SequenceData read_sequence_dir(const std::filesystem::path& dir, bool load_images);

/// One line per labelled detection, sorted by frame then identity:
/// `frame id class_id img_height img_width rle`.
void write_results(std::ostream& os, const std::vector<Frame>& frames, int frame_w, int frame_h);
void write_results_file(const std::filesystem::path& path, const std::vector<Frame>& frames, int frame_w,
                        int frame_h);
/// Frames appear in ascending order, only those with at least one line.
/// Boxes are rebuilt from the mask support; confidence is 1.
std::vector<Frame> read_results(std::istream& is);
std::vector<Frame> read_results_file(const std::filesystem::path& path);

std::string synth_config_to_json(const SynthConfig& cfg);

}  // namespace stclust
