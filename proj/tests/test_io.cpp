#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stclust/image.hpp"
#include "stclust/io.hpp"
#include "stclust/synthgen.hpp"

using namespace stclust;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("stclust_io_" + name);
    fs::remove_all(p);
    return p;
}

SequenceData small_sequence(bool images) {
    SynthConfig sc;
    sc.num_frames = 6;
    sc.seed = 8;
    sc.frame_w = 48;
    sc.frame_h = 40;
    sc.object_size = 12;
    sc.render_images = images;
    return from_generated(generate_sequence(sc));
}

}  // namespace

TEST_CASE("sequence directory round trip") {
    const SequenceData seq = small_sequence(true);
    const fs::path dir = scratch("seq");
    write_sequence_dir(dir, seq, true);
    CHECK(fs::exists(dir / "seq.json"));
    CHECK(fs::exists(dir / "frames" / "000000.png"));

    const SequenceData back = read_sequence_dir(dir, true);
    CHECK(back.frame_w == seq.frame_w);
    CHECK(back.frame_h == seq.frame_h);
    CHECK(back.track_shape == seq.track_shape);
    REQUIRE(back.synth);
    CHECK(back.synth->seed == 8);
    REQUIRE(back.frames.size() == seq.frames.size());
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        const Frame& a = seq.frames[t];
        const Frame& b = back.frames[t];
        CHECK(a.index == b.index);
        REQUIRE(b.image);
        CHECK(a.image->rgb == b.image->rgb);
        REQUIRE(a.detections.size() == b.detections.size());
        for (std::size_t k = 0; k < a.detections.size(); ++k) {
            CHECK(a.detections[k].mask == b.detections[k].mask);
            CHECK(a.detections[k].label == b.detections[k].label);
            CHECK(a.detections[k].box.cx == b.detections[k].box.cx);
            CHECK(a.detections[k].confidence == b.detections[k].confidence);
        }
    }
    const SequenceData no_img = read_sequence_dir(dir, false);
    CHECK_FALSE(no_img.frames[0].image);
    fs::remove_all(dir);
}

TEST_CASE("malformed sequence files are rejected") {
    const fs::path dir = scratch("bad");
    fs::create_directories(dir);
    CHECK_THROWS_AS(read_sequence_dir(dir, false), Error);
    std::ofstream(dir / "seq.json") << "{\"format\": \"something-else\", \"version\": 1}";
    CHECK_THROWS_AS(read_sequence_dir(dir, false), Error);
    std::ofstream(dir / "seq.json") << "{not json";
    CHECK_THROWS_AS(read_sequence_dir(dir, false), Error);
    fs::remove_all(dir);
}

TEST_CASE("results file round trip") {
    const SequenceData seq = small_sequence(false);
    std::ostringstream os;
    write_results(os, seq.frames, seq.frame_w, seq.frame_h);
    const std::string text = os.str();
    std::istringstream first_line(text.substr(0, text.find('\n')));
    int frame, id, cls, h, w;
    std::string rle;
    first_line >> frame >> id >> cls >> h >> w >> rle;
    CHECK(frame == seq.frames[frame].index);
    CHECK_FALSE(seq.frames[frame].detections.empty());
    CHECK(h == 40);
    CHECK(w == 48);

    std::istringstream is(text);
    const std::vector<Frame> back = read_results(is);
    std::size_t n_in = 0, n_out = 0;
    for (const Frame& f : seq.frames) n_in += f.detections.size();
    for (const Frame& f : back) n_out += f.detections.size();
    CHECK(n_in == n_out);
    for (const Frame& f : back) {
        const Frame& src = seq.frames[f.index];
        for (const Detection& d : f.detections) {
            bool found = false;
            for (const Detection& s : src.detections)
                if (s.label == d.label) {
                    found = true;
                    CHECK(s.mask.binary() == d.mask);
                }
            CHECK(found);
        }
    }

    // unlabelled detections are left out
    std::vector<Frame> frames = seq.frames;
    for (Detection& d : frames[0].detections) d.label.reset();
    std::ostringstream os2;
    write_results(os2, frames, seq.frame_w, seq.frame_h);
    CHECK(os2.str().rfind("0 ", 0) != 0);

    std::istringstream bad("0 1 0 4 4 17\n");
    CHECK_THROWS_AS(read_results(bad), Error);
    std::istringstream short_line("0 1 0 4\n");
    CHECK_THROWS_AS(read_results(short_line), Error);
}

TEST_CASE("png round trip and overlay") {
    Image img(5, 3);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<std::uint8_t>(i * 7);
    const fs::path p = scratch("img.png");
    write_png(p, img);
    const Image back = read_png(p);
    CHECK(back.width == 5);
    CHECK(back.height == 3);
    CHECK(back.rgb == img.rgb);
    fs::remove(p);
    CHECK_THROWS_AS(read_png(p), Error);

    const SequenceData seq = small_sequence(true);
    const Image ov = render_overlay(seq.frames[0], seq.frame_w, seq.frame_h, 2);
    CHECK(ov.width == 96);
    CHECK(ov.height == 80);
    CHECK_THROWS_AS(render_overlay(seq.frames[0], seq.frame_w, seq.frame_h, 0), Error);
}
