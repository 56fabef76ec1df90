#include "stclust/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "stclust/image.hpp"

namespace stclust {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json synth_to_json(const SynthConfig& c) {
    return json{{"frame_w", c.frame_w},
                {"frame_h", c.frame_h},
                {"object_size", c.object_size},
                {"density", c.density},
                {"birth_prob", c.birth_prob},
                {"mean_speed", c.mean_speed},
                {"speed_std", c.speed_std},
                {"direction_jitter_deg", c.direction_jitter_deg},
                {"num_frames", c.num_frames},
                {"shape_set", to_string(c.shape_set)},
                {"seed", c.seed},
                {"render_images", c.render_images}};
}

SynthConfig synth_from_json(const json& j) {
    SynthConfig c;
    c.frame_w = j.at("frame_w").get<int>();
    c.frame_h = j.at("frame_h").get<int>();
    c.object_size = j.at("object_size").get<int>();
    c.density = j.at("density").get<int>();
    c.birth_prob = j.at("birth_prob").get<double>();
    c.mean_speed = j.at("mean_speed").get<double>();
    c.speed_std = j.at("speed_std").get<double>();
    c.direction_jitter_deg = j.at("direction_jitter_deg").get<double>();
    c.num_frames = j.at("num_frames").get<int>();
    c.shape_set = shape_set_from_string(j.at("shape_set").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.render_images = j.at("render_images").get<bool>();
    return c;
}

std::string frame_png_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06d.png", index);
    return buf;
}

}  // namespace

std::string synth_config_to_json(const SynthConfig& cfg) { return synth_to_json(cfg).dump(2); }

SequenceData from_generated(const GtSequence& seq) {
    SequenceData d;
    d.frame_w = seq.config.frame_w;
    d.frame_h = seq.config.frame_h;
    d.frames = seq.frames;
    d.synth = seq.config;
    d.track_shape = seq.track_shape;
    return d;
}

void write_sequence_dir(const fs::path& dir, const SequenceData& seq, bool with_png) {
    fs::create_directories(dir);
    json j;
    j["format"] = "stclust-sequence";
    j["version"] = 1;
    j["frame_w"] = seq.frame_w;
    j["frame_h"] = seq.frame_h;
    if (seq.synth) j["synth"] = synth_to_json(*seq.synth);
    json shapes = json::object();
    for (const auto& [id, s] : seq.track_shape) shapes[std::to_string(id)] = s;
    j["track_shape"] = shapes;
    json frames = json::array();
    for (const Frame& f : seq.frames) {
        json dets = json::array();
        for (const Detection& d : f.detections) {
            json jd{{"class_id", d.class_id},
                    {"confidence", d.confidence},
                    {"box", {d.box.cx, d.box.cy, d.box.w, d.box.h}},
                    {"rle", rle_encode(d.mask)}};
            jd["id"] = d.label ? json(*d.label) : json(nullptr);
            dets.push_back(std::move(jd));
        }
        frames.push_back(json{{"index", f.index}, {"detections", std::move(dets)}});
    }
    j["frames"] = std::move(frames);

    std::ofstream os(dir / "seq.json");
    if (!os) throw Error("cannot write " + (dir / "seq.json").string());
    os << j.dump(1) << '\n';

    if (with_png) {
        fs::create_directories(dir / "frames");
        for (const Frame& f : seq.frames)
            if (f.image) write_png(dir / "frames" / frame_png_name(f.index), *f.image);
    }
}

SequenceData read_sequence_dir(const fs::path& dir, bool load_images) {
    const fs::path file = dir / "seq.json";
    std::ifstream is(file);
    if (!is) throw Error("cannot open " + file.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw Error(file.string() + ": " + e.what());
    }
    SequenceData d;
    try {
        if (j.value("format", "") != "stclust-sequence") throw Error(file.string() + ": not a sequence file");
        d.frame_w = j.at("frame_w").get<int>();
        d.frame_h = j.at("frame_h").get<int>();
        if (j.contains("synth")) d.synth = synth_from_json(j.at("synth"));
        if (j.contains("track_shape"))
            for (const auto& [k, v] : j.at("track_shape").items()) d.track_shape[std::stoi(k)] = v.get<int>();
        for (const json& jf : j.at("frames")) {
            Frame f;
            f.index = jf.at("index").get<int>();
            for (const json& jd : jf.at("detections")) {
                Detection det;
                det.frame = f.index;
                det.class_id = jd.at("class_id").get<int>();
                det.confidence = jd.at("confidence").get<double>();
                const auto& b = jd.at("box");
                det.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
                det.mask = rle_decode(jd.at("rle").get<std::string>(), d.frame_w, d.frame_h);
                if (!jd.at("id").is_null()) det.label = jd.at("id").get<int>();
                f.detections.push_back(std::move(det));
            }
            if (load_images) {
                const fs::path png = dir / "frames" / frame_png_name(f.index);
                if (fs::exists(png)) f.image = read_png(png);
            }
            d.frames.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        throw Error(file.string() + ": " + e.what());
    }
    return d;
}

void write_results(std::ostream& os, const std::vector<Frame>& frames, int frame_w, int frame_h) {
    for (const Frame& f : frames) {
        std::vector<const Detection*> dets;
        for (const Detection& d : f.detections)
            if (d.label) dets.push_back(&d);
        std::sort(dets.begin(), dets.end(), [](const Detection* a, const Detection* b) { return *a->label < *b->label; });
        for (const Detection* d : dets) {
            if (d->mask.width() != frame_w || d->mask.height() != frame_h)
                throw Error("write_results: mask size differs from frame size");
            os << f.index << ' ' << *d->label << ' ' << d->class_id << ' ' << frame_h << ' ' << frame_w << ' '
               << rle_encode(d->mask) << '\n';
        }
    }
}

void write_results_file(const fs::path& path, const std::vector<Frame>& frames, int frame_w, int frame_h) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    write_results(os, frames, frame_w, frame_h);
}

std::vector<Frame> read_results(std::istream& is) {
    std::map<int, Frame> by_frame;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        int frame = 0, id = 0, cls = 0, h = 0, w = 0;
        if (!(ls >> frame >> id >> cls >> h >> w)) throw Error("results line " + std::to_string(lineno) + ": bad header fields");
        std::string rle;
        std::getline(ls >> std::ws, rle);
        Detection d;
        d.frame = frame;
        d.class_id = cls;
        d.label = id;
        try {
            d.mask = rle_decode(rle, w, h);
        } catch (const Error& e) {
            throw Error("results line " + std::to_string(lineno) + ": " + e.what());
        }
        d.box = support_box(d.mask);
        Frame& f = by_frame[frame];
        f.index = frame;
        f.detections.push_back(std::move(d));
    }
    std::vector<Frame> out;
    for (auto& [idx, f] : by_frame) out.push_back(std::move(f));
    return out;
}

std::vector<Frame> read_results_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path.string());
    return read_results(is);
}

}  // namespace stclust
