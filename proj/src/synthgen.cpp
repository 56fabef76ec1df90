#include "stclust/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stclust/random.hpp"

namespace stclust {

namespace detail {
const std::vector<std::vector<std::string>>& digit_glyphs();
}

namespace {

struct LiveObject {
    int label = 0;
    int shape = 0;
    double x = 0.0;  // top-left, pixels
    double y = 0.0;
    double speed = 0.0;
    double heading = 0.0;  // radians
    std::array<std::uint8_t, 3> color{};
    Mask sprite;
};

constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette{{
    {230, 25, 75}, {60, 180, 75}, {255, 225, 25}, {0, 130, 200},
    {245, 130, 48}, {145, 30, 180}, {70, 240, 240}, {240, 50, 230},
}};

constexpr double kEntrySpread = std::numbers::pi / 4.0;

// A new object must be able to travel a few straight steps, and its first
// step must survive a two-sigma heading jitter either way, so no track is
// born already on its way out.
constexpr int kMinStraightSteps = 3;

bool boxes_overlap(double ax, double ay, double bx, double by, int size) {
    return std::abs(ax - bx) < size && std::abs(ay - by) < size;
}

bool inside_after(const LiveObject& o, double heading, int steps, int size, const SynthConfig& cfg) {
    const double x = o.x + steps * o.speed * std::cos(heading);
    const double y = o.y + steps * o.speed * std::sin(heading);
    return x >= 0.0 && y >= 0.0 && x + size <= cfg.frame_w && y + size <= cfg.frame_h;
}

bool stays_inside(const LiveObject& o, double jitter, int size, const SynthConfig& cfg) {
    return inside_after(o, o.heading, kMinStraightSteps, size, cfg) &&
           inside_after(o, o.heading - 2.0 * jitter, 1, size, cfg) &&
           inside_after(o, o.heading + 2.0 * jitter, 1, size, cfg);
}

}  // namespace

std::string to_string(ShapeSet s) { return s == ShapeSet::sprites ? "sprites" : "digits"; }

ShapeSet shape_set_from_string(const std::string& s) {
    if (s == "sprites") return ShapeSet::sprites;
    if (s == "digits") return ShapeSet::digits;
    throw Error("unknown shape set '" + s + "' (expected sprites|digits)");
}

void SynthConfig::validate() const {
    if (frame_w <= 0 || frame_h <= 0) throw Error("synth: frame dims must be positive");
    if (object_size <= 0 || object_size >= std::min(frame_w, frame_h))
        throw Error("synth: object_size must be in (0, min(frame_w, frame_h))");
    if (density < 1) throw Error("synth: density must be >= 1");
    if (birth_prob < 0.0 || birth_prob > 1.0) throw Error("synth: birth_prob must be in [0,1]");
    if (mean_speed < 0.0 || speed_std < 0.0) throw Error("synth: speeds must be nonnegative");
    if (num_frames < 1) throw Error("synth: num_frames must be >= 1");
}

int shape_count(ShapeSet s) {
    return s == ShapeSet::sprites ? 4 : static_cast<int>(detail::digit_glyphs().size());
}

Mask shape_template(ShapeSet set, int shape_class, int size) {
    if (shape_class < 0 || shape_class >= shape_count(set)) throw Error("shape class out of range");
    Mask m(size, size, 1);
    const double c = 0.5 * size;
    const int margin = std::max(1, static_cast<int>(std::lround(0.1 * size)));
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double px = x + 0.5 - c;
            const double py = y + 0.5 - c;
            bool on = false;
            if (set == ShapeSet::digits) {
                const auto& g = detail::digit_glyphs()[shape_class];
                const int gs = static_cast<int>(g.size());
                on = g[y * gs / size][x * gs / size] == '#';
            } else {
                switch (shape_class) {
                    case 0:  // square
                        on = x >= margin && x < size - margin && y >= margin && y < size - margin;
                        break;
                    case 1:  // circle
                        on = px * px + py * py <= (c - 1.0) * (c - 1.0);
                        break;
                    case 2: {  // triangle, apex up
                        const double top = margin, bottom = size - margin;
                        if (y + 0.5 >= top && y + 0.5 <= bottom) {
                            const double half = (y + 0.5 - top) / (bottom - top) * (c - margin);
                            on = std::abs(px) <= half;
                        }
                        break;
                    }
                    default:  // diamond
                        on = std::abs(px) + std::abs(py) <= c - 1.0;
                        break;
                }
            }
            m.at(x, y) = on ? 1.0f : 0.0f;
        }
    }
    return m;
}

GtSequence generate_sequence(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "synthgen"));
    const int size = cfg.object_size;
    const double jitter = cfg.direction_jitter_deg * std::numbers::pi / 180.0;

    GtSequence seq;
    seq.config = cfg;
    seq.frames.reserve(cfg.num_frames);

    std::vector<std::optional<LiveObject>> slots(cfg.density);
    int next_label = 0;

    for (int t = 0; t < cfg.num_frames; ++t) {
        // Objects of the previous frame, including those leaving now, block
        // spawn positions so no object appears where another just stood.
        std::vector<std::pair<double, double>> blocked;
        if (t > 0) {
            for (auto& slot : slots) {
                if (!slot) continue;
                blocked.emplace_back(slot->x, slot->y);
                slot->heading += rng.normal(0.0, jitter);
                slot->x += slot->speed * std::cos(slot->heading);
                slot->y += slot->speed * std::sin(slot->heading);
                const bool inside = slot->x >= 0.0 && slot->y >= 0.0 &&
                                    slot->x + size <= cfg.frame_w && slot->y + size <= cfg.frame_h;
                if (!inside) slot.reset();
            }
        }
        for (const auto& slot : slots)
            if (slot) blocked.emplace_back(slot->x, slot->y);

        for (auto& slot : slots) {
            if (slot || !rng.bernoulli(cfg.birth_prob)) continue;
            LiveObject obj;
            bool placed = false;
            for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
                if (t == 0) {
                    obj.x = rng.uniform(0.0, cfg.frame_w - size);
                    obj.y = rng.uniform(0.0, cfg.frame_h - size);
                    obj.heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
                } else {
                    // Later objects enter at a border, heading inward.
                    const auto side = rng.below(4);
                    const double along = rng.uniform();
                    const double spread = rng.uniform(-kEntrySpread, kEntrySpread);
                    const double xs = along * (cfg.frame_w - size), ys = along * (cfg.frame_h - size);
                    switch (side) {
                        case 0: obj.x = 0.0, obj.y = ys, obj.heading = 0.0; break;
                        case 1: obj.x = cfg.frame_w - size, obj.y = ys, obj.heading = std::numbers::pi; break;
                        case 2: obj.x = xs, obj.y = 0.0, obj.heading = 0.5 * std::numbers::pi; break;
                        default: obj.x = xs, obj.y = cfg.frame_h - size, obj.heading = 1.5 * std::numbers::pi; break;
                    }
                    obj.heading += spread;
                }
                obj.speed = std::max(1.0, rng.normal(cfg.mean_speed, cfg.speed_std));
                placed = stays_inside(obj, jitter, size, cfg) && std::none_of(blocked.begin(), blocked.end(), [&](const auto& b) {
                    return boxes_overlap(obj.x, obj.y, b.first, b.second, size);
                });
            }
            if (!placed) continue;
            blocked.emplace_back(obj.x, obj.y);
            obj.label = next_label++;
            obj.shape = static_cast<int>(rng.below(shape_count(cfg.shape_set)));
            obj.color = kPalette[rng.below(kPalette.size())];
            obj.sprite = shape_template(cfg.shape_set, obj.shape, size);
            seq.track_shape[obj.label] = obj.shape;
            slot = std::move(obj);
        }

        // Painter's order by ascending label: higher labels occlude lower ones.
        std::vector<const LiveObject*> live;
        for (const auto& slot : slots)
            if (slot) live.push_back(&*slot);
        std::sort(live.begin(), live.end(),
                  [](const LiveObject* a, const LiveObject* b) { return a->label < b->label; });

        std::vector<int> owner(static_cast<std::size_t>(cfg.frame_w) * cfg.frame_h, -1);
        for (std::size_t k = 0; k < live.size(); ++k) {
            const LiveObject& o = *live[k];
            const int ox = static_cast<int>(std::lround(o.x));
            const int oy = static_cast<int>(std::lround(o.y));
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const int fx = ox + x, fy = oy + y;
                    if (fx < 0 || fy < 0 || fx >= cfg.frame_w || fy >= cfg.frame_h) continue;
                    if (o.sprite.at(x, y) > 0.0f)
                        owner[static_cast<std::size_t>(fy) * cfg.frame_w + fx] = static_cast<int>(k);
                }
            }
        }

        Frame frame;
        frame.index = t;
        if (cfg.render_images) frame.image = Image(cfg.frame_w, cfg.frame_h);
        std::vector<Mask> visible(live.size());
        for (auto& m : visible) m = Mask(cfg.frame_w, cfg.frame_h, 1);
        for (int y = 0; y < cfg.frame_h; ++y) {
            for (int x = 0; x < cfg.frame_w; ++x) {
                const int k = owner[static_cast<std::size_t>(y) * cfg.frame_w + x];
                if (k < 0) continue;
                visible[k].at(x, y) = 1.0f;
                if (frame.image) {
                    const std::size_t p = (static_cast<std::size_t>(y) * cfg.frame_w + x) * 3;
                    for (int c = 0; c < 3; ++c) frame.image->rgb[p + c] = live[k]->color[c];
                }
            }
        }
        for (std::size_t k = 0; k < live.size(); ++k) {
            if (visible[k].support_area() == 0) continue;  // fully occluded
            Detection d;
            d.frame = t;
            d.box = support_box(visible[k]);
            d.mask = std::move(visible[k]);
            d.confidence = 1.0;
            d.class_id = 0;
            d.label = live[k]->label;
            frame.detections.push_back(std::move(d));
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

GtSequence perturb_detections(const GtSequence& seq, double drop_prob, double conf_noise,
                              std::uint64_t seed) {
    if (drop_prob < 0.0 || drop_prob > 1.0 || conf_noise < 0.0 || conf_noise > 1.0)
        throw Error("perturb_detections: probabilities must be in [0,1]");
    Rng rng(derive_seed(seed, "perturb"));
    GtSequence out;
    out.config = seq.config;
    out.frames.reserve(seq.frames.size());
    for (const Frame& f : seq.frames) {
        Frame nf;
        nf.index = f.index;
        nf.image = f.image;
        for (const Detection& d : f.detections) {
            const bool drop = rng.bernoulli(drop_prob);
            const double u = rng.uniform();
            if (drop) continue;
            Detection nd = d;
            nd.confidence = std::clamp(1.0 - u * conf_noise, 0.0, 1.0);
            nd.label.reset();
            nf.detections.push_back(std::move(nd));
        }
        out.frames.push_back(std::move(nf));
    }
    return out;
}

}  // namespace stclust
