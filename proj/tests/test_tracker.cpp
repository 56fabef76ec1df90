#include "doctest.h"

#include <map>
#include <set>

#include "gradcheck.hpp"
#include "stclust/metrics.hpp"
#include "stclust/pipeline.hpp"
#include "stclust/synthgen.hpp"
#include "stclust/tracker.hpp"

using namespace stclust;

namespace {

Detection square(int frame, int x0, int y0, int size, int fw, int fh, double conf = 1.0) {
    Detection d;
    d.frame = frame;
    d.mask = Mask(fw, fh);
    for (int y = y0; y < y0 + size; ++y)
        for (int x = x0; x < x0 + size; ++x) d.mask.at(x, y) = 1.0f;
    d.box = support_box(d.mask);
    d.confidence = conf;
    return d;
}

DhaeParams small_model(std::uint64_t seed = 1) { return glorot_init(testing::tiny_config(), seed); }

void check_output_invariants(const TrackOutput& out) {
    for (const Frame& f : out.frames) {
        std::set<int> ids;
        for (std::size_t i = 0; i < f.detections.size(); ++i) {
            const auto& l = f.detections[i].label;
            CHECK(l == out.store.identity_of(f.index, static_cast<int>(i)));
            if (!l) continue;
            CHECK(ids.insert(*l).second);
        }
    }
}

}  // namespace

TEST_CASE("window_range") {
    CHECK(window_range(0, 0, 3) == std::pair{0, 0});
    CHECK(window_range(2, 0, 3) == std::pair{0, 2});
    CHECK(window_range(10, 0, 3) == std::pair{7, 10});
}

TEST_CASE("single object keeps one identity") {
    std::vector<Frame> seq;
    for (int t = 0; t < 10; ++t) {
        Frame f;
        f.index = t;
        f.detections.push_back(square(t, 2 + 3 * t, 20, 10, 64, 64));
        seq.push_back(f);
    }
    const TrackOutput out = track(seq, small_model(), 64, 64, TrackerConfig{});
    std::set<int> ids;
    for (const Frame& f : out.frames) {
        REQUIRE(f.detections[0].label);
        ids.insert(*f.detections[0].label);
    }
    CHECK(ids.size() == 1);
    check_output_invariants(out);

    std::vector<Frame> gt = seq;
    for (auto& f : gt) f.detections[0].label = 3;
    const MetricsReport r = evaluate(gt, out.frames);
    CHECK(r.IDs == 0);
    CHECK(r.Frag == 0);
    CHECK(r.MOTA == 1.0);
}

TEST_CASE("low-confidence detections stay unlabelled") {
    std::vector<Frame> seq;
    for (int t = 0; t < 6; ++t) {
        Frame f;
        f.index = t;
        f.detections.push_back(square(t, 5 + 2 * t, 5, 8, 64, 64));
        f.detections.push_back(square(t, 40, 40, 8, 64, 64, 0.5));
        seq.push_back(f);
    }
    const TrackOutput out = track(seq, small_model(), 64, 64, TrackerConfig{});
    for (const Frame& f : out.frames) {
        CHECK(f.detections[0].label);
        CHECK_FALSE(f.detections[1].label);
    }
    CHECK(out.stats.filtered_detections == 6);
}

TEST_CASE("a one-frame blip is discarded") {
    std::vector<Frame> seq;
    for (int t = 0; t < 8; ++t) {
        Frame f;
        f.index = t;
        f.detections.push_back(square(t, 5 + 2 * t, 5, 8, 64, 64));
        if (t == 2) f.detections.push_back(square(t, 45, 45, 8, 64, 64));
        seq.push_back(f);
    }
    const TrackOutput out = track(seq, small_model(), 64, 64, TrackerConfig{});
    CHECK_FALSE(out.frames[2].detections[1].label);
    CHECK(out.stats.discarded >= 1);
}

TEST_CASE("input labels are ignored") {
    std::vector<Frame> seq;
    for (int t = 0; t < 5; ++t) {
        Frame f;
        f.index = t;
        f.detections.push_back(square(t, 5 + 2 * t, 5, 8, 64, 64));
        f.detections.back().label = 99;
        seq.push_back(f);
    }
    const TrackOutput out = track(seq, small_model(), 64, 64, TrackerConfig{});
    CHECK(*out.frames[0].detections[0].label == 0);
}

TEST_CASE("tracking generated data respects identity invariants") {
    SynthConfig sc;
    sc.num_frames = 80;
    sc.seed = 5;
    sc.render_images = false;
    const SequenceData seq = from_generated(generate_sequence(sc));
    for (bool graph : {true, false}) {
        TrackerConfig cfg;
        cfg.use_graph = graph;
        const TrackOutput out = track(seq.frames, small_model(3), seq.frame_w, seq.frame_h, cfg);
        check_output_invariants(out);
        // every committed identity was minted by this store
        for (const auto& [key, id] : out.store.committed()) CHECK(id < out.store.next_id());
    }
    TrackerConfig oracle_cfg;
    oracle_cfg.k_mode = KMode::oracle;
    const TrackOutput o = track(seq.frames, small_model(3), seq.frame_w, seq.frame_h, oracle_cfg, gt_k_oracle(seq));
    check_output_invariants(o);
    CHECK_THROWS_AS(track(seq.frames, small_model(3), seq.frame_w, seq.frame_h, oracle_cfg), Error);
}

TEST_CASE("identity store") {
    IdentityStore s;
    const int a = s.mint(), b = s.mint();
    CHECK(a != b);
    s.commit(0, 0, a);
    s.commit(0, 0, a);
    CHECK(s.identity_of(0, 0) == a);
    CHECK_FALSE(s.identity_of(0, 1));
    CHECK(s.frame_has(0, a));
    CHECK_FALSE(s.frame_has(1, a));
    CHECK_THROWS_AS(s.commit(0, 0, b), InvariantError);
    CHECK_THROWS_AS(s.commit(0, 1, a), InvariantError);
    s.commit(4, 2, a);
    CHECK(s.last_seen().at(a) == 4);
}

TEST_CASE("tracker config validation") {
    TrackerConfig cfg;
    cfg.t_lag = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.lambda = 2.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    std::vector<Frame> seq(2);
    seq[0].index = 1;
    seq[1].index = 0;
    CHECK_THROWS_AS(track(seq, small_model(), 64, 64, TrackerConfig{}), Error);
}

TEST_CASE("ablation helpers") {
    CHECK(variant_from_string("loc+shape+G") == Variant::loc_shape_G);
    CHECK_THROWS_AS(variant_from_string("loc+G+shape"), Error);
    CHECK(variant_branches(Variant::loc_G) == Branches::box_only);
    CHECK(variant_branches(Variant::shape) == Branches::mask_only);
    CHECK(variant_uses_graph(Variant::loc_G));
    CHECK_FALSE(variant_uses_graph(Variant::loc_shape));

    SynthConfig sc;
    sc.num_frames = 12;
    sc.seed = 2;
    sc.render_images = false;
    const SequenceData seq = from_generated(generate_sequence(sc));
    const KOracle k = gt_k_oracle(seq);
    for (const Frame& f : seq.frames) CHECK(k(f.index, f.index) == static_cast<int>(f.detections.size()));
    CHECK_THROWS_AS(ablation_run(seq, Variant::loc, small_model(), TrackerConfig{}), Error);
    const MetricsReport r =
        ablation_run(seq, Variant::loc, glorot_init(testing::tiny_config(Branches::box_only), 1), TrackerConfig{});
    CHECK(r.num_gt > 0);
}
