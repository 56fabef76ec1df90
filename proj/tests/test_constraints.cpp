#include "doctest.h"

#include <cstdlib>
#include <set>

#include "stclust/constraints.hpp"
#include "stclust/random.hpp"
#include "stclust/synthgen.hpp"

using namespace stclust;

namespace {

Detection det(int frame, int x0, int y0, int size, std::optional<int> label = {}, int cls = 0) {
    Detection d;
    d.frame = frame;
    d.mask = Mask(32, 32);
    for (int y = y0; y < y0 + size; ++y)
        for (int x = x0; x < x0 + size; ++x) d.mask.at(x, y) = 1.0f;
    d.box = support_box(d.mask);
    d.label = label;
    d.class_id = cls;
    return d;
}

ConstraintGraph graph_of(const std::vector<Detection>& dets, const ConstraintConfig& cfg,
                         const std::vector<std::vector<double>>& emb = {}) {
    std::vector<const Detection*> ptrs;
    for (const Detection& d : dets) ptrs.push_back(&d);
    return build_graph(ptrs, emb, cfg);
}

}  // namespace

TEST_CASE("edge examples") {
    const ConstraintConfig cfg;
    SUBCASE("same frame is cannot-link") {
        const auto g = graph_of({det(0, 0, 0, 4), det(0, 0, 0, 4)}, cfg);
        CHECK(g.has_cannot_link(0, 1));
        CHECK(g.has_cannot_link(1, 0));
        CHECK_FALSE(g.has_must_link(0, 1));
    }
    SUBCASE("same label across frames is must-link") {
        const auto g = graph_of({det(3, 0, 0, 4, 7), det(4, 1, 1, 4, 7)}, cfg);
        CHECK(g.has_must_link(0, 1));
        CHECK_FALSE(g.has_cannot_link(0, 1));
    }
    SUBCASE("overlapping unlabelled neighbours have no edge") {
        const auto g = graph_of({det(3, 0, 0, 4), det(4, 1, 1, 4)}, cfg);
        CHECK(g.cannot_link.empty());
        CHECK(g.must_link.empty());
    }
    SUBCASE("disjoint masks within tau are cannot-link") {
        const auto g = graph_of({det(3, 0, 0, 4), det(4, 10, 10, 4), det(5, 20, 20, 4)}, cfg);
        CHECK(g.has_cannot_link(0, 1));
        CHECK(g.has_cannot_link(1, 2));
        CHECK_FALSE(g.has_cannot_link(0, 2));
    }
    SUBCASE("different classes are cannot-link at any distance") {
        const auto g = graph_of({det(0, 0, 0, 4, {}, 0), det(3, 0, 0, 4, {}, 1)}, cfg);
        CHECK(g.has_cannot_link(0, 1));
    }
    SUBCASE("different committed labels are cannot-link") {
        const auto g = graph_of({det(0, 0, 0, 4, 1), det(2, 0, 0, 4, 2)}, cfg);
        CHECK(g.has_cannot_link(0, 1));
        ConstraintConfig loose = cfg;
        loose.exclusive_labels = false;
        CHECK(graph_of({det(0, 0, 0, 4, 1), det(2, 0, 0, 4, 2)}, loose).cannot_link.empty());
    }
}

TEST_CASE("conflicting edge raises") {
    const ConstraintConfig cfg;
    // same label, far apart in adjacent frames: ML and CL at once
    CHECK_THROWS_AS(graph_of({det(0, 0, 0, 4, 5), det(1, 20, 20, 4, 5)}, cfg), InvariantError);
}

TEST_CASE("embedding distance mode") {
    ConstraintConfig cfg;
    cfg.mode = ConstraintMode::embedding_distance;
    cfg.embed_dist_max = 1.0;
    const std::vector<Detection> dets{det(0, 0, 0, 4), det(1, 20, 20, 4), det(1, 0, 0, 4)};
    const auto g = graph_of(dets, cfg, {{0.0, 0.0}, {0.5, 0.5}, {3.0, 0.0}});
    CHECK_FALSE(g.has_cannot_link(0, 1));
    CHECK(g.has_cannot_link(0, 2));
    CHECK(g.has_cannot_link(1, 2));
    CHECK_THROWS_AS(graph_of(dets, cfg), Error);
    cfg.embed_dist_max = -1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    ConstraintConfig bad;
    bad.tau = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    CHECK(constraint_mode_from_string("embedding_distance") == ConstraintMode::embedding_distance);
    CHECK_THROWS_AS(constraint_mode_from_string("nope"), Error);
}

TEST_CASE("graph invariants on generated windows") {
    SynthConfig sc;
    sc.frame_w = sc.frame_h = 64;
    sc.object_size = 14;
    sc.num_frames = 60;
    sc.seed = 21;
    sc.render_images = false;
    const GtSequence seq = generate_sequence(sc);
    Rng rng(5);
    const ConstraintConfig cfg;
    for (int t = 3; t < 60; ++t) {
        std::vector<Detection> window;
        for (int f = t - 3; f <= t; ++f)
            for (Detection d : seq.frames[f].detections) {
                // keep labels on the older frames only, some of the time
                if (f == t || rng.bernoulli(0.3)) d.label.reset();
                window.push_back(d);
            }
        // A track whose visible fragments do not overlap between nearby
        // frames (passing behind another object) cannot carry one label.
        for (std::size_t i = 0; i < window.size(); ++i)
            for (std::size_t j = i + 1; j < window.size(); ++j)
                if (window[i].label && window[j].label && *window[i].label == *window[j].label &&
                    std::abs(window[i].frame - window[j].frame) <= cfg.tau &&
                    mask_iou(window[i].mask, window[j].mask) == 0.0) {
                    window[i].label.reset();
                    window[j].label.reset();
                }
        const ConstraintGraph g = graph_of(window, cfg);
        const int n = static_cast<int>(window.size());
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) {
                    CHECK_FALSE(g.has_cannot_link(i, i));
                    continue;
                }
                CHECK(g.has_cannot_link(i, j) == g.has_cannot_link(j, i));
                CHECK_FALSE((g.has_cannot_link(i, j) && g.has_must_link(i, j)));
                if (window[i].frame == window[j].frame) CHECK(g.has_cannot_link(i, j));
            }
        // must-link components partition labelled nodes by label
        const auto comp = g.must_link_components();
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const bool labelled = window[i].label && window[j].label;
                if (labelled) CHECK((comp[i] == comp[j]) == (*window[i].label == *window[j].label));
                else CHECK(comp[i] != comp[j]);
            }
        const auto adj = g.cannot_link_adjacency();
        std::size_t deg = 0;
        for (const auto& a : adj) deg += a.size();
        CHECK(deg == 2 * g.cannot_link.size());
    }
}

TEST_CASE("unconstrained graph") {
    const std::vector<Detection> dets{det(0, 0, 0, 4), det(0, 10, 10, 4)};
    std::vector<const Detection*> ptrs{&dets[0], &dets[1]};
    const ConstraintGraph g = unconstrained_graph(ptrs);
    CHECK(g.nodes.size() == 2);
    CHECK(g.cannot_link.empty());
    CHECK(g.must_link.empty());
    CHECK(g.must_link_components() == std::vector<int>{0, 1});
}
