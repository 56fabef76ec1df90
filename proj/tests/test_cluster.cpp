#include "doctest.h"

#include <cmath>

#include "kmeans_oracle.hpp"
#include "stclust/cluster.hpp"

using namespace stclust;
using namespace stclust::testing;

namespace {

ConstraintGraph nodes_only(int n, std::vector<int> frames = {}) {
    ConstraintGraph g;
    for (int i = 0; i < n; ++i) {
        GraphNode node;
        node.frame = frames.empty() ? 0 : frames[i];
        node.confidence = 1.0;
        g.nodes.push_back(node);
    }
    return g;
}

}  // namespace

TEST_CASE("estimate_k examples") {
    const std::vector<int> a{3, 2, 3, 1};
    const KEstimate ka = estimate_k(a);
    CHECK(ka.k == 3);
    CHECK(ka.anchor == 0);
    const std::vector<int> b{5};
    CHECK(estimate_k(b).k == 5);
    const std::vector<int> c{0, 0, 0};
    CHECK(estimate_k(c).k == 0);
    CHECK(estimate_k(c).anchor == -1);
    const std::vector<int> d{1, 4, 2};
    CHECK(estimate_k(d).anchor == 1);
}

TEST_CASE("init_centroids") {
    const std::vector<Embedding> e{{0, 0}, {1, 1}};
    const std::vector<std::optional<int>> l{std::nullopt, 4};
    const InitialCentroids init = init_centroids(e, l);
    CHECK(init.centroids == e);
    CHECK(init.labels == l);
    CHECK(init_centroids(e, {}).labels.size() == 2);
    CHECK_THROWS_AS(init_centroids({}, {}), Error);
}

TEST_CASE("two separated pairs recover the natural split") {
    const std::vector<Embedding> pts{{0, 0}, {0.1, 0}, {5, 5}, {5, 5.2}};
    const ConstraintGraph g = nodes_only(4);
    const ClusterResult r = cop_kmeans(pts, g, init_centroids(std::vector<Embedding>{pts[0], pts[1]}, {}));
    REQUIRE(r.size() == 2);
    CHECK(r.assignment[0] == r.assignment[1]);
    CHECK(r.assignment[2] == r.assignment[3]);
    CHECK(r.assignment[0] != r.assignment[2]);
    const double sse = sum_squared_error(pts, r.assignment, r.centroids);
    CHECK(sse == doctest::Approx(brute_force_sse(pts, g, 2)).epsilon(1e-12));
}

TEST_CASE("cannot-link forces a tentative cluster") {
    const std::vector<Embedding> pts{{1, 1}, {1, 1}};
    ConstraintGraph g = nodes_only(2, {0, 1});
    g.cannot_link.insert({0, 1});
    const ClusterResult r = cop_kmeans(pts, g, init_centroids(std::vector<Embedding>{pts[0]}, {}));
    REQUIRE(r.size() == 2);
    CHECK(r.assignment[0] != r.assignment[1]);
    CHECK_FALSE(r.tentative[r.assignment[0]]);
    CHECK(r.tentative[r.assignment[1]]);
}

TEST_CASE("must-link units move together") {
    const std::vector<Embedding> pts{{0, 0}, {10, 10}, {0.2, 0}, {9.8, 10}};
    ConstraintGraph g = nodes_only(4, {0, 0, 1, 1});
    g.must_link.insert({0, 3});
    g.cannot_link.insert({0, 1});
    g.cannot_link.insert({2, 3});
    const ClusterResult r = cop_kmeans(pts, g, init_centroids(std::vector<Embedding>{pts[0], pts[1]}, {}));
    CHECK(r.assignment[0] == r.assignment[3]);
    CHECK(feasible(g, r.assignment));

    ConstraintGraph bad = nodes_only(2, {0, 1});
    bad.must_link.insert({0, 1});
    bad.cannot_link.insert({0, 1});
    CHECK_THROWS_AS(cop_kmeans(std::vector<Embedding>{{0, 0}, {1, 1}}, bad,
                               init_centroids(std::vector<Embedding>{{0, 0}}, {})),
                    InvariantError);
}

TEST_CASE("random constrained instances stay feasible and never beat the oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const KmeansInstance inst = random_instance(rng, true);
        const ClusterResult r = best_of_restarts(inst, rng, 1);
        CHECK(feasible(inst.graph, r.assignment));
        for (int a : r.assignment) CHECK(a >= 0);
        const double sse = sum_squared_error(inst.points, r.assignment, r.centroids);
        const double opt = brute_force_sse(inst.points, inst.graph, static_cast<int>(r.size()));
        CHECK(sse >= opt - 1e-12);
        for (std::size_t k = 1; k < r.sse_history.size(); ++k) CHECK(r.sse_history[k] <= r.sse_history[k - 1]);
    }
}

TEST_CASE("unconstrained runs match plain Lloyd iterations") {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 12;
        std::vector<Embedding> pts;
        for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
        const std::vector<Embedding> seeds{pts[0], pts[1], pts[2]};
        KmeansOptions opt;
        opt.tol = 0.0;
        opt.max_iter = 100;
        const ClusterResult r = cop_kmeans(pts, nodes_only(n), init_centroids(seeds, {}), opt);

        std::vector<Embedding> c = seeds;
        std::vector<int> a(n, -1);
        for (int it = 0; it < 100; ++it) {
            std::vector<int> na(n);
            for (int i = 0; i < n; ++i) {
                double best = 1e300;
                for (int k = 0; k < 3; ++k) {
                    double d = 0.0;
                    for (int j = 0; j < 3; ++j) d += (pts[i][j] - c[k][j]) * (pts[i][j] - c[k][j]);
                    if (d < best) best = d, na[i] = k;
                }
            }
            for (int k = 0; k < 3; ++k) {
                Embedding m(3, 0.0);
                int cnt = 0;
                for (int i = 0; i < n; ++i)
                    if (na[i] == k) {
                        for (int j = 0; j < 3; ++j) m[j] += pts[i][j];
                        ++cnt;
                    }
                if (cnt == 0) continue;
                for (double& v : m) v /= cnt;
                c[k] = m;
            }
            if (na == a) break;
            a = na;
        }
        // same partition up to cluster renumbering
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) CHECK((a[i] == a[j]) == (r.assignment[i] == r.assignment[j]));
    }
}

TEST_CASE("confirm_or_discard lifecycle") {
    // node 0 anchors cluster 0; node 1 is cannot-linked to it and spawns a
    // tentative cluster which node 2 (next frame) joins.
    const std::vector<Embedding> pts{{0, 0}, {0, 0}, {0, 0}};
    ConstraintGraph g = nodes_only(3, {5, 5, 6});
    g.cannot_link.insert({0, 1});
    g.cannot_link.insert({0, 2});
    const ClusterResult r = cop_kmeans(pts, g, init_centroids(std::vector<Embedding>{pts[0]}, {}));
    REQUIRE(r.size() == 2);
    const ClusterResult c = confirm_or_discard(r, 6, 3);
    REQUIRE(c.size() == 2);
    CHECK_FALSE(c.tentative[0]);
    CHECK_FALSE(c.tentative[1]);

    // singleton tentative cluster
    ConstraintGraph g2 = nodes_only(2, {5, 5});
    g2.cannot_link.insert({0, 1});
    const ClusterResult s = cop_kmeans(std::vector<Embedding>{{0, 0}, {0, 0}}, g2,
                                       init_centroids(std::vector<Embedding>{{0, 0}}, {}));
    REQUIRE(s.size() == 2);
    const ClusterResult young = confirm_or_discard(s, 6, 3);
    CHECK(young.size() == 2);
    CHECK(young.tentative[young.assignment[1]]);
    const ClusterResult old = confirm_or_discard(s, 8, 3);
    CHECK(old.size() == 1);
    CHECK(old.assignment[1] == -1);
    CHECK(old.assignment[0] == 0);
}

TEST_CASE("score_filter") {
    auto with_conf = [](std::vector<double> conf) {
        ConstraintGraph g = nodes_only(static_cast<int>(conf.size()), std::vector<int>(conf.size(), 0));
        for (std::size_t i = 0; i < conf.size(); ++i) g.nodes[i].frame = static_cast<int>(i);
        for (std::size_t i = 0; i < conf.size(); ++i) g.nodes[i].confidence = conf[i];
        std::vector<Embedding> pts(conf.size(), Embedding{0.0});
        return cop_kmeans(pts, g, init_centroids(std::vector<Embedding>{{0.0}}, {}));
    };
    const ClusterResult high = with_conf({1.0, 1.0});
    CHECK(score_filter(high, 0.5) == std::vector<int>{0});
    const ClusterResult low = with_conf({0.3, 0.4});
    CHECK(low.scores[0] == doctest::Approx(0.35));
    CHECK(score_filter(low, 0.5).empty());
    CHECK(score_filter(low, 0.0) == std::vector<int>{0});
}
