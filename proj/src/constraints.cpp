#include "stclust/constraints.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>

namespace stclust {

namespace {

Edge ordered(int i, int j) { return i < j ? Edge{i, j} : Edge{j, i}; }

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

std::vector<GraphNode> make_nodes(std::span<const Detection* const> window) {
    std::vector<GraphNode> nodes;
    nodes.reserve(window.size());
    for (const Detection* d : window) nodes.push_back({d->frame, d->class_id, d->confidence, d->label});
    return nodes;
}

}  // namespace

std::string to_string(ConstraintMode m) {
    return m == ConstraintMode::mask_iou ? "mask_iou" : "embedding_distance";
}

ConstraintMode constraint_mode_from_string(const std::string& s) {
    if (s == "mask_iou" || s == "iou") return ConstraintMode::mask_iou;
    if (s == "embedding_distance" || s == "embedding") return ConstraintMode::embedding_distance;
    throw Error("unknown constraint mode '" + s + "' (expected mask_iou|embedding_distance)");
}

void ConstraintConfig::validate() const {
    if (tau < 1) throw Error("constraints: tau must be >= 1");
    if (mode == ConstraintMode::embedding_distance && !(embed_dist_max > 0.0))
        throw Error("constraints: embedding_distance mode needs embed_dist_max > 0");
}

bool ConstraintGraph::has_cannot_link(int i, int j) const { return cannot_link.count(ordered(i, j)) > 0; }

bool ConstraintGraph::has_must_link(int i, int j) const { return must_link.count(ordered(i, j)) > 0; }

std::vector<std::vector<int>> ConstraintGraph::cannot_link_adjacency() const {
    std::vector<std::vector<int>> adj(nodes.size());
    for (const auto& [i, j] : cannot_link) {
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    return adj;
}

std::vector<int> ConstraintGraph::must_link_components() const {
    std::vector<int> parent(nodes.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& [i, j] : must_link) {
        const int a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
    std::vector<int> comp(nodes.size(), -1), root_id(nodes.size(), -1);
    int next = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const int r = find(static_cast<int>(i));
        if (root_id[r] < 0) root_id[r] = next++;
        comp[i] = root_id[r];
    }
    return comp;
}

ConstraintGraph unconstrained_graph(std::span<const Detection* const> window) {
    ConstraintGraph g;
    g.nodes = make_nodes(window);
    return g;
}

ConstraintGraph build_graph(std::span<const Detection* const> window,
                            std::span<const std::vector<double>> embeddings, const ConstraintConfig& cfg) {
    cfg.validate();
    const bool by_embedding = cfg.mode == ConstraintMode::embedding_distance;
    if (by_embedding && embeddings.size() != window.size())
        throw Error("build_graph: embedding_distance mode requires one embedding per detection");

    ConstraintGraph g;
    g.nodes = make_nodes(window);
    const int n = static_cast<int>(window.size());
    for (int i = 0; i < n; ++i) {
        const Detection& a = *window[i];
        for (int j = i + 1; j < n; ++j) {
            const Detection& b = *window[j];
            const bool same_frame = a.frame == b.frame;
            const bool same_class = a.class_id == b.class_id;

            bool cl = same_frame || !same_class;
            if (!cl && std::abs(a.frame - b.frame) <= cfg.tau) {
                if (by_embedding) {
                    cl = euclidean(embeddings[i], embeddings[j]) > cfg.embed_dist_max;
                } else {
                    cl = mask_iou(a.mask, b.mask) == 0.0;
                }
            }
            if (!cl && cfg.exclusive_labels && a.label && b.label && *a.label != *b.label) cl = true;

            const bool ml = a.label && b.label && *a.label == *b.label && !same_frame && same_class;

            if (cl && ml) {
                throw InvariantError("build_graph: pair (" + std::to_string(i) + ", " + std::to_string(j) +
                                     ") is both cannot-link and must-link (label " + std::to_string(*a.label) +
                                     ", frames " + std::to_string(a.frame) + "/" + std::to_string(b.frame) + ")");
            }
            if (cl) g.cannot_link.insert({i, j});
            if (ml) g.must_link.insert({i, j});
        }
    }
    return g;
}

}  // namespace stclust
