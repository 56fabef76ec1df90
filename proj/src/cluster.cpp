#include "stclust/cluster.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>

namespace stclust {

namespace {

double sq_dist(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

Embedding mean_of(std::span<const Embedding> points, const std::vector<int>& idx) {
    Embedding m(points[idx.front()].size(), 0.0);
    for (int i : idx)
        for (std::size_t k = 0; k < m.size(); ++k) m[k] += points[i][k];
    for (double& v : m) v /= static_cast<double>(idx.size());
    return m;
}

/// Rebuilds members, creation frames and scores from the assignment, and
/// drops clusters without members.
void compact(ClusterResult& r) {
    const std::size_t k = r.centroids.size();
    std::vector<std::vector<int>> members(k);
    for (std::size_t i = 0; i < r.assignment.size(); ++i)
        if (r.assignment[i] >= 0) members[r.assignment[i]].push_back(static_cast<int>(i));

    std::vector<int> remap(k, -1);
    ClusterResult out;
    out.sse_history = std::move(r.sse_history);
    out.iterations = r.iterations;
    out.node_frame = std::move(r.node_frame);
    out.node_confidence = std::move(r.node_confidence);
    for (std::size_t c = 0; c < k; ++c) {
        if (members[c].empty()) continue;
        remap[c] = static_cast<int>(out.clusters.size());
        int created = std::numeric_limits<int>::max();
        double conf = 0.0;
        for (int i : members[c]) {
            created = std::min(created, out.node_frame[i]);
            conf += out.node_confidence[i];
        }
        out.clusters.push_back(members[c]);
        out.centroids.push_back(r.centroids[c]);
        out.tentative.push_back(r.tentative[c]);
        out.created.push_back(created);
        out.scores.push_back(conf / static_cast<double>(members[c].size()));
        out.inherited_label.push_back(r.inherited_label[c]);
    }
    out.assignment.resize(r.assignment.size(), -1);
    for (std::size_t i = 0; i < r.assignment.size(); ++i)
        out.assignment[i] = r.assignment[i] >= 0 ? remap[r.assignment[i]] : -1;
    r = std::move(out);
}

}  // namespace

KEstimate estimate_k(std::span<const int> per_frame_counts) {
    KEstimate e;
    for (std::size_t i = 0; i < per_frame_counts.size(); ++i) {
        if (per_frame_counts[i] > e.k) {
            e.k = per_frame_counts[i];
            e.anchor = static_cast<int>(i);
        }
    }
    return e;
}

InitialCentroids init_centroids(std::span<const Embedding> anchor_embeddings,
                                std::span<const std::optional<int>> anchor_labels) {
    if (anchor_embeddings.empty()) throw Error("init_centroids: need at least one anchor detection");
    if (!anchor_labels.empty() && anchor_labels.size() != anchor_embeddings.size())
        throw Error("init_centroids: labels and embeddings differ in length");
    InitialCentroids init;
    init.centroids.assign(anchor_embeddings.begin(), anchor_embeddings.end());
    if (anchor_labels.empty())
        init.labels.assign(anchor_embeddings.size(), std::nullopt);
    else
        init.labels.assign(anchor_labels.begin(), anchor_labels.end());
    return init;
}

double sum_squared_error(std::span<const Embedding> points, std::span<const int> assignment,
                         std::span<const Embedding> centroids) {
    double sse = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (assignment[i] >= 0) sse += sq_dist(points[i], centroids[assignment[i]]);
    return sse;
}

ClusterResult cop_kmeans(std::span<const Embedding> embeddings, const ConstraintGraph& graph,
                         const InitialCentroids& init, const KmeansOptions& opt) {
    const int n = static_cast<int>(embeddings.size());
    if (static_cast<std::size_t>(n) != graph.nodes.size())
        throw Error("cop_kmeans: graph node count differs from embedding count");
    if (init.centroids.empty() && n > 0) throw Error("cop_kmeans: K must be >= 1");

    // Must-link units, checked for internal cannot-link edges.
    const std::vector<int> comp = graph.must_link_components();
    const int ncomp = n == 0 ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
    std::vector<std::vector<int>> units(ncomp);
    for (int i = 0; i < n; ++i) units[comp[i]].push_back(i);
    for (const auto& [i, j] : graph.cannot_link)
        if (comp[i] == comp[j])
            throw InvariantError("cop_kmeans: must-link component contains a cannot-link edge (nodes " +
                                 std::to_string(i) + ", " + std::to_string(j) + ")");
    std::vector<Embedding> unit_mean(ncomp);
    for (int c = 0; c < ncomp; ++c) unit_mean[c] = mean_of(embeddings, units[c]);

    // Visit order: descending confidence, then frame, then index.
    std::vector<int> node_order(n);
    std::iota(node_order.begin(), node_order.end(), 0);
    std::stable_sort(node_order.begin(), node_order.end(), [&](int a, int b) {
        const auto& na = graph.nodes[a];
        const auto& nb = graph.nodes[b];
        if (na.confidence != nb.confidence) return na.confidence > nb.confidence;
        if (na.frame != nb.frame) return na.frame < nb.frame;
        return a < b;
    });
    std::vector<int> unit_order;
    std::vector<bool> seen(ncomp, false);
    for (int i : node_order) {
        if (seen[comp[i]]) continue;
        seen[comp[i]] = true;
        unit_order.push_back(comp[i]);
    }
    const auto adj = graph.cannot_link_adjacency();

    ClusterResult r;
    r.centroids = init.centroids;
    r.tentative.assign(r.centroids.size(), false);
    r.inherited_label = init.labels;
    r.inherited_label.resize(r.centroids.size());
    r.assignment.assign(n, -1);
    for (const auto& node : graph.nodes) {
        r.node_frame.push_back(node.frame);
        r.node_confidence.push_back(node.confidence);
    }

    double prev_sse = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < opt.max_iter; ++iter) {
        std::vector<Embedding> centroids = r.centroids;
        std::vector<bool> tentative = r.tentative;
        std::vector<std::optional<int>> inherited = r.inherited_label;
        std::vector<int> assign(n, -1);

        for (int u : unit_order) {
            const auto& members = units[u];
            std::vector<int> cand(centroids.size());
            std::iota(cand.begin(), cand.end(), 0);
            std::vector<double> dist(centroids.size());
            for (std::size_t k = 0; k < centroids.size(); ++k) dist[k] = sq_dist(unit_mean[u], centroids[k]);
            std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) { return dist[a] < dist[b]; });

            int chosen = -1;
            for (int k : cand) {
                bool ok = true;
                for (int m : members) {
                    for (int v : adj[m])
                        if (assign[v] == k) {
                            ok = false;
                            break;
                        }
                    if (!ok) break;
                }
                if (ok) {
                    chosen = k;
                    break;
                }
            }
            if (chosen < 0) {
                chosen = static_cast<int>(centroids.size());
                centroids.push_back(unit_mean[u]);
                tentative.push_back(true);
                inherited.push_back(std::nullopt);
            }
            for (int m : members) assign[m] = chosen;
        }

        // Update step; empty clusters keep their centroid.
        std::vector<std::vector<int>> members(centroids.size());
        for (int i = 0; i < n; ++i) members[assign[i]].push_back(i);
        for (std::size_t k = 0; k < centroids.size(); ++k)
            if (!members[k].empty()) centroids[k] = mean_of(embeddings, members[k]);

        const double sse = sum_squared_error(embeddings, assign, centroids);
        if (iter > 0 && sse > prev_sse * (1.0 + 1e-12) + 1e-300) break;  // keep previous iterate

        const bool stable = assign == r.assignment;
        r.assignment = std::move(assign);
        r.centroids = std::move(centroids);
        r.tentative = std::move(tentative);
        r.inherited_label = std::move(inherited);
        r.sse_history.push_back(sse);
        r.iterations = iter + 1;
        if (stable) break;
        if (iter > 0 && prev_sse - sse <= opt.tol * prev_sse) break;
        prev_sse = sse;
    }
    compact(r);
    return r;
}

ClusterResult confirm_or_discard(const ClusterResult& result, int t_now, int t_lag) {
    ClusterResult r = result;
    for (std::size_t c = 0; c < r.clusters.size(); ++c) {
        if (!r.tentative[c]) continue;
        std::set<int> frames;
        for (int i : r.clusters[c]) frames.insert(r.node_frame[i]);
        if (frames.size() >= 2) {
            r.tentative[c] = false;
        } else if (t_now - r.created[c] >= t_lag) {
            for (int i : r.clusters[c]) r.assignment[i] = -1;
        }
    }
    compact(r);
    return r;
}

std::vector<int> score_filter(const ClusterResult& result, double lambda) {
    std::vector<int> kept;
    for (std::size_t c = 0; c < result.clusters.size(); ++c)
        if (!result.clusters[c].empty() && result.scores[c] > lambda) kept.push_back(static_cast<int>(c));
    return kept;
}

}  // namespace stclust
