#pragma once

#include <optional>
#include <span>
#include <vector>

#include "stclust/constraints.hpp"

namespace stclust {

using Embedding = std::vector<double>;

struct KEstimate {
    int k = 0;
    /// Position (within the given counts) of the earliest frame reaching k;
    /// -1 when every frame is empty.
    int anchor = -1;
};

/// |K| = max per-frame detection count over the window.
KEstimate estimate_k(std::span<const int> per_frame_counts);

struct InitialCentroids {
    std::vector<Embedding> centroids;
    std::vector<std::optional<int>> labels;
};

/// One centroid per anchor-frame detection; clusters inherit the anchor's
/// committed identity, if any.
InitialCentroids init_centroids(std::span<const Embedding> anchor_embeddings,
                                std::span<const std::optional<int>> anchor_labels);

struct KmeansOptions {
    int max_iter = 50;
    /// Stop when the relative SSE decrease falls to or below tol.
    double tol = 1e-6;
};

struct ClusterResult {
    std::vector<int> assignment;  // node -> cluster, -1 if unassigned
    std::vector<Embedding> centroids;
    std::vector<std::vector<int>> clusters;  // members per cluster
    std::vector<bool> tentative;             // spawned and not yet confirmed
    std::vector<int> created;                // earliest member frame per cluster
    std::vector<double> scores;              // mean member confidence
    std::vector<std::optional<int>> inherited_label;
    std::vector<double> sse_history;
    int iterations = 0;

    std::vector<int> node_frame;
    std::vector<double> node_confidence;

    std::size_t size() const { return clusters.size(); }
};

double sum_squared_error(std::span<const Embedding> points, std::span<const int> assignment,
                         std::span<const Embedding> centroids);

/// Constrained kmeans. Must-link components move as one unit (by their mean
/// embedding); nodes are visited in descending confidence, ties by frame
/// then index; a unit that fits no cluster without breaking a cannot-link
/// edge spawns a new tentative cluster. Iterates until the assignment is
/// stable, the relative SSE change is within tol, or max_iter. An
/// iteration that would raise the SSE is rolled back and ends the loop, so
/// sse_history is non-increasing. Empty clusters are dropped from the
/// result. Throws InvariantError when a must-link component contains a
/// cannot-link edge.
ClusterResult cop_kmeans(std::span<const Embedding> embeddings, const ConstraintGraph& graph,
                         const InitialCentroids& init, const KmeansOptions& opt = {});

/// Tentative clusters with members from >= 2 distinct frames become
/// confirmed; single-frame ones at least t_lag frames old are discarded
/// (members unassigned); younger ones stay pending.
ClusterResult confirm_or_discard(const ClusterResult& result, int t_now, int t_lag);

/// Indices of clusters whose mean member confidence exceeds lambda.
std::vector<int> score_filter(const ClusterResult& result, double lambda);

}  // namespace stclust
