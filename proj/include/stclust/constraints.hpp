#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stclust/core.hpp"

namespace stclust {

enum class ConstraintMode { mask_iou, embedding_distance };

std::string to_string(ConstraintMode m);
ConstraintMode constraint_mode_from_string(const std::string& s);

struct ConstraintConfig {
    /// Temporal radius within which non-overlapping pairs are cannot-linked.
    int tau = 1;
    ConstraintMode mode = ConstraintMode::mask_iou;
    /// Spatial-test threshold in embedding_distance mode (Euclidean).
    double embed_dist_max = 0.0;
    /// Cannot-link pairs that already carry two different identities.
    bool exclusive_labels = true;

    void validate() const;
};

struct GraphNode {
    int frame = 0;
    int class_id = 0;
    double confidence = 0.0;
    std::optional<int> label;
};

using Edge = std::pair<int, int>;  // (i, j) with i < j

struct ConstraintGraph {
    std::vector<GraphNode> nodes;
    std::set<Edge> cannot_link;
    std::set<Edge> must_link;

    bool has_cannot_link(int i, int j) const;
    bool has_must_link(int i, int j) const;

    /// Adjacency lists of the cannot-link edges.
    std::vector<std::vector<int>> cannot_link_adjacency() const;

    /// Connected components of the must-link edges; singletons included.
    /// Returns the component id of every node, ids dense from 0 in order of
    /// first appearance.
    std::vector<int> must_link_components() const;
};

/// Graph with nodes but no edges (the "no constraints" ablation).
ConstraintGraph unconstrained_graph(std::span<const Detection* const> window);

/// Cannot-link (i, j) iff same frame, or different classes, or
/// |t_i - t_j| <= tau and the spatial test fails (mask IoU == 0, or
/// embedding distance > embed_dist_max), or both carry different labels
/// (when exclusive_labels). Must-link iff same non-empty label, same class,
/// different frames. A pair qualifying for both raises InvariantError.
ConstraintGraph build_graph(std::span<const Detection* const> window,
                            std::span<const std::vector<double>> embeddings, const ConstraintConfig& cfg);

}  // namespace stclust
