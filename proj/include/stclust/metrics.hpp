#pragma once

#include <map>
#include <string>
#include <vector>

#include "stclust/core.hpp"

namespace stclust {

/// Minimum-cost assignment of rows to columns. Rectangular inputs are
/// padded with zero-cost dummies; result[r] is the column for row r, or -1
/// when the row went to a dummy column. Throws Error on non-finite costs.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

double assignment_cost(const std::vector<std::vector<double>>& cost, const std::vector<int>& assignment);

double box_iou(const BBox& a, const BBox& b);

struct MatchOptions {
    /// Pairs match when IoU >= iou_threshold.
    double iou_threshold = 0.5;
    /// CLEAR measures (MOTA, IDs, Frag, MT/ML, IDF1) match on boxes instead
    /// of masks. MOTS measures always use masks.
    bool match_by_box = false;
};

struct FrameEvents {
    std::vector<std::pair<int, int>> matches;  // (gt index, hyp index)
    std::vector<int> misses;                   // gt indices
    std::vector<int> false_positives;          // hyp indices
    std::vector<int> switches;                 // gt indices with a changed identity
    std::vector<int> fragmentations;           // gt indices re-acquired after a gap
};

/// Per gt identity: the last hypothesis identity it was matched to, and
/// whether it was matched in the frame it last appeared in.
struct MatchState {
    std::map<int, int> last_hyp;
    std::map<int, bool> tracked_last;
};

/// CLEAR matching for one frame. Correspondences from the previous frame
/// are kept while their IoU stays at threshold; the rest is matched by
/// maximum total IoU. Only labelled detections take part.
FrameEvents match_frame(const std::vector<Detection>& gt, const std::vector<Detection>& hyp, MatchState& state,
                        const MatchOptions& opt = {});

struct MetricsReport {
    double MOTA = 0.0;
    double MOTSA = 0.0;
    double sMOTSA = 0.0;
    double MOTSP = 0.0;
    double IDF1 = 0.0;
    int MT = 0;
    int ML_tracks = 0;
    int IDs = 0;
    int Frag = 0;
    int FN = 0;
    int FP = 0;
    int TP = 0;
    int num_gt = 0;
    int num_gt_tracks = 0;

    // MOTS event counts (mask matching).
    int mask_TP = 0;
    int mask_FP = 0;
    int mask_FN = 0;
    int mask_IDs = 0;
    double soft_TP = 0.0;

    // Identity measure counts.
    int IDTP = 0;
    int num_hyp = 0;

    /// Per-sequence reports when built by evaluate_many.
    std::vector<std::pair<std::string, MetricsReport>> per_sequence;
};

/// Frames are aligned by index; the hypothesis may not contain frames
/// missing from the ground truth (Error). Ground-truth frames absent from
/// the hypothesis count as empty.
MetricsReport evaluate(const std::vector<Frame>& gt, const std::vector<Frame>& hyp, const MatchOptions& opt = {});

struct NamedRun {
    std::string name;
    const std::vector<Frame>* gt = nullptr;
    const std::vector<Frame>* hyp = nullptr;
};

/// Pools event counts across sequences; the per-sequence reports are kept.
MetricsReport evaluate_many(const std::vector<NamedRun>& runs, const MatchOptions& opt = {});

/// key=value lines, one per measure.
std::string format_key_values(const MetricsReport& r);
std::string format_table(const MetricsReport& r);

}  // namespace stclust
