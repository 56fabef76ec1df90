#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stclust/cluster.hpp"
#include "stclust/constraints.hpp"
#include "stclust/dhae.hpp"

namespace stclust {

enum class KMode { estimated, oracle };

struct TrackerConfig {
    /// Window T^t = {t - t_lag, ..., t}.
    int t_lag = 3;
    /// Cluster score threshold on mean member confidence.
    double lambda = 0.5;
    /// Detections below this confidence are dropped before windowing.
    double det_threshold = 0.70;
    ConstraintConfig constraints;
    /// False runs plain kmeans without the constraint graph.
    bool use_graph = true;
    KMode k_mode = KMode::estimated;
    KmeansOptions kmeans;
    /// At the final window, pending tentative clusters are confirmed since
    /// no later frame can refute them.
    bool flush_pending_at_end = true;

    void validate() const;
};

/// Committed identities, keyed by (frame, detection index in that frame).
class IdentityStore {
public:
    std::optional<int> identity_of(int frame, int det_index) const;
    /// Writes a new identity. Rewriting an existing entry with a different
    /// identity, or reusing an identity within one frame, throws
    /// InvariantError.
    void commit(int frame, int det_index, int identity);
    bool frame_has(int frame, int identity) const;
    int mint() { return next_id_++; }

    int next_id() const { return next_id_; }
    const std::map<std::pair<int, int>, int>& committed() const { return committed_; }
    const std::map<int, int>& last_seen() const { return last_seen_; }

private:
    int next_id_ = 0;
    std::map<std::pair<int, int>, int> committed_;
    std::map<int, std::map<int, int>> by_frame_;  // frame -> identity -> det index
    std::map<int, int> last_seen_;
};

/// Returns the true number of objects in frames [first, last] (oracle-K).
using KOracle = std::function<int(int first_frame, int last_frame)>;

struct TrackStats {
    int windows = 0;
    int spawned = 0;
    int discarded = 0;
    int filtered_detections = 0;
    int label_conflicts = 0;  // clusters holding several identities (graph-free runs only)
};

struct TrackOutput {
    /// Input frames; detections carry their committed identity, or none.
    std::vector<Frame> frames;
    IdentityStore store;
    TrackStats stats;
};

/// Frames of window T^t, truncated at the first frame during warm-up.
std::pair<int, int> window_range(int t, int first_frame, int t_lag);

TrackOutput track(const std::vector<Frame>& sequence, const DhaeParams& model, int frame_w, int frame_h,
                  const TrackerConfig& cfg, const KOracle& oracle = {});

/// Embedding input for one detection: appearance masks are built from the
/// frame image when the model expects three channels.
std::vector<double> embed_detection(const DhaeParams& model, const Detection& det, const Frame& frame,
                                    int frame_w, int frame_h);

/// Quantile of embedding distances between consecutive detections of the
/// same ground-truth track (used as embed_dist_max).
double calibrate_embed_dist_max(const DhaeParams& model, const std::vector<std::vector<Frame>>& sequences,
                                int frame_w, int frame_h, double quantile);

}  // namespace stclust
