#include "stclust/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace stclust {

void TrackerConfig::validate() const {
    if (t_lag < 1) throw Error("tracker: t_lag must be >= 1");
    if (lambda < 0.0 || lambda > 1.0) throw Error("tracker: lambda must be in [0,1]");
    if (det_threshold < 0.0 || det_threshold > 1.0) throw Error("tracker: det_threshold must be in [0,1]");
    if (use_graph) constraints.validate();
}

std::optional<int> IdentityStore::identity_of(int frame, int det_index) const {
    const auto it = committed_.find({frame, det_index});
    if (it == committed_.end()) return std::nullopt;
    return it->second;
}

bool IdentityStore::frame_has(int frame, int identity) const {
    const auto it = by_frame_.find(frame);
    return it != by_frame_.end() && it->second.count(identity) > 0;
}

void IdentityStore::commit(int frame, int det_index, int identity) {
    const auto key = std::make_pair(frame, det_index);
    const auto it = committed_.find(key);
    if (it != committed_.end()) {
        if (it->second != identity)
            throw InvariantError("identity store: detection (" + std::to_string(frame) + ", " +
                                 std::to_string(det_index) + ") already holds identity " +
                                 std::to_string(it->second));
        return;
    }
    auto& in_frame = by_frame_[frame];
    if (in_frame.count(identity))
        throw InvariantError("identity store: identity " + std::to_string(identity) + " reused in frame " +
                             std::to_string(frame));
    in_frame[identity] = det_index;
    committed_[key] = identity;
    auto& last = last_seen_[identity];
    last = std::max(last, frame);
}

std::pair<int, int> window_range(int t, int first_frame, int t_lag) {
    return {std::max(first_frame, t - t_lag), t};
}

std::vector<double> embed_detection(const DhaeParams& model, const Detection& det, const Frame& frame,
                                    int frame_w, int frame_h) {
    if (model.config().uses_mask() && model.config().channels == 3 && det.mask.channels() == 1) {
        if (!frame.image) throw Error("embed: appearance model needs frame images");
        Detection app = det;
        app.mask = appearance_mask(det.mask, *frame.image);
        return embed(model, app, frame_w, frame_h);
    }
    return embed(model, det, frame_w, frame_h);
}

namespace {

struct NodeRef {
    int frame_pos = 0;  // position in the sequence vector
    int det_index = 0;  // index in the original frame
};

double sq_dist(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s;
}

/// Extends or trims the anchor centroids to exactly k (oracle-K mode):
/// extra centroids come from the window node farthest from the current set.
InitialCentroids resize_centroids(InitialCentroids init, std::size_t k, const std::vector<Embedding>& all) {
    if (init.centroids.size() > k) {
        init.centroids.resize(k);
        init.labels.resize(k);
    }
    while (init.centroids.size() < k && init.centroids.size() < all.size()) {
        double best = -1.0;
        std::size_t pick = 0;
        for (std::size_t i = 0; i < all.size(); ++i) {
            double d = std::numeric_limits<double>::infinity();
            for (const auto& c : init.centroids) d = std::min(d, sq_dist(all[i], c));
            if (d > best) {
                best = d;
                pick = i;
            }
        }
        init.centroids.push_back(all[pick]);
        init.labels.push_back(std::nullopt);
    }
    return init;
}

}  // namespace

TrackOutput track(const std::vector<Frame>& sequence, const DhaeParams& model, int frame_w, int frame_h,
                  const TrackerConfig& cfg, const KOracle& oracle) {
    cfg.validate();
    if (cfg.k_mode == KMode::oracle && !oracle) throw Error("track: oracle K mode needs a K oracle");
    for (std::size_t i = 1; i < sequence.size(); ++i)
        if (sequence[i].index <= sequence[i - 1].index) throw Error("track: frames must be in ascending order");

    TrackOutput out;
    out.frames = sequence;
    // Working copies: drop identities carried by the input, keep only
    // detections above the detection threshold.
    std::vector<std::vector<int>> kept(sequence.size());
    for (std::size_t f = 0; f < out.frames.size(); ++f) {
        auto& dets = out.frames[f].detections;
        for (std::size_t i = 0; i < dets.size(); ++i) {
            dets[i].label.reset();
            if (dets[i].confidence >= cfg.det_threshold)
                kept[f].push_back(static_cast<int>(i));
            else
                ++out.stats.filtered_detections;
        }
    }

    std::vector<std::vector<std::optional<Embedding>>> cache(sequence.size());
    for (std::size_t f = 0; f < sequence.size(); ++f) cache[f].resize(sequence[f].detections.size());
    auto embedding_of = [&](const NodeRef& r) -> const Embedding& {
        auto& slot = cache[r.frame_pos][r.det_index];
        if (!slot) {
            const Frame& fr = out.frames[r.frame_pos];
            slot = embed_detection(model, fr.detections[r.det_index], fr, frame_w, frame_h);
        }
        return *slot;
    };

    IdentityStore& store = out.store;
    const int nframes = static_cast<int>(sequence.size());
    for (int t = 0; t < nframes; ++t) {
        const auto [first, last] = window_range(t, 0, cfg.t_lag);
        std::vector<NodeRef> refs;
        std::vector<int> counts;
        for (int f = first; f <= last; ++f) {
            counts.push_back(static_cast<int>(kept[f].size()));
            for (int i : kept[f]) refs.push_back({f, i});
        }
        if (refs.empty()) continue;
        ++out.stats.windows;

        std::vector<const Detection*> nodes;
        std::vector<Embedding> z;
        for (const auto& r : refs) {
            nodes.push_back(&out.frames[r.frame_pos].detections[r.det_index]);
            z.push_back(embedding_of(r));
        }

        const ConstraintGraph graph =
            cfg.use_graph ? build_graph(nodes, z, cfg.constraints) : unconstrained_graph(nodes);

        const KEstimate est = estimate_k(counts);
        std::vector<Embedding> anchor_z;
        std::vector<std::optional<int>> anchor_labels;
        std::size_t pos = 0;
        for (int f = first; f < first + est.anchor; ++f) pos += kept[f].size();
        for (std::size_t k = 0; k < kept[first + est.anchor].size(); ++k, ++pos) {
            anchor_z.push_back(z[pos]);
            anchor_labels.push_back(nodes[pos]->label);
        }
        InitialCentroids init = init_centroids(anchor_z, anchor_labels);
        if (cfg.k_mode == KMode::oracle) {
            const int k = std::max(1, oracle(sequence[first].index, sequence[last].index));
            init = resize_centroids(std::move(init), static_cast<std::size_t>(k), z);
        }

        ClusterResult result = cop_kmeans(z, graph, init, cfg.kmeans);
        out.stats.spawned += static_cast<int>(std::count(result.tentative.begin(), result.tentative.end(), true));

        // Clusters without any committed identity must earn one through the
        // tentative lifecycle, whether or not they were spawned.
        for (std::size_t c = 0; c < result.size(); ++c) {
            const bool has_label = std::any_of(result.clusters[c].begin(), result.clusters[c].end(),
                                               [&](int i) { return nodes[i]->label.has_value(); });
            if (!has_label) result.tentative[c] = true;
        }
        const std::size_t before = result.size();
        result = confirm_or_discard(result, t, cfg.t_lag);
        out.stats.discarded += static_cast<int>(before - result.size());
        if (t == nframes - 1 && cfg.flush_pending_at_end) std::fill(result.tentative.begin(), result.tentative.end(), false);

        for (int c : score_filter(result, cfg.lambda)) {
            if (result.tentative[c]) continue;
            const auto& members = result.clusters[c];

            std::map<int, int> votes;
            for (int i : members)
                if (nodes[i]->label) ++votes[*nodes[i]->label];
            int identity = -1;
            if (votes.empty()) {
                identity = store.mint();
            } else if (votes.size() == 1) {
                identity = votes.begin()->first;
            } else {
                if (cfg.use_graph) {
                    std::ostringstream msg;
                    msg << "track: window [" << sequence[first].index << ", " << sequence[last].index
                        << "] cluster " << c << " holds identities";
                    for (const auto& [id, n] : votes) msg << ' ' << id << "(x" << n << ")";
                    throw InvariantError(msg.str());
                }
                ++out.stats.label_conflicts;
                int best = -1;
                for (const auto& [id, n] : votes)
                    if (n > best) {
                        best = n;
                        identity = id;
                    }
            }

            // One uncommitted member per frame, the one closest to the centroid.
            std::map<int, int> pick;  // frame_pos -> node
            for (int i : members) {
                if (nodes[i]->label) continue;
                const int fp = refs[i].frame_pos;
                auto it = pick.find(fp);
                if (it == pick.end() ||
                    sq_dist(z[i], result.centroids[c]) < sq_dist(z[it->second], result.centroids[c]))
                    pick[fp] = i;
            }
            for (const auto& [fp, i] : pick) {
                const int frame_index = sequence[fp].index;
                if (store.frame_has(frame_index, identity)) continue;
                store.commit(frame_index, refs[i].det_index, identity);
                out.frames[fp].detections[refs[i].det_index].label = identity;
            }
        }
    }
    return out;
}

double calibrate_embed_dist_max(const DhaeParams& model, const std::vector<std::vector<Frame>>& sequences,
                                int frame_w, int frame_h, double quantile) {
    if (quantile < 0.0 || quantile > 1.0) throw Error("calibrate: quantile must be in [0,1]");
    std::vector<double> dists;
    for (const auto& seq : sequences) {
        std::map<int, std::pair<int, Embedding>> prev;  // label -> (frame, embedding)
        for (const Frame& f : seq) {
            for (const Detection& d : f.detections) {
                if (!d.label) continue;
                Embedding e = embed_detection(model, d, f, frame_w, frame_h);
                auto it = prev.find(*d.label);
                if (it != prev.end() && it->second.first == f.index - 1)
                    dists.push_back(std::sqrt(sq_dist(it->second.second, e)));
                prev[*d.label] = {f.index, std::move(e)};
            }
        }
    }
    if (dists.empty()) throw Error("calibrate: no consecutive same-track pairs found");
    std::sort(dists.begin(), dists.end());
    const double pos = quantile * static_cast<double>(dists.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(dists.size() - 1, lo + 1);
    return dists[lo] + (pos - static_cast<double>(lo)) * (dists[hi] - dists[lo]);
}

}  // namespace stclust
