#include "stclust/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace stclust {

double box_iou(const BBox& a, const BBox& b) {
    const double ix = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2));
    const double iy = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2));
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

double overlap(const Detection& g, const Detection& h, bool by_box) {
    return by_box ? box_iou(g.box, h.box) : mask_iou(g.mask, h.mask);
}

std::vector<int> labelled(const std::vector<Detection>& dets) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < dets.size(); ++i)
        if (dets[i].label) idx.push_back(static_cast<int>(i));
    return idx;
}

void finalize(MetricsReport& r) {
    const double gt = std::max(1, r.num_gt);
    r.MOTA = 1.0 - (r.FN + r.FP + r.IDs) / gt;
    r.MOTSA = 1.0 - (r.mask_FN + r.mask_FP + r.mask_IDs) / gt;
    r.sMOTSA = (r.soft_TP - r.mask_FP - r.mask_IDs) / gt;
    r.MOTSP = r.mask_TP > 0 ? r.soft_TP / r.mask_TP : 0.0;
    const int denom = r.num_gt + r.num_hyp;
    r.IDF1 = denom > 0 ? 2.0 * r.IDTP / denom : 1.0;
}

}  // namespace

FrameEvents match_frame(const std::vector<Detection>& gt, const std::vector<Detection>& hyp, MatchState& state,
                        const MatchOptions& opt) {
    const std::vector<int> gi = labelled(gt);
    const std::vector<int> hi = labelled(hyp);
    std::vector<std::vector<double>> iou(gi.size(), std::vector<double>(hi.size(), 0.0));
    for (std::size_t a = 0; a < gi.size(); ++a)
        for (std::size_t b = 0; b < hi.size(); ++b) iou[a][b] = overlap(gt[gi[a]], hyp[hi[b]], opt.match_by_box);

    std::vector<int> gmatch(gi.size(), -1), hmatch(hi.size(), -1);
    // Continuity with the last correspondence.
    for (std::size_t a = 0; a < gi.size(); ++a) {
        const auto it = state.last_hyp.find(*gt[gi[a]].label);
        if (it == state.last_hyp.end() || !state.tracked_last[it->first]) continue;
        for (std::size_t b = 0; b < hi.size(); ++b) {
            if (*hyp[hi[b]].label != it->second || hmatch[b] >= 0) continue;
            if (iou[a][b] >= opt.iou_threshold) {
                gmatch[a] = static_cast<int>(b);
                hmatch[b] = static_cast<int>(a);
            }
            break;
        }
    }

    std::vector<int> ra, rb;
    for (std::size_t a = 0; a < gi.size(); ++a)
        if (gmatch[a] < 0) ra.push_back(static_cast<int>(a));
    for (std::size_t b = 0; b < hi.size(); ++b)
        if (hmatch[b] < 0) rb.push_back(static_cast<int>(b));
    if (!ra.empty() && !rb.empty()) {
        std::vector<std::vector<double>> cost(ra.size(), std::vector<double>(rb.size()));
        for (std::size_t x = 0; x < ra.size(); ++x)
            for (std::size_t y = 0; y < rb.size(); ++y) {
                const double v = iou[ra[x]][rb[y]];
                cost[x][y] = v >= opt.iou_threshold ? 1.0 - v : 2.0;
            }
        const std::vector<int> asg = hungarian(cost);
        for (std::size_t x = 0; x < ra.size(); ++x) {
            if (asg[x] < 0 || cost[x][asg[x]] > 1.0) continue;
            gmatch[ra[x]] = rb[asg[x]];
            hmatch[rb[asg[x]]] = ra[x];
        }
    }

    FrameEvents ev;
    for (std::size_t a = 0; a < gi.size(); ++a) {
        const int gid = *gt[gi[a]].label;
        if (gmatch[a] < 0) {
            ev.misses.push_back(gi[a]);
            if (state.last_hyp.count(gid)) state.tracked_last[gid] = false;
            continue;
        }
        const int hid = *hyp[hi[gmatch[a]]].label;
        ev.matches.push_back({gi[a], hi[gmatch[a]]});
        const auto it = state.last_hyp.find(gid);
        if (it != state.last_hyp.end()) {
            if (it->second != hid) ev.switches.push_back(gi[a]);
            if (!state.tracked_last[gid]) ev.fragmentations.push_back(gi[a]);
        }
        state.last_hyp[gid] = hid;
        state.tracked_last[gid] = true;
    }
    for (std::size_t b = 0; b < hi.size(); ++b)
        if (hmatch[b] < 0) ev.false_positives.push_back(hi[b]);
    return ev;
}

MetricsReport evaluate(const std::vector<Frame>& gt, const std::vector<Frame>& hyp, const MatchOptions& opt) {
    std::map<int, const Frame*> hyp_by_index;
    for (const Frame& f : hyp) {
        if (!hyp_by_index.emplace(f.index, &f).second)
            throw Error("evaluate: duplicate hypothesis frame " + std::to_string(f.index));
    }
    std::set<int> gt_indices;
    for (const Frame& f : gt) gt_indices.insert(f.index);
    for (const auto& [idx, f] : hyp_by_index)
        if (!gt_indices.count(idx))
            throw Error("evaluate: hypothesis frame " + std::to_string(idx) + " has no ground-truth frame");

    MatchOptions mask_opt = opt;
    mask_opt.match_by_box = false;
    MatchState clear_state, mask_state;
    MetricsReport r;
    std::map<int, int> present, covered;               // per gt identity
    std::map<std::pair<int, int>, int> co_occurrence;  // (gt id, hyp id) -> frames
    std::set<int> gt_ids, hyp_ids;
    const std::vector<Detection> empty;

    for (const Frame& gf : gt) {
        const auto it = hyp_by_index.find(gf.index);
        const std::vector<Detection>& hd = it == hyp_by_index.end() ? empty : it->second->detections;
        const std::vector<Detection>& gd = gf.detections;
        for (const Detection& d : gd)
            if (d.label) {
                ++r.num_gt;
                ++present[*d.label];
                gt_ids.insert(*d.label);
            }
        for (const Detection& d : hd)
            if (d.label) {
                ++r.num_hyp;
                hyp_ids.insert(*d.label);
            }

        const FrameEvents ce = match_frame(gd, hd, clear_state, opt);
        r.TP += static_cast<int>(ce.matches.size());
        r.FN += static_cast<int>(ce.misses.size());
        r.FP += static_cast<int>(ce.false_positives.size());
        r.IDs += static_cast<int>(ce.switches.size());
        r.Frag += static_cast<int>(ce.fragmentations.size());
        for (const auto& [g, h] : ce.matches) ++covered[*gd[g].label];

        const FrameEvents me = match_frame(gd, hd, mask_state, mask_opt);
        r.mask_TP += static_cast<int>(me.matches.size());
        r.mask_FN += static_cast<int>(me.misses.size());
        r.mask_FP += static_cast<int>(me.false_positives.size());
        r.mask_IDs += static_cast<int>(me.switches.size());
        for (const auto& [g, h] : me.matches) r.soft_TP += mask_iou(gd[g].mask, hd[h].mask);

        for (const Detection& g : gd) {
            if (!g.label) continue;
            for (const Detection& h : hd)
                if (h.label && overlap(g, h, opt.match_by_box) >= opt.iou_threshold)
                    ++co_occurrence[{*g.label, *h.label}];
        }
    }

    r.num_gt_tracks = static_cast<int>(gt_ids.size());
    for (const auto& [id, n] : present) {
        const double cov = static_cast<double>(covered[id]) / n;
        if (cov >= 0.8) ++r.MT;
        if (cov <= 0.2) ++r.ML_tracks;
    }

    if (!gt_ids.empty() && !hyp_ids.empty()) {
        const std::vector<int> gv(gt_ids.begin(), gt_ids.end()), hv(hyp_ids.begin(), hyp_ids.end());
        std::vector<std::vector<double>> cost(gv.size(), std::vector<double>(hv.size(), 0.0));
        for (const auto& [key, n] : co_occurrence) {
            const auto gpos = std::lower_bound(gv.begin(), gv.end(), key.first) - gv.begin();
            const auto hpos = std::lower_bound(hv.begin(), hv.end(), key.second) - hv.begin();
            cost[gpos][hpos] = -static_cast<double>(n);
        }
        const std::vector<int> asg = hungarian(cost);
        for (std::size_t g = 0; g < asg.size(); ++g)
            if (asg[g] >= 0) r.IDTP += static_cast<int>(-cost[g][asg[g]]);
    }
    finalize(r);
    return r;
}

MetricsReport evaluate_many(const std::vector<NamedRun>& runs, const MatchOptions& opt) {
    MetricsReport total;
    for (const NamedRun& run : runs) {
        if (!run.gt || !run.hyp) throw Error("evaluate_many: run '" + run.name + "' is missing a sequence");
        MetricsReport r = evaluate(*run.gt, *run.hyp, opt);
        total.MT += r.MT;
        total.ML_tracks += r.ML_tracks;
        total.IDs += r.IDs;
        total.Frag += r.Frag;
        total.FN += r.FN;
        total.FP += r.FP;
        total.TP += r.TP;
        total.num_gt += r.num_gt;
        total.num_gt_tracks += r.num_gt_tracks;
        total.mask_TP += r.mask_TP;
        total.mask_FP += r.mask_FP;
        total.mask_FN += r.mask_FN;
        total.mask_IDs += r.mask_IDs;
        total.soft_TP += r.soft_TP;
        total.IDTP += r.IDTP;
        total.num_hyp += r.num_hyp;
        total.per_sequence.emplace_back(run.name, std::move(r));
    }
    finalize(total);
    return total;
}

std::string format_key_values(const MetricsReport& r) {
    std::ostringstream os;
    char buf[64];
    auto real = [&](const char* k, double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        os << k << '=' << buf << '\n';
    };
    real("MOTA", r.MOTA);
    real("MOTSA", r.MOTSA);
    real("sMOTSA", r.sMOTSA);
    real("MOTSP", r.MOTSP);
    real("IDF1", r.IDF1);
    os << "MT=" << r.MT << "\nML=" << r.ML_tracks << "\nIDs=" << r.IDs << "\nFrag=" << r.Frag << "\nFN=" << r.FN
       << "\nFP=" << r.FP << "\nTP=" << r.TP << "\nGT=" << r.num_gt << "\nGT_tracks=" << r.num_gt_tracks << '\n';
    return os.str();
}

std::string format_table(const MetricsReport& r) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-12s %7s %7s %7s %7s %7s %5s %5s %5s %5s %6s %6s %6s\n", "sequence", "MOTA",
                  "MOTSA", "sMOTSA", "MOTSP", "IDF1", "MT", "ML", "IDs", "Frag", "FN", "FP", "TP");
    os << buf;
    auto row = [&](const std::string& name, const MetricsReport& m) {
        std::snprintf(buf, sizeof buf, "%-12s %7.2f %7.2f %7.2f %7.2f %7.2f %5d %5d %5d %5d %6d %6d %6d\n",
                      name.c_str(), 100 * m.MOTA, 100 * m.MOTSA, 100 * m.sMOTSA, 100 * m.MOTSP, 100 * m.IDF1, m.MT,
                      m.ML_tracks, m.IDs, m.Frag, m.FN, m.FP, m.TP);
        os << buf;
    };
    for (const auto& [name, m] : r.per_sequence) row(name, m);
    row(r.per_sequence.empty() ? "all" : "combined", r);
    return os.str();
}

}  // namespace stclust
