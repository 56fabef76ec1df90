#include "stclust/pipeline.hpp"

#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "stclust/random.hpp"

namespace stclust {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::loc: return "loc";
        case Variant::shape: return "shape";
        case Variant::loc_shape: return "loc+shape";
        case Variant::loc_G: return "loc+G";
        case Variant::loc_shape_G: return "loc+shape+G";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    for (Variant v : all_variants())
        if (to_string(v) == s) return v;
    throw Error("unknown variant '" + s + "' (expected loc|shape|loc+shape|loc+G|loc+shape+G)");
}

std::vector<Variant> all_variants() {
    return {Variant::loc, Variant::shape, Variant::loc_shape, Variant::loc_G, Variant::loc_shape_G};
}

Branches variant_branches(Variant v) {
    switch (v) {
        case Variant::loc:
        case Variant::loc_G: return Branches::box_only;
        case Variant::shape: return Branches::mask_only;
        default: return Branches::both;
    }
}

bool variant_uses_graph(Variant v) { return v == Variant::loc_G || v == Variant::loc_shape_G; }

std::vector<Sample> build_training_set(const std::vector<SequenceData>& seqs, const DhaeConfig& cfg,
                                       std::size_t max_samples, std::uint64_t seed) {
    std::vector<std::pair<std::size_t, const Detection*>> all;
    std::vector<const Frame*> owner;
    for (std::size_t s = 0; s < seqs.size(); ++s)
        for (const Frame& f : seqs[s].frames)
            for (const Detection& d : f.detections) {
                all.emplace_back(s, &d);
                owner.push_back(&f);
            }
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_samples > 0 && idx.size() > max_samples) {
        Rng rng(derive_seed(seed, "train-subsample"));
        rng.shuffle(idx.begin(), idx.end());
        idx.resize(max_samples);
        std::sort(idx.begin(), idx.end());
    }
    std::vector<Sample> out;
    out.reserve(idx.size());
    for (std::size_t k : idx) {
        const auto& [s, det] = all[k];
        Detection d = *det;
        if (cfg.channels == 3) {
            if (!owner[k]->image) throw Error("build_training_set: appearance model needs frame images");
            d.mask = appearance_mask(d.mask, *owner[k]->image);
        }
        out.push_back(make_sample(d, cfg, seqs[s].frame_w, seqs[s].frame_h));
    }
    return out;
}

TrackerConfig prepare_tracker_config(TrackerConfig cfg, const DhaeParams& model,
                                     const std::vector<SequenceData>& calibration, double quantile) {
    if (cfg.constraints.mode != ConstraintMode::embedding_distance || cfg.constraints.embed_dist_max > 0.0)
        return cfg;
    if (calibration.empty()) throw Error("embedding-distance constraints need calibration sequences");
    std::vector<std::vector<Frame>> seqs;
    for (const auto& s : calibration) seqs.push_back(s.frames);
    cfg.constraints.embed_dist_max =
        calibrate_embed_dist_max(model, seqs, calibration.front().frame_w, calibration.front().frame_h, quantile);
    return cfg;
}

KOracle gt_k_oracle(const SequenceData& gt) {
    std::map<int, std::set<int>> ids;
    for (const Frame& f : gt.frames)
        for (const Detection& d : f.detections)
            if (d.label) ids[f.index].insert(*d.label);
    return [ids = std::move(ids)](int first, int last) {
        std::set<int> u;
        for (auto it = ids.lower_bound(first); it != ids.end() && it->first <= last; ++it)
            u.insert(it->second.begin(), it->second.end());
        return static_cast<int>(u.size());
    };
}

MetricsReport ablation_run(const SequenceData& seq, Variant v, const DhaeParams& model, const TrackerConfig& base,
                           const MatchOptions& match) {
    if (model.config().branches != variant_branches(v))
        throw Error("ablation_run: model branches " + to_string(model.config().branches) + " do not fit variant " +
                    to_string(v));
    TrackerConfig cfg = base;
    cfg.use_graph = variant_uses_graph(v);
    const KOracle oracle = cfg.k_mode == KMode::oracle ? gt_k_oracle(seq) : KOracle{};
    const TrackOutput out = track(seq.frames, model, seq.frame_w, seq.frame_h, cfg, oracle);
    return evaluate(seq.frames, out.frames, match);
}

const DhaeParams& ModelBank::get(Branches b, bool mtl) const {
    const auto it = models.find({b, mtl});
    if (it == models.end())
        throw Error("no trained model for branches " + to_string(b) + (mtl ? "" : " without multi-task weighting"));
    return it->second;
}

std::vector<AblationCell> run_ablation(const std::vector<SequenceData>& eval, const std::vector<SequenceData>& calib,
                                       const ModelBank& bank, const AblationGrid& grid, const TrackerConfig& base,
                                       double calib_quantile, const MatchOptions& match) {
    std::vector<AblationCell> cells;
    for (bool mtl : grid.mtl)
        for (Variant v : grid.variants) {
            const DhaeParams& model = bank.get(variant_branches(v), mtl);
            const TrackerConfig prepared = prepare_tracker_config(base, model, calib, calib_quantile);
            for (int t_lag : grid.t_lags)
                for (KMode k : grid.k_modes) {
                    TrackerConfig cfg = prepared;
                    cfg.t_lag = t_lag;
                    cfg.k_mode = k;
                    cfg.use_graph = variant_uses_graph(v);
                    std::vector<std::vector<Frame>> hyps;
                    hyps.reserve(eval.size());
                    for (const SequenceData& s : eval) {
                        const KOracle oracle = k == KMode::oracle ? gt_k_oracle(s) : KOracle{};
                        hyps.push_back(track(s.frames, model, s.frame_w, s.frame_h, cfg, oracle).frames);
                    }
                    std::vector<NamedRun> runs;
                    for (std::size_t i = 0; i < eval.size(); ++i)
                        runs.push_back({"seq" + std::to_string(i), &eval[i].frames, &hyps[i]});
                    cells.push_back({v, mtl, t_lag, k, evaluate_many(runs, match)});
                }
        }
    return cells;
}

std::string format_ablation(const std::vector<AblationCell>& cells) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-12s %4s %5s %-9s %7s %7s %7s %7s %5s %5s %6s %6s\n", "variant", "MTL", "t_lag",
                  "K", "MOTA", "MOTSA", "sMOTSA", "IDF1", "IDs", "Frag", "FN", "FP");
    os << buf;
    for (const auto& c : cells) {
        const auto& r = c.report;
        std::snprintf(buf, sizeof buf, "%-12s %4s %5d %-9s %7.2f %7.2f %7.2f %7.2f %5d %5d %6d %6d\n",
                      to_string(c.variant).c_str(), c.mtl ? "yes" : "no", c.t_lag,
                      c.k_mode == KMode::estimated ? "estimated" : "oracle", 100 * r.MOTA, 100 * r.MOTSA,
                      100 * r.sMOTSA, 100 * r.IDF1, r.IDs, r.Frag, r.FN, r.FP);
        os << buf;
    }
    return os.str();
}

}  // namespace stclust
