#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stclust/dhae.hpp"
#include "stclust/io.hpp"
#include "stclust/metrics.hpp"
#include "stclust/tracker.hpp"

namespace stclust {

/// Ablation variants: which embedding branches feed the tracker and whether
/// the constraint graph is used.
enum class Variant { loc, shape, loc_shape, loc_G, loc_shape_G };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
std::vector<Variant> all_variants();

Branches variant_branches(Variant v);
bool variant_uses_graph(Variant v);

/// Autoencoder samples from every detection of the given sequences,
/// subsampled without replacement to at most max_samples (0 = all).
std::vector<Sample> build_training_set(const std::vector<SequenceData>& seqs, const DhaeConfig& cfg,
                                       std::size_t max_samples, std::uint64_t seed);

/// Fills in embed_dist_max when embedding-distance constraints are
/// requested without an explicit bound.
TrackerConfig prepare_tracker_config(TrackerConfig cfg, const DhaeParams& model,
                                     const std::vector<SequenceData>& calibration, double quantile);

/// Number of distinct ground-truth identities in frames [first, last].
KOracle gt_k_oracle(const SequenceData& gt);

/// Tracks one labelled sequence (labels are ignored by the tracker) and
/// scores the output against those labels.
MetricsReport ablation_run(const SequenceData& seq, Variant v, const DhaeParams& model, const TrackerConfig& base,
                           const MatchOptions& match = {});

struct AblationCell {
    Variant variant = Variant::loc_shape_G;
    bool mtl = true;
    int t_lag = 3;
    KMode k_mode = KMode::estimated;
    MetricsReport report;
};

/// Trained models keyed by variant branch layout and multi-task setting.
struct ModelBank {
    std::map<std::pair<Branches, bool>, DhaeParams> models;
    const DhaeParams& get(Branches b, bool mtl) const;
};

struct AblationGrid {
    std::vector<Variant> variants = all_variants();
    std::vector<int> t_lags{3, 5, 8};
    std::vector<KMode> k_modes{KMode::estimated, KMode::oracle};
    std::vector<bool> mtl{true};
};

std::vector<AblationCell> run_ablation(const std::vector<SequenceData>& eval, const std::vector<SequenceData>& calib,
                                       const ModelBank& bank, const AblationGrid& grid, const TrackerConfig& base,
                                       double calib_quantile, const MatchOptions& match = {});

std::string format_ablation(const std::vector<AblationCell>& cells);

}  // namespace stclust
