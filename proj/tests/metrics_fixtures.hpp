#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

#include "stclust/core.hpp"
#include "stclust/random.hpp"

namespace stclust::testing {

inline Detection block(int frame, int x0, int y0, int w, int h, std::optional<int> label, int fw = 32,
                       int fh = 32) {
    Detection d;
    d.frame = frame;
    d.mask = Mask(fw, fh);
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) d.mask.at(x, y) = 1.0f;
    d.box = support_box(d.mask);
    d.label = label;
    return d;
}

/// Two ground-truth tracks over three frames. The hypothesis misses track
/// 2 in frame 1 and picks it up again under a new identity in frame 2:
/// one miss and one identity switch over six ground-truth detections.
struct HandScenario {
    std::vector<Frame> gt;
    std::vector<Frame> hyp;
};

inline HandScenario hand_scenario() {
    HandScenario s;
    for (int t = 0; t < 3; ++t) {
        Frame g, h;
        g.index = h.index = t;
        g.detections.push_back(block(t, 2 + t, 2, 6, 6, 1));
        g.detections.push_back(block(t, 20, 20 - t, 6, 6, 2));
        h.detections.push_back(block(t, 2 + t, 2, 6, 6, 10));
        if (t == 0) h.detections.push_back(block(t, 20, 20, 6, 6, 11));
        if (t == 2) h.detections.push_back(block(t, 20, 18, 6, 6, 12));
        s.gt.push_back(g);
        s.hyp.push_back(h);
    }
    return s;
}

inline double brute_force_assignment(const std::vector<std::vector<double>>& c) {
    const std::size_t n = c.size();
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += c[i][perm[i]];
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline std::vector<std::vector<double>> random_matrix(Rng& rng, int n) {
    std::vector<std::vector<double>> c(n, std::vector<double>(n));
    for (auto& row : c)
        for (double& v : row) v = static_cast<double>(rng.below(100));
    return c;
}

}  // namespace stclust::testing
