#include <cmath>
#include <numeric>
#include <sstream>

#include "stclust/dhae.hpp"
#include "stclust/random.hpp"

namespace stclust {

TrainResult train(std::span<const Sample> data, const DhaeConfig& cfg, const TrainOptions& opt) {
    if (data.empty()) throw Error("train: empty dataset");
    if (opt.epochs < 0 || opt.batch_size < 1) throw Error("train: epochs >= 0 and batch_size >= 1 required");
    cfg.validate();

    TrainResult res;
    res.params = glorot_init(cfg, derive_seed(opt.seed, "dhae-init"));
    AdadeltaState state(res.params.values().size(), opt.rho, opt.eps);
    Rng rng(derive_seed(opt.seed, "dhae-train"));

    res.initial_loss = loss(res.params, data);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Sample> inputs, targets;

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(order.size(), start + opt.batch_size);
            inputs.clear();
            targets.clear();
            for (std::size_t k = start; k < end; ++k) {
                inputs.push_back(data[order[k]]);
                Sample t = data[order[k]];
                if (opt.box_target_noise > 0.0)
                    for (double& v : t.box) v += rng.normal(0.0, opt.box_target_noise);
                targets.push_back(std::move(t));
            }
            double batch_loss = 0.0;
            const DhaeParams g = backward_with_loss(res.params, inputs, targets, opt.threads, &batch_loss);
            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "train: loss diverged at epoch " << epoch << ", batch " << batches
                    << " (s_m=" << res.params.s_m() << ", s_b=" << res.params.s_b() << ")";
                throw Error(msg.str());
            }
            adadelta_step(state, res.params, g);
            epoch_loss += batch_loss;
            ++batches;
        }
        res.loss_history.push_back(epoch_loss / static_cast<double>(batches));
        if (opt.on_epoch) opt.on_epoch(epoch, res.loss_history.back(), res.params);
    }
    res.final_loss = loss(res.params, data);
    return res;
}

Sample make_sample(const Detection& det, const DhaeConfig& cfg, int frame_w, int frame_h) {
    Sample s;
    if (cfg.uses_mask()) {
        if (det.mask.channels() != cfg.channels)
            throw Error("make_sample: detection mask channels do not match the model");
        s.mask = preprocess_mask(crop_to_support(det.mask), cfg.mask_size);
    }
    if (cfg.uses_box()) {
        const auto b = normalize_box(det.box, frame_w, frame_h);
        s.box.assign(b.begin(), b.end());
    }
    return s;
}

std::vector<double> embed(const DhaeParams& p, const Detection& det, int frame_w, int frame_h) {
    const Sample s = make_sample(det, p.config(), frame_w, frame_h);
    return encode(p, s.mask, s.box).z;
}

}  // namespace stclust
