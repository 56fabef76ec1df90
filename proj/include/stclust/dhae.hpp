#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stclust/core.hpp"

namespace stclust {

/// Which reconstruction heads the autoencoder carries. Single-branch models
/// exist for the loc-only and shape-only ablations.
enum class Branches { both, box_only, mask_only };

std::string to_string(Branches b);
Branches branches_from_string(const std::string& s);

struct DhaeConfig {
    int mask_size = 32;  // M
    int channels = 1;    // D
    int box_dims = 4;    // N
    int latent = 32;     // F
    std::vector<int> conv_channels{16, 16, 32, 32, 64};
    int box_hidden = 32;
    Branches branches = Branches::both;
    /// When false, s_m = s_b = 0 stay frozen (equal-weight loss).
    bool learn_uncertainty = true;

    bool uses_mask() const { return branches != Branches::box_only; }
    bool uses_box() const { return branches != Branches::mask_only; }
    /// Spatial side of the deepest conv feature map.
    int bottom_size() const;
    int fused_width() const { return (uses_mask() ? latent : 0) + (uses_box() ? latent : 0); }

    void validate() const;
    bool operator==(const DhaeConfig&) const = default;
};

/// Named contiguous slice of the flat parameter vector.
struct TensorSlot {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    int fan_in = 0;
    int fan_out = 0;
    bool bias = false;
};

/// All weights and biases in declaration order, followed by the two
/// log-variances s_m = log sigma_m^2 and s_b = log sigma_b^2. The same type
/// doubles as the gradient container.
class DhaeParams {
public:
    DhaeParams() = default;
    explicit DhaeParams(DhaeConfig cfg);

    const DhaeConfig& config() const { return config_; }
    const std::vector<TensorSlot>& layout() const { return layout_; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    std::span<double> tensor(const std::string& name);
    std::span<const double> tensor(const std::string& name) const;

    double& s_m() { return values_[values_.size() - 2]; }
    double s_m() const { return values_[values_.size() - 2]; }
    double& s_b() { return values_[values_.size() - 1]; }
    double s_b() const { return values_[values_.size() - 1]; }

    bool all_finite() const;
    DhaeParams zeros_like() const;

    bool operator==(const DhaeParams& o) const { return config_ == o.config_ && values_ == o.values_; }

private:
    DhaeConfig config_;
    std::vector<TensorSlot> layout_;
    std::vector<double> values_;
};

/// One autoencoder input or target: a preprocessed M x M x D mask (channel
/// last) and an N-vector box.
struct Sample {
    std::vector<double> mask;
    std::vector<double> box;
};

struct LatentCode {
    std::vector<double> z;
    /// pre-fusion feature [f_m, f_b]
    std::vector<double> f;
};

struct ForwardResult {
    std::vector<double> mask;
    std::vector<double> box;
    LatentCode code;
};

/// Isotropic rescale so the larger side equals M, centered along the
/// smaller side and zero padded. Output is M x M x D, channel last.
std::vector<double> preprocess_mask(const Mask& m, int mask_size);

DhaeParams glorot_init(const DhaeConfig& cfg, std::uint64_t seed);

ForwardResult forward(const DhaeParams& p, std::span<const double> mask, std::span<const double> box);

/// Encoder + fusion only.
LatentCode encode(const DhaeParams& p, std::span<const double> mask, std::span<const double> box);

/// Batch-mean uncertainty-weighted reconstruction loss. Residual norms are
/// per-element means; inactive heads contribute nothing.
double loss(const DhaeParams& p, std::span<const Sample> inputs, std::span<const Sample> targets);
double loss(const DhaeParams& p, std::span<const Sample> batch);

/// Components of the loss for diagnostics: mean MSE per head.
struct LossParts {
    double total = 0.0;
    double mse_mask = 0.0;
    double mse_box = 0.0;
};
LossParts loss_parts(const DhaeParams& p, std::span<const Sample> inputs, std::span<const Sample> targets);

/// Exact gradient of loss() with respect to every parameter. Samples are
/// processed in fixed-size chunks reduced in chunk order, so the result is
/// independent of the thread count.
DhaeParams backward(const DhaeParams& p, std::span<const Sample> inputs, std::span<const Sample> targets,
                    int threads = 1);
DhaeParams backward(const DhaeParams& p, std::span<const Sample> batch, int threads = 1);
/// backward() that also reports the batch loss from the same forward pass.
DhaeParams backward_with_loss(const DhaeParams& p, std::span<const Sample> inputs,
                              std::span<const Sample> targets, int threads, double* loss_out);

struct AdadeltaState {
    double rho = 0.95;
    double eps = 1e-6;
    std::vector<double> mean_sq_grad;
    std::vector<double> mean_sq_step;

    AdadeltaState() = default;
    AdadeltaState(std::size_t n, double rho_ = 0.95, double eps_ = 1e-6)
        : rho(rho_), eps(eps_), mean_sq_grad(n, 0.0), mean_sq_step(n, 0.0) {}
};

/// One ADADELTA update in place. Log-variances are skipped when the config
/// freezes them. Throws InvariantError if any parameter becomes non-finite.
void adadelta_step(AdadeltaState& state, DhaeParams& p, const DhaeParams& grads);

struct TrainOptions {
    int epochs = 50;
    int batch_size = 64;
    std::uint64_t seed = 0;
    int threads = 1;
    double rho = 0.95;
    double eps = 1e-6;
    /// Stddev of Gaussian noise added to box targets only (fresh per epoch).
    double box_target_noise = 0.0;
    std::function<void(int epoch, double loss, const DhaeParams&)> on_epoch;
};

struct TrainResult {
    DhaeParams params;
    std::vector<double> loss_history;  // mean batch loss per epoch
    double initial_loss = 0.0;         // full-dataset loss before the first step
    double final_loss = 0.0;           // full-dataset loss after training
};

TrainResult train(std::span<const Sample> data, const DhaeConfig& cfg, const TrainOptions& opt);

/// Autoencoder sample for one detection: cropped, preprocessed mask plus
/// the normalized box.
Sample make_sample(const Detection& det, const DhaeConfig& cfg, int frame_w, int frame_h);

std::vector<double> embed(const DhaeParams& p, const Detection& det, int frame_w, int frame_h);

void save_checkpoint(const std::string& path, const DhaeParams& p);
DhaeParams load_checkpoint(const std::string& path);

}  // namespace stclust
