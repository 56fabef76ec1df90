#include "stclust/dhae.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "stclust/random.hpp"

namespace stclust {

namespace {

// ---------------------------------------------------------------------------
// Architecture: offsets of every layer inside the flat parameter vector.
// ---------------------------------------------------------------------------

struct DenseLayer {
    std::size_t w = 0, b = 0;
    int in = 0, out = 0;
};

/// Stride-2, 3x3, pad-1 convolution (or its transpose). For conv layers the
/// weight layout is [out][ky][kx][in]; for transposed layers [in][ky][kx][out].
struct ConvLayer {
    std::size_t w = 0, b = 0;
    int in_c = 0, out_c = 0;
    int in_size = 0;
};

struct Arch {
    std::vector<ConvLayer> enc;
    DenseLayer enc_mask_fc;
    DenseLayer enc_box_fc1, enc_box_fc2;
    DenseLayer fuse, defuse;
    DenseLayer dec_mask_fc;
    std::vector<ConvLayer> dec;
    DenseLayer dec_box_fc1, dec_box_fc2;
    std::size_t log_var = 0;
    std::size_t total = 0;
};

class ArchBuilder {
public:
    explicit ArchBuilder(std::vector<TensorSlot>* layout) : layout_(layout) {}

    std::size_t add(const std::string& name, std::size_t n, int fan_in, int fan_out, bool bias) {
        const std::size_t off = next_;
        if (layout_) layout_->push_back({name, off, n, fan_in, fan_out, bias});
        next_ += n;
        return off;
    }

    DenseLayer dense(const std::string& name, int in, int out) {
        DenseLayer d;
        d.in = in;
        d.out = out;
        d.w = add(name + ".w", static_cast<std::size_t>(in) * out, in, out, false);
        d.b = add(name + ".b", out, in, out, true);
        return d;
    }

    ConvLayer conv(const std::string& name, int in_c, int out_c, int in_size) {
        ConvLayer c;
        c.in_c = in_c;
        c.out_c = out_c;
        c.in_size = in_size;
        c.w = add(name + ".w", static_cast<std::size_t>(in_c) * out_c * 9, in_c * 9, out_c * 9, false);
        c.b = add(name + ".b", out_c, in_c * 9, out_c * 9, true);
        return c;
    }

    std::size_t size() const { return next_; }

private:
    std::vector<TensorSlot>* layout_;
    std::size_t next_ = 0;
};

Arch build_arch(const DhaeConfig& cfg, std::vector<TensorSlot>* layout) {
    ArchBuilder b(layout);
    Arch a;
    const int L = static_cast<int>(cfg.conv_channels.size());
    std::vector<int> ch{cfg.channels};
    ch.insert(ch.end(), cfg.conv_channels.begin(), cfg.conv_channels.end());
    const int bottom = cfg.bottom_size();
    const int flat = bottom * bottom * ch[L];
    const int F = cfg.latent;

    if (cfg.uses_mask()) {
        int s = cfg.mask_size;
        for (int i = 0; i < L; ++i) {
            a.enc.push_back(b.conv("enc_conv" + std::to_string(i), ch[i], ch[i + 1], s));
            s /= 2;
        }
        a.enc_mask_fc = b.dense("enc_mask_fc", flat, F);
    }
    if (cfg.uses_box()) {
        a.enc_box_fc1 = b.dense("enc_box_fc1", cfg.box_dims, cfg.box_hidden);
        a.enc_box_fc2 = b.dense("enc_box_fc2", cfg.box_hidden, F);
    }
    a.fuse = b.dense("fuse", cfg.fused_width(), F);
    a.defuse = b.dense("defuse", F, cfg.fused_width());
    if (cfg.uses_mask()) {
        a.dec_mask_fc = b.dense("dec_mask_fc", F, flat);
        int s = bottom;
        for (int j = 0; j < L; ++j) {
            a.dec.push_back(b.conv("dec_deconv" + std::to_string(j), ch[L - j], ch[L - j - 1], s));
            s *= 2;
        }
    }
    if (cfg.uses_box()) {
        a.dec_box_fc1 = b.dense("dec_box_fc1", F, cfg.box_hidden);
        a.dec_box_fc2 = b.dense("dec_box_fc2", cfg.box_hidden, cfg.box_dims);
    }
    a.log_var = b.add("log_var", 2, 0, 0, false);
    a.total = b.size();
    return a;
}

// ---------------------------------------------------------------------------
// Layer kernels. Activations are channel-last [y][x][c].
// ---------------------------------------------------------------------------

void dense_fwd(const double* P, const DenseLayer& l, const double* in, double* out) {
    const double* W = P + l.w;
    const double* B = P + l.b;
    for (int o = 0; o < l.out; ++o) {
        double acc = B[o];
        const double* row = W + static_cast<std::size_t>(o) * l.in;
        for (int i = 0; i < l.in; ++i) acc += row[i] * in[i];
        out[o] = acc;
    }
}

/// Accumulates dW, db; writes din if non-null.
void dense_bwd(const double* P, double* G, const DenseLayer& l, const double* in, const double* dout,
               double* din) {
    const double* W = P + l.w;
    double* dW = G + l.w;
    double* dB = G + l.b;
    if (din) std::fill(din, din + l.in, 0.0);
    for (int o = 0; o < l.out; ++o) {
        const double g = dout[o];
        if (g == 0.0) continue;
        dB[o] += g;
        double* drow = dW + static_cast<std::size_t>(o) * l.in;
        const double* row = W + static_cast<std::size_t>(o) * l.in;
        for (int i = 0; i < l.in; ++i) drow[i] += g * in[i];
        if (din)
            for (int i = 0; i < l.in; ++i) din[i] += g * row[i];
    }
}

void conv_fwd(const double* P, const ConvLayer& l, const double* in, double* out) {
    const int S = l.in_size, So = S / 2;
    const double* W = P + l.w;
    const double* B = P + l.b;
    for (int oy = 0; oy < So; ++oy) {
        for (int ox = 0; ox < So; ++ox) {
            double* o_px = out + (static_cast<std::size_t>(oy) * So + ox) * l.out_c;
            for (int o = 0; o < l.out_c; ++o) o_px[o] = B[o];
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = 2 * oy + ky - 1;
                if (iy < 0 || iy >= S) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = 2 * ox + kx - 1;
                    if (ix < 0 || ix >= S) continue;
                    const double* i_px = in + (static_cast<std::size_t>(iy) * S + ix) * l.in_c;
                    for (int o = 0; o < l.out_c; ++o) {
                        const double* w = W + ((static_cast<std::size_t>(o) * 3 + ky) * 3 + kx) * l.in_c;
                        double acc = 0.0;
                        for (int i = 0; i < l.in_c; ++i) acc += w[i] * i_px[i];
                        o_px[o] += acc;
                    }
                }
            }
        }
    }
}

void conv_bwd(const double* P, double* G, const ConvLayer& l, const double* in, const double* dout,
              double* din) {
    const int S = l.in_size, So = S / 2;
    const double* W = P + l.w;
    double* dW = G + l.w;
    double* dB = G + l.b;
    if (din) std::fill(din, din + static_cast<std::size_t>(S) * S * l.in_c, 0.0);
    for (int oy = 0; oy < So; ++oy) {
        for (int ox = 0; ox < So; ++ox) {
            const double* g_px = dout + (static_cast<std::size_t>(oy) * So + ox) * l.out_c;
            for (int o = 0; o < l.out_c; ++o) dB[o] += g_px[o];
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = 2 * oy + ky - 1;
                if (iy < 0 || iy >= S) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = 2 * ox + kx - 1;
                    if (ix < 0 || ix >= S) continue;
                    const std::size_t ip = (static_cast<std::size_t>(iy) * S + ix) * l.in_c;
                    for (int o = 0; o < l.out_c; ++o) {
                        const double g = g_px[o];
                        if (g == 0.0) continue;
                        const std::size_t wo = ((static_cast<std::size_t>(o) * 3 + ky) * 3 + kx) * l.in_c;
                        for (int i = 0; i < l.in_c; ++i) dW[wo + i] += g * in[ip + i];
                        if (din)
                            for (int i = 0; i < l.in_c; ++i) din[ip + i] += g * W[wo + i];
                    }
                }
            }
        }
    }
}

void deconv_fwd(const double* P, const ConvLayer& l, const double* in, double* out) {
    const int S = l.in_size, So = 2 * S;
    const double* W = P + l.w;
    const double* B = P + l.b;
    for (int p = 0; p < So * So; ++p)
        for (int o = 0; o < l.out_c; ++o) out[static_cast<std::size_t>(p) * l.out_c + o] = B[o];
    for (int iy = 0; iy < S; ++iy) {
        for (int ix = 0; ix < S; ++ix) {
            const double* i_px = in + (static_cast<std::size_t>(iy) * S + ix) * l.in_c;
            for (int ky = 0; ky < 3; ++ky) {
                const int oy = 2 * iy + ky - 1;
                if (oy < 0 || oy >= So) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ox = 2 * ix + kx - 1;
                    if (ox < 0 || ox >= So) continue;
                    double* o_px = out + (static_cast<std::size_t>(oy) * So + ox) * l.out_c;
                    for (int i = 0; i < l.in_c; ++i) {
                        const double v = i_px[i];
                        if (v == 0.0) continue;
                        const double* w = W + ((static_cast<std::size_t>(i) * 3 + ky) * 3 + kx) * l.out_c;
                        for (int o = 0; o < l.out_c; ++o) o_px[o] += w[o] * v;
                    }
                }
            }
        }
    }
}

void deconv_bwd(const double* P, double* G, const ConvLayer& l, const double* in, const double* dout,
                double* din) {
    const int S = l.in_size, So = 2 * S;
    const double* W = P + l.w;
    double* dW = G + l.w;
    double* dB = G + l.b;
    for (int p = 0; p < So * So; ++p)
        for (int o = 0; o < l.out_c; ++o) dB[o] += dout[static_cast<std::size_t>(p) * l.out_c + o];
    for (int iy = 0; iy < S; ++iy) {
        for (int ix = 0; ix < S; ++ix) {
            const std::size_t ip = (static_cast<std::size_t>(iy) * S + ix) * l.in_c;
            if (din) std::fill(din + ip, din + ip + l.in_c, 0.0);
            for (int ky = 0; ky < 3; ++ky) {
                const int oy = 2 * iy + ky - 1;
                if (oy < 0 || oy >= So) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ox = 2 * ix + kx - 1;
                    if (ox < 0 || ox >= So) continue;
                    const double* g_px = dout + (static_cast<std::size_t>(oy) * So + ox) * l.out_c;
                    for (int i = 0; i < l.in_c; ++i) {
                        const std::size_t wo = ((static_cast<std::size_t>(i) * 3 + ky) * 3 + kx) * l.out_c;
                        const double v = in[ip + i];
                        double acc = 0.0;
                        for (int o = 0; o < l.out_c; ++o) {
                            dW[wo + o] += v * g_px[o];
                            acc += W[wo + o] * g_px[o];
                        }
                        if (din) din[ip + i] += acc;
                    }
                }
            }
        }
    }
}

void relu(std::vector<double>& v) {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
}

/// Zeroes gradient entries where the post-activation is not positive.
void relu_bwd(const std::vector<double>& act, std::vector<double>& grad) {
    for (std::size_t i = 0; i < act.size(); ++i)
        if (!(act[i] > 0.0)) grad[i] = 0.0;
}

std::size_t conv_out_len(const ConvLayer& l) {
    const std::size_t s = static_cast<std::size_t>(l.in_size / 2);
    return s * s * l.out_c;
}

std::size_t deconv_out_len(const ConvLayer& l) {
    const std::size_t s = static_cast<std::size_t>(l.in_size * 2);
    return s * s * l.out_c;
}

/// All intermediate activations of one forward pass.
struct Cache {
    std::vector<std::vector<double>> enc;  // post-ReLU conv outputs
    std::vector<double> fm, hb1, fb, f, z, fp, dm0, db1;
    std::vector<std::vector<double>> dec;  // deconv outputs; last is sigmoid
    std::vector<double> yb;
};

void run_encoder(const Arch& a, const DhaeConfig& cfg, const double* P, std::span<const double> mask,
                 std::span<const double> box, Cache& c) {
    const int F = cfg.latent;
    c.f.assign(cfg.fused_width(), 0.0);
    std::size_t f_off = 0;
    if (cfg.uses_mask()) {
        const std::size_t expect = static_cast<std::size_t>(cfg.mask_size) * cfg.mask_size * cfg.channels;
        if (mask.size() != expect) throw Error("dhae: mask input has wrong size");
        c.enc.resize(a.enc.size());
        const double* in = mask.data();
        for (std::size_t i = 0; i < a.enc.size(); ++i) {
            c.enc[i].assign(conv_out_len(a.enc[i]), 0.0);
            conv_fwd(P, a.enc[i], in, c.enc[i].data());
            relu(c.enc[i]);
            in = c.enc[i].data();
        }
        c.fm.assign(F, 0.0);
        dense_fwd(P, a.enc_mask_fc, in, c.fm.data());
        relu(c.fm);
        std::copy(c.fm.begin(), c.fm.end(), c.f.begin());
        f_off = F;
    }
    if (cfg.uses_box()) {
        if (box.size() != static_cast<std::size_t>(cfg.box_dims)) throw Error("dhae: box input has wrong size");
        c.hb1.assign(cfg.box_hidden, 0.0);
        dense_fwd(P, a.enc_box_fc1, box.data(), c.hb1.data());
        relu(c.hb1);
        c.fb.assign(F, 0.0);
        dense_fwd(P, a.enc_box_fc2, c.hb1.data(), c.fb.data());
        relu(c.fb);
        std::copy(c.fb.begin(), c.fb.end(), c.f.begin() + static_cast<std::ptrdiff_t>(f_off));
    }
    c.z.assign(F, 0.0);
    dense_fwd(P, a.fuse, c.f.data(), c.z.data());
}

void run_decoder(const Arch& a, const DhaeConfig& cfg, const double* P, Cache& c) {
    const int F = cfg.latent;
    c.fp.assign(cfg.fused_width(), 0.0);
    dense_fwd(P, a.defuse, c.z.data(), c.fp.data());
    relu(c.fp);
    std::size_t f_off = 0;
    if (cfg.uses_mask()) {
        c.dm0.assign(a.dec_mask_fc.out, 0.0);
        dense_fwd(P, a.dec_mask_fc, c.fp.data(), c.dm0.data());
        relu(c.dm0);
        c.dec.resize(a.dec.size());
        const double* in = c.dm0.data();
        for (std::size_t j = 0; j < a.dec.size(); ++j) {
            c.dec[j].assign(deconv_out_len(a.dec[j]), 0.0);
            deconv_fwd(P, a.dec[j], in, c.dec[j].data());
            if (j + 1 < a.dec.size()) {
                relu(c.dec[j]);
            } else {
                for (double& v : c.dec[j]) v = 1.0 / (1.0 + std::exp(-v));
            }
            in = c.dec[j].data();
        }
        f_off = F;
    }
    if (cfg.uses_box()) {
        c.db1.assign(cfg.box_hidden, 0.0);
        dense_fwd(P, a.dec_box_fc1, c.fp.data() + f_off, c.db1.data());
        relu(c.db1);
        c.yb.assign(cfg.box_dims, 0.0);
        dense_fwd(P, a.dec_box_fc2, c.db1.data(), c.yb.data());
    }
}

double mean_sq_diff(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

double weight_of(double s) { return std::exp(-s); }

/// Per-sample loss and gradient accumulation into G (unscaled by batch).
struct SampleLoss {
    double total = 0.0;
    double mse_m = 0.0;
    double mse_b = 0.0;
};

SampleLoss sample_loss(const DhaeConfig& cfg, const double s_m, const double s_b, const Cache& c,
                       const Sample& target) {
    SampleLoss r;
    if (cfg.uses_mask()) {
        r.mse_m = mean_sq_diff(c.dec.back(), target.mask);
        r.total += 0.5 * weight_of(s_m) * r.mse_m + 0.5 * s_m;
    }
    if (cfg.uses_box()) {
        r.mse_b = mean_sq_diff(c.yb, target.box);
        r.total += 0.5 * weight_of(s_b) * r.mse_b + 0.5 * s_b;
    }
    return r;
}

void sample_backward(const Arch& a, const DhaeConfig& cfg, const double* P, double* G, const Cache& c,
                     std::span<const double> x_box, std::span<const double> x_mask, const Sample& target) {
    const int F = cfg.latent;
    const double s_m = P[a.log_var], s_b = P[a.log_var + 1];
    std::vector<double> dfp(cfg.fused_width(), 0.0);
    std::size_t f_off = 0;

    if (cfg.uses_mask()) {
        const auto& y = c.dec.back();
        const double mse = mean_sq_diff(y, target.mask);
        const double scale = weight_of(s_m) / static_cast<double>(y.size());
        if (cfg.learn_uncertainty) G[a.log_var] += -0.5 * weight_of(s_m) * mse + 0.5;

        std::vector<double> g(y.size());
        for (std::size_t i = 0; i < y.size(); ++i)
            g[i] = scale * (y[i] - target.mask[i]) * y[i] * (1.0 - y[i]);
        for (std::size_t jj = a.dec.size(); jj-- > 0;) {
            const double* in = jj == 0 ? c.dm0.data() : c.dec[jj - 1].data();
            const std::size_t in_len = jj == 0 ? c.dm0.size() : c.dec[jj - 1].size();
            std::vector<double> din(in_len, 0.0);
            deconv_bwd(P, G, a.dec[jj], in, g.data(), din.data());
            relu_bwd(jj == 0 ? c.dm0 : c.dec[jj - 1], din);
            g = std::move(din);
        }
        std::vector<double> dfpm(F, 0.0);
        dense_bwd(P, G, a.dec_mask_fc, c.fp.data(), g.data(), dfpm.data());
        std::copy(dfpm.begin(), dfpm.end(), dfp.begin());
        f_off = F;
    }
    if (cfg.uses_box()) {
        const double mse = mean_sq_diff(c.yb, target.box);
        const double scale = weight_of(s_b) / static_cast<double>(c.yb.size());
        if (cfg.learn_uncertainty) G[a.log_var + 1] += -0.5 * weight_of(s_b) * mse + 0.5;
        std::vector<double> g(c.yb.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (c.yb[i] - target.box[i]);
        std::vector<double> dh(cfg.box_hidden, 0.0);
        dense_bwd(P, G, a.dec_box_fc2, c.db1.data(), g.data(), dh.data());
        relu_bwd(c.db1, dh);
        std::vector<double> dfpb(F, 0.0);
        dense_bwd(P, G, a.dec_box_fc1, c.fp.data() + f_off, dh.data(), dfpb.data());
        std::copy(dfpb.begin(), dfpb.end(), dfp.begin() + static_cast<std::ptrdiff_t>(f_off));
    }

    relu_bwd(c.fp, dfp);
    std::vector<double> dz(F, 0.0);
    dense_bwd(P, G, a.defuse, c.z.data(), dfp.data(), dz.data());
    std::vector<double> df(cfg.fused_width(), 0.0);
    dense_bwd(P, G, a.fuse, c.f.data(), dz.data(), df.data());

    f_off = 0;
    if (cfg.uses_mask()) {
        std::vector<double> dfm(df.begin(), df.begin() + F);
        relu_bwd(c.fm, dfm);
        std::vector<double> g(c.enc.back().size(), 0.0);
        dense_bwd(P, G, a.enc_mask_fc, c.enc.back().data(), dfm.data(), g.data());
        for (std::size_t ii = a.enc.size(); ii-- > 0;) {
            relu_bwd(c.enc[ii], g);
            if (ii == 0) {
                conv_bwd(P, G, a.enc[0], x_mask.data(), g.data(), nullptr);
            } else {
                std::vector<double> din(c.enc[ii - 1].size(), 0.0);
                conv_bwd(P, G, a.enc[ii], c.enc[ii - 1].data(), g.data(), din.data());
                g = std::move(din);
            }
        }
        f_off = F;
    }
    if (cfg.uses_box()) {
        std::vector<double> dfb(df.begin() + static_cast<std::ptrdiff_t>(f_off),
                                df.begin() + static_cast<std::ptrdiff_t>(f_off) + F);
        relu_bwd(c.fb, dfb);
        std::vector<double> dh(cfg.box_hidden, 0.0);
        dense_bwd(P, G, a.enc_box_fc2, c.hb1.data(), dfb.data(), dh.data());
        relu_bwd(c.hb1, dh);
        dense_bwd(P, G, a.enc_box_fc1, x_box.data(), dh.data(), nullptr);
    }
}

void check_batch(std::span<const Sample> inputs, std::span<const Sample> targets) {
    if (inputs.empty()) throw Error("dhae: empty batch");
    if (inputs.size() != targets.size()) throw Error("dhae: inputs and targets differ in length");
}

constexpr std::size_t kChunk = 8;

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Branches b) {
    switch (b) {
        case Branches::both: return "both";
        case Branches::box_only: return "box_only";
        case Branches::mask_only: return "mask_only";
    }
    return "both";
}

Branches branches_from_string(const std::string& s) {
    if (s == "both") return Branches::both;
    if (s == "box_only") return Branches::box_only;
    if (s == "mask_only") return Branches::mask_only;
    throw Error("unknown branch mode '" + s + "'");
}

int DhaeConfig::bottom_size() const {
    int s = mask_size;
    for (std::size_t i = 0; i < conv_channels.size(); ++i) s /= 2;
    return s;
}

void DhaeConfig::validate() const {
    if (mask_size <= 0 || latent <= 0 || box_dims <= 0 || box_hidden <= 0)
        throw Error("dhae config: sizes must be positive");
    if (channels != 1 && channels != 3) throw Error("dhae config: channels must be 1 or 3");
    if (conv_channels.empty()) throw Error("dhae config: need at least one conv layer");
    for (int c : conv_channels)
        if (c <= 0) throw Error("dhae config: conv channels must be positive");
    const int div = 1 << conv_channels.size();
    if (mask_size % div != 0)
        throw Error("dhae config: mask_size must be divisible by 2^(number of conv layers)");
}

DhaeParams::DhaeParams(DhaeConfig cfg) : config_(std::move(cfg)) {
    config_.validate();
    const Arch a = build_arch(config_, &layout_);
    values_.assign(a.total, 0.0);
}

std::span<double> DhaeParams::tensor(const std::string& name) {
    for (const auto& s : layout_)
        if (s.name == name) return std::span<double>(values_).subspan(s.offset, s.size);
    throw Error("unknown tensor '" + name + "'");
}

std::span<const double> DhaeParams::tensor(const std::string& name) const {
    for (const auto& s : layout_)
        if (s.name == name) return std::span<const double>(values_).subspan(s.offset, s.size);
    throw Error("unknown tensor '" + name + "'");
}

bool DhaeParams::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

DhaeParams DhaeParams::zeros_like() const {
    DhaeParams z = *this;
    std::fill(z.values_.begin(), z.values_.end(), 0.0);
    return z;
}

std::vector<double> preprocess_mask(const Mask& m, int mask_size) {
    if (m.empty() || m.support_area() == 0) throw Error("preprocess_mask: empty mask");
    const int M = mask_size;
    const int D = m.channels();
    const int w = m.width(), h = m.height();
    const double scale = static_cast<double>(M) / std::max(w, h);
    const int sw = std::clamp(static_cast<int>(std::lround(w * scale)), 1, M);
    const int sh = std::clamp(static_cast<int>(std::lround(h * scale)), 1, M);
    const int ox = (M - sw) / 2;
    const int oy = (M - sh) / 2;
    std::vector<double> out(static_cast<std::size_t>(M) * M * D, 0.0);
    for (int y = 0; y < sh; ++y) {
        const int ny = std::min(h - 1, static_cast<int>((y + 0.5) * h / sh));
        for (int x = 0; x < sw; ++x) {
            const int nx = std::min(w - 1, static_cast<int>((x + 0.5) * w / sw));
            const bool on = m.support(nx, ny);
            double* px = out.data() + (static_cast<std::size_t>(y + oy) * M + (x + ox)) * D;
            if (D == 1) {
                px[0] = on ? 1.0 : 0.0;
                continue;
            }
            if (!on) continue;
            // bilinear colour, restricted to the nearest-neighbour support
            const double u = std::clamp((x + 0.5) * w / sw - 0.5, 0.0, w - 1.0);
            const double v = std::clamp((y + 0.5) * h / sh - 0.5, 0.0, h - 1.0);
            const int x0 = static_cast<int>(u), y0 = static_cast<int>(v);
            const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double fx = u - x0, fy = v - y0;
            for (int c = 0; c < D; ++c) {
                const double val = (1 - fx) * (1 - fy) * m.at(x0, y0, c) + fx * (1 - fy) * m.at(x1, y0, c) +
                                   (1 - fx) * fy * m.at(x0, y1, c) + fx * fy * m.at(x1, y1, c);
                px[c] = std::clamp(val, 1.0 / 255.0, 1.0);
            }
        }
    }
    return out;
}

DhaeParams glorot_init(const DhaeConfig& cfg, std::uint64_t seed) {
    DhaeParams p(cfg);
    Rng rng(derive_seed(seed, "glorot"));
    auto vals = p.values();
    for (const auto& slot : p.layout()) {
        if (slot.bias || slot.name == "log_var") continue;
        const double limit = std::sqrt(6.0 / (slot.fan_in + slot.fan_out));
        for (std::size_t i = 0; i < slot.size; ++i) vals[slot.offset + i] = rng.uniform(-limit, limit);
    }
    if (cfg.learn_uncertainty) {
        p.s_b() = 1.0 / cfg.box_dims;
        p.s_m() = 1.0 / (static_cast<double>(cfg.mask_size) * cfg.mask_size);
    }
    return p;
}

ForwardResult forward(const DhaeParams& p, std::span<const double> mask, std::span<const double> box) {
    const DhaeConfig& cfg = p.config();
    const Arch a = build_arch(cfg, nullptr);
    Cache c;
    run_encoder(a, cfg, p.values().data(), mask, box, c);
    run_decoder(a, cfg, p.values().data(), c);
    ForwardResult r;
    if (cfg.uses_mask()) r.mask = c.dec.back();
    if (cfg.uses_box()) r.box = c.yb;
    r.code.z = c.z;
    r.code.f = c.f;
    return r;
}

LatentCode encode(const DhaeParams& p, std::span<const double> mask, std::span<const double> box) {
    const DhaeConfig& cfg = p.config();
    const Arch a = build_arch(cfg, nullptr);
    Cache c;
    run_encoder(a, cfg, p.values().data(), mask, box, c);
    return {c.z, c.f};
}

LossParts loss_parts(const DhaeParams& p, std::span<const Sample> inputs, std::span<const Sample> targets) {
    check_batch(inputs, targets);
    const DhaeConfig& cfg = p.config();
    const Arch a = build_arch(cfg, nullptr);
    LossParts out;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Cache c;
        run_encoder(a, cfg, p.values().data(), inputs[k].mask, inputs[k].box, c);
        run_decoder(a, cfg, p.values().data(), c);
        const SampleLoss s = sample_loss(cfg, p.s_m(), p.s_b(), c, targets[k]);
        out.total += s.total;
        out.mse_mask += s.mse_m;
        out.mse_box += s.mse_b;
    }
    const double n = static_cast<double>(inputs.size());
    out.total /= n;
    out.mse_mask /= n;
    out.mse_box /= n;
    return out;
}

double loss(const DhaeParams& p, std::span<const Sample> inputs, std::span<const Sample> targets) {
    return loss_parts(p, inputs, targets).total;
}

double loss(const DhaeParams& p, std::span<const Sample> batch) { return loss(p, batch, batch); }

DhaeParams backward_with_loss(const DhaeParams& p, std::span<const Sample> inputs,
                              std::span<const Sample> targets, int threads, double* loss_out) {
    check_batch(inputs, targets);
    const DhaeConfig& cfg = p.config();
    const Arch a = build_arch(cfg, nullptr);
    const std::size_t n = inputs.size();
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<std::vector<double>> partial(chunks, std::vector<double>(p.values().size(), 0.0));
    std::vector<double> partial_loss(chunks, 0.0);

    auto work = [&](std::size_t chunk) {
        const std::size_t lo = chunk * kChunk, hi = std::min(n, lo + kChunk);
        for (std::size_t k = lo; k < hi; ++k) {
            Cache c;
            run_encoder(a, cfg, p.values().data(), inputs[k].mask, inputs[k].box, c);
            run_decoder(a, cfg, p.values().data(), c);
            partial_loss[chunk] += sample_loss(cfg, p.s_m(), p.s_b(), c, targets[k]).total;
            sample_backward(a, cfg, p.values().data(), partial[chunk].data(), c, inputs[k].box,
                            inputs[k].mask, targets[k]);
        }
    };

    const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(chunks)));
    if (nthreads == 1) {
        for (std::size_t ch = 0; ch < chunks; ++ch) work(ch);
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t ch = t; ch < chunks; ch += nthreads) work(ch);
            });
    }

    DhaeParams g = p.zeros_like();
    auto gv = g.values();
    double total = 0.0;
    for (std::size_t ch = 0; ch < chunks; ++ch) {
        for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += partial[ch][i];
        total += partial_loss[ch];
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (double& v : gv) v *= inv;
    if (loss_out) *loss_out = total * inv;
    return g;
}

DhaeParams backward(const DhaeParams& p, std::span<const Sample> inputs, std::span<const Sample> targets,
                    int threads) {
    return backward_with_loss(p, inputs, targets, threads, nullptr);
}

DhaeParams backward(const DhaeParams& p, std::span<const Sample> batch, int threads) {
    return backward(p, batch, batch, threads);
}

void adadelta_step(AdadeltaState& state, DhaeParams& p, const DhaeParams& grads) {
    auto x = p.values();
    auto g = grads.values();
    if (state.mean_sq_grad.size() != x.size() || state.mean_sq_step.size() != x.size() || g.size() != x.size())
        throw Error("adadelta: state/parameter size mismatch");
    const std::size_t n = p.config().learn_uncertainty ? x.size() : x.size() - 2;
    const double rho = state.rho, eps = state.eps;
    for (std::size_t i = 0; i < n; ++i) {
        state.mean_sq_grad[i] = rho * state.mean_sq_grad[i] + (1.0 - rho) * g[i] * g[i];
        const double step = -std::sqrt(state.mean_sq_step[i] + eps) / std::sqrt(state.mean_sq_grad[i] + eps) * g[i];
        state.mean_sq_step[i] = rho * state.mean_sq_step[i] + (1.0 - rho) * step * step;
        x[i] += step;
    }
    if (!p.all_finite()) throw InvariantError("adadelta: non-finite parameter after update");
}

}  // namespace stclust
