// stclust: generate / train / embed / track / evaluate / render / ablate.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "stclust/image.hpp"
#include "stclust/pipeline.hpp"
#include "stclust/random.hpp"

namespace fs = std::filesystem;
using namespace stclust;

namespace {

struct GenerateArgs {
    std::string out;
    SynthConfig synth;
    std::string shape_set = "sprites";
    bool no_images = false;
};

struct TrainArgs {
    std::vector<std::string> data;
    std::string out;
    DhaeConfig model;
    TrainOptions opt;
    std::string branches = "both";
    bool no_mtl = false;
    std::size_t max_samples = 2000;
};

struct TrackerArgs {
    TrackerConfig cfg;
    std::string constraint_mode = "mask_iou";
    std::string variant = "loc+shape+G";
    bool oracle_k = false;
    std::vector<std::string> calib;
    double calib_quantile = 0.95;
};

struct TrackArgs {
    std::string model;
    std::string seq;
    std::string out;
    TrackerArgs t;
};

struct EmbedArgs {
    std::string model;
    std::string seq;
    std::string out;
};

struct EvaluateArgs {
    std::string gt;
    std::string results;
    bool box_match = false;
    double iou = 0.5;
    std::string format = "table";
};

struct RenderArgs {
    std::string seq;
    std::string results;
    std::string out;
    int scale = 2;
};

struct AblateArgs {
    SynthConfig synth;
    std::string shape_set = "sprites";
    int train_seqs = 4;
    int eval_seqs = 5;
    int train_frames = 300;
    DhaeConfig model;
    TrainOptions opt;
    std::size_t max_samples = 2000;
    TrackerArgs t;
    std::vector<int> t_lags{3, 5, 8};
    std::vector<std::string> variants;
    std::string k_modes = "both";
    bool with_no_mtl = false;
    bool box_match = false;
    std::string out;
};

void add_synth_options(CLI::App* app, SynthConfig& s, std::string& shape_set) {
    app->add_option("--seed", s.seed, "Root seed");
    app->add_option("--frames", s.num_frames, "Number of frames");
    app->add_option("--width", s.frame_w, "Frame width");
    app->add_option("--height", s.frame_h, "Frame height");
    app->add_option("--object-size", s.object_size, "Object side length in pixels");
    app->add_option("--density", s.density, "Maximum number of live objects");
    app->add_option("--birth-prob", s.birth_prob, "Per-frame spawn probability while below density");
    app->add_option("--speed", s.mean_speed, "Mean speed, pixels per frame");
    app->add_option("--speed-std", s.speed_std, "Speed standard deviation");
    app->add_option("--jitter", s.direction_jitter_deg, "Heading jitter (degrees, std)");
    app->add_option("--shape-set", shape_set, "sprites|digits");
}

void add_model_options(CLI::App* app, DhaeConfig& m, TrainOptions& o, std::size_t& max_samples) {
    app->add_option("--mask-size", m.mask_size, "Mask grid side M");
    app->add_option("--latent", m.latent, "Latent width F");
    app->add_option("--channels", m.channels, "Mask channels D (1 shape, 3 appearance)");
    app->add_option("--box-hidden", m.box_hidden, "Box encoder hidden width");
    app->add_option("--conv-channels", m.conv_channels, "Conv encoder widths");
    app->add_option("--epochs", o.epochs, "Training epochs");
    app->add_option("--batch", o.batch_size, "Minibatch size");
    app->add_option("--threads", o.threads, "Gradient worker threads");
    app->add_option("--box-noise", o.box_target_noise, "Gaussian noise std on box targets");
    app->add_option("--max-samples", max_samples, "Training sample cap (0 = all)");
}

void add_tracker_options(CLI::App* app, TrackerArgs& t) {
    app->add_option("--t-lag", t.cfg.t_lag, "Window lag");
    app->add_option("--lambda", t.cfg.lambda, "Cluster score threshold");
    app->add_option("--det-threshold", t.cfg.det_threshold, "Detection confidence threshold");
    app->add_option("--tau", t.cfg.constraints.tau, "Temporal reach of the spatial cannot-link test");
    app->add_option("--constraint-mode", t.constraint_mode, "mask_iou|embedding_distance");
    app->add_option("--embed-dist-max", t.cfg.constraints.embed_dist_max,
                    "Embedding distance bound (0 = calibrate)");
    app->add_option("--calib", t.calib, "Labelled sequence dirs for calibrating the distance bound");
    app->add_option("--calib-quantile", t.calib_quantile, "Calibration quantile");
    app->add_option("--max-iter", t.cfg.kmeans.max_iter, "kmeans iterations");
}

void finish_tracker_args(TrackerArgs& t) {
    t.cfg.constraints.mode = constraint_mode_from_string(t.constraint_mode);
    t.cfg.k_mode = t.oracle_k ? KMode::oracle : KMode::estimated;
}

std::vector<SequenceData> load_all(const std::vector<std::string>& dirs, bool images) {
    std::vector<SequenceData> out;
    for (const auto& d : dirs) out.push_back(read_sequence_dir(d, images));
    return out;
}

bool needs_images(const DhaeParams& p) { return p.config().uses_mask() && p.config().channels == 3; }

void run_generate(GenerateArgs& a) {
    a.synth.shape_set = shape_set_from_string(a.shape_set);
    a.synth.render_images = !a.no_images;
    const GtSequence seq = generate_sequence(a.synth);
    write_sequence_dir(a.out, from_generated(seq), a.synth.render_images);
    std::size_t dets = 0;
    for (const auto& f : seq.frames) dets += f.detections.size();
    std::printf("wrote %s: %zu frames, %zu detections, %zu tracks\n", a.out.c_str(), seq.frames.size(), dets,
                seq.track_shape.size());
}

void run_train(TrainArgs& a) {
    a.model.branches = branches_from_string(a.branches);
    a.model.learn_uncertainty = !a.no_mtl;
    a.model.validate();
    const auto seqs = load_all(a.data, a.model.channels == 3);
    const auto samples = build_training_set(seqs, a.model, a.max_samples, a.opt.seed);
    a.opt.on_epoch = [](int epoch, double l, const DhaeParams& p) {
        std::fprintf(stderr, "epoch %3d  loss %.6f  s_m %.4f  s_b %.4f\n", epoch + 1, l, p.s_m(), p.s_b());
    };
    const TrainResult res = train(samples, a.model, a.opt);
    save_checkpoint(a.out, res.params);
    std::printf("trained on %zu samples: loss %.6f -> %.6f, wrote %s\n", samples.size(), res.initial_loss,
                res.final_loss, a.out.c_str());
}

void run_embed(EmbedArgs& a) {
    const DhaeParams model = load_checkpoint(a.model);
    const SequenceData seq = read_sequence_dir(a.seq, needs_images(model));
    std::ofstream os(a.out);
    if (!os) throw Error("cannot write " + a.out);
    os << "frame,det,label";
    for (int k = 0; k < model.config().latent; ++k) os << ",z" << k;
    os << '\n';
    char buf[32];
    for (const Frame& f : seq.frames)
        for (std::size_t i = 0; i < f.detections.size(); ++i) {
            const auto z = embed_detection(model, f.detections[i], f, seq.frame_w, seq.frame_h);
            os << f.index << ',' << i << ',' << (f.detections[i].label ? std::to_string(*f.detections[i].label) : "");
            for (double v : z) {
                std::snprintf(buf, sizeof buf, ",%.17g", v);
                os << buf;
            }
            os << '\n';
        }
}

void run_track(TrackArgs& a) {
    finish_tracker_args(a.t);
    const DhaeParams model = load_checkpoint(a.model);
    const Variant v = variant_from_string(a.t.variant);
    if (model.config().branches != variant_branches(v))
        throw Error("model " + a.model + " has branches " + to_string(model.config().branches) +
                    ", variant " + a.t.variant + " needs " + to_string(variant_branches(v)));
    const SequenceData seq = read_sequence_dir(a.seq, needs_images(model));
    TrackerConfig cfg = a.t.cfg;
    cfg.use_graph = variant_uses_graph(v);
    if (cfg.use_graph) cfg = prepare_tracker_config(cfg, model, load_all(a.t.calib, needs_images(model)), a.t.calib_quantile);
    const KOracle oracle = cfg.k_mode == KMode::oracle ? gt_k_oracle(seq) : KOracle{};
    const TrackOutput out = track(seq.frames, model, seq.frame_w, seq.frame_h, cfg, oracle);
    write_results_file(a.out, out.frames, seq.frame_w, seq.frame_h);
    std::printf("tracked %zu frames: %d identities, %zu committed detections, wrote %s\n", out.frames.size(),
                out.store.next_id(), out.store.committed().size(), a.out.c_str());
}

void run_evaluate(EvaluateArgs& a) {
    const SequenceData gt = read_sequence_dir(a.gt, false);
    const std::vector<Frame> hyp = read_results_file(a.results);
    MatchOptions m;
    m.match_by_box = a.box_match;
    m.iou_threshold = a.iou;
    const MetricsReport r = evaluate(gt.frames, hyp, m);
    if (a.format == "kv")
        std::cout << format_key_values(r);
    else if (a.format == "table")
        std::cout << format_table(r);
    else
        throw Error("unknown format '" + a.format + "' (expected table|kv)");
}

void run_render(RenderArgs& a) {
    SequenceData seq = read_sequence_dir(a.seq, true);
    if (!a.results.empty()) {
        const auto hyp = read_results_file(a.results);
        std::map<int, const Frame*> by_index;
        for (const auto& f : hyp) by_index[f.index] = &f;
        for (Frame& f : seq.frames) {
            const auto it = by_index.find(f.index);
            f.detections = it == by_index.end() ? std::vector<Detection>{} : it->second->detections;
        }
    }
    fs::create_directories(a.out);
    char name[32];
    for (const Frame& f : seq.frames) {
        std::snprintf(name, sizeof name, "%06d.png", f.index);
        write_png(fs::path(a.out) / name, render_overlay(f, seq.frame_w, seq.frame_h, a.scale));
    }
    std::printf("rendered %zu frames to %s\n", seq.frames.size(), a.out.c_str());
}

void run_ablate(AblateArgs& a) {
    finish_tracker_args(a.t);
    a.synth.shape_set = shape_set_from_string(a.shape_set);
    a.synth.render_images = a.model.channels == 3;
    const std::uint64_t root = a.synth.seed;

    std::vector<SequenceData> train_set, eval_set;
    for (int i = 0; i < a.train_seqs; ++i) {
        SynthConfig c = a.synth;
        c.num_frames = a.train_frames;
        c.seed = derive_seed(root, "ablate-train-" + std::to_string(i));
        train_set.push_back(from_generated(generate_sequence(c)));
    }
    for (int i = 0; i < a.eval_seqs; ++i) {
        SynthConfig c = a.synth;
        c.seed = derive_seed(root, "ablate-eval-" + std::to_string(i));
        eval_set.push_back(from_generated(generate_sequence(c)));
    }

    AblationGrid grid;
    grid.t_lags = a.t_lags;
    if (!a.variants.empty()) {
        grid.variants.clear();
        for (const auto& v : a.variants) grid.variants.push_back(variant_from_string(v));
    }
    if (a.k_modes == "estimated")
        grid.k_modes = {KMode::estimated};
    else if (a.k_modes == "oracle")
        grid.k_modes = {KMode::oracle};
    else if (a.k_modes != "both")
        throw Error("unknown --k-modes '" + a.k_modes + "' (expected estimated|oracle|both)");
    grid.mtl = a.with_no_mtl ? std::vector<bool>{false, true} : std::vector<bool>{true};

    ModelBank bank;
    std::set<std::pair<Branches, bool>> needed;
    for (bool mtl : grid.mtl)
        for (Variant v : grid.variants) needed.insert({variant_branches(v), mtl});
    for (const auto& [b, mtl] : needed) {
        DhaeConfig mc = a.model;
        mc.branches = b;
        mc.learn_uncertainty = mtl;
        const auto samples = build_training_set(train_set, mc, a.max_samples, root);
        TrainOptions o = a.opt;
        o.seed = derive_seed(root, "ablate-model");
        std::fprintf(stderr, "training %s%s on %zu samples\n", to_string(b).c_str(), mtl ? "" : " (no MTL)",
                     samples.size());
        bank.models[{b, mtl}] = train(samples, mc, o).params;
    }

    MatchOptions m;
    m.match_by_box = a.box_match;
    const auto cells = run_ablation(eval_set, train_set, bank, grid, a.t.cfg, a.t.calib_quantile, m);
    const std::string table = format_ablation(cells);
    std::cout << table;
    if (!a.out.empty()) {
        std::ofstream os(a.out);
        if (!os) throw Error("cannot write " + a.out);
        os << table;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatio-temporal constrained clustering tracker"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI config file; command-line flags override it");
    app.allow_config_extras(CLI::config_extras_mode::error);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic sequence directory");
    g->add_option("--out", gen.out, "Output directory")->required();
    add_synth_options(g, gen.synth, gen.shape_set);
    g->add_flag("--no-images", gen.no_images, "Skip PNG frames");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train the autoencoder on sequence directories");
    t->add_option("--data", tr.data, "Sequence directories")->required();
    t->add_option("--out", tr.out, "Checkpoint path")->required();
    t->add_option("--seed", tr.opt.seed, "Training seed");
    t->add_option("--branches", tr.branches, "both|box_only|mask_only");
    t->add_flag("--no-mtl", tr.no_mtl, "Freeze the log-variances at 0");
    add_model_options(t, tr.model, tr.opt, tr.max_samples);

    EmbedArgs em;
    auto* e = app.add_subcommand("embed", "Write latent codes for every detection as CSV");
    e->add_option("--model", em.model, "Checkpoint")->required();
    e->add_option("--seq", em.seq, "Sequence directory")->required();
    e->add_option("--out", em.out, "CSV path")->required();

    TrackArgs tk;
    auto* k = app.add_subcommand("track", "Track a sequence and write a results file");
    k->add_option("--model", tk.model, "Checkpoint")->required();
    k->add_option("--seq", tk.seq, "Sequence directory")->required();
    k->add_option("--out", tk.out, "Results file")->required();
    k->add_option("--variant", tk.t.variant, "loc|shape|loc+shape|loc+G|loc+shape+G");
    k->add_flag("--oracle-k", tk.t.oracle_k, "Use the ground-truth object count per window");
    add_tracker_options(k, tk.t);

    EvaluateArgs ev;
    auto* v = app.add_subcommand("evaluate", "Score a results file against ground truth");
    v->add_option("--gt", ev.gt, "Ground-truth sequence directory")->required();
    v->add_option("--results", ev.results, "Results file")->required();
    v->add_flag("--box-match", ev.box_match, "Match CLEAR measures on boxes");
    v->add_option("--iou", ev.iou, "Match threshold");
    v->add_option("--format", ev.format, "table|kv");

    RenderArgs rd;
    auto* r = app.add_subcommand("render", "Overlay masks and identities onto PNG frames");
    r->add_option("--seq", rd.seq, "Sequence directory")->required();
    r->add_option("--results", rd.results, "Results file (default: ground truth)");
    r->add_option("--out", rd.out, "Output directory")->required();
    r->add_option("--scale", rd.scale, "Integer upscale");

    AblateArgs ab;
    ab.synth.num_frames = 300;
    ab.opt.epochs = 20;
    auto* a = app.add_subcommand("ablate", "Train variant models and run the ablation grid");
    add_synth_options(a, ab.synth, ab.shape_set);
    a->add_option("--train-seqs", ab.train_seqs, "Training sequences");
    a->add_option("--eval-seqs", ab.eval_seqs, "Evaluation sequences");
    a->add_option("--train-frames", ab.train_frames, "Frames per training sequence");
    add_model_options(a, ab.model, ab.opt, ab.max_samples);
    add_tracker_options(a, ab.t);
    a->add_option("--t-lags", ab.t_lags, "Window lags");
    a->add_option("--variants", ab.variants, "Variant subset");
    a->add_option("--k-modes", ab.k_modes, "estimated|oracle|both");
    a->add_flag("--with-no-mtl", ab.with_no_mtl, "Also run models trained without uncertainty weighting");
    a->add_flag("--box-match", ab.box_match, "Match CLEAR measures on boxes");
    a->add_option("--out", ab.out, "Also write the table here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }

    try {
        if (*g) run_generate(gen);
        else if (*t) run_train(tr);
        else if (*e) run_embed(em);
        else if (*k) run_track(tk);
        else if (*v) run_evaluate(ev);
        else if (*r) run_render(rd);
        else if (*a) run_ablate(ab);
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "stclust: error: %s\n", ex.what());
        return 1;
    }
    return 0;
}
