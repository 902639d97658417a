#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wsseg/dataset.hpp"
#include "wsseg/gradcheck.hpp"
#include "wsseg/image_io.hpp"
#include "wsseg/labelgen.hpp"
#include "wsseg/metrics.hpp"
#include "wsseg/net.hpp"
#include "wsseg/synth.hpp"
#include "wsseg/train.hpp"

namespace fs = std::filesystem;
using namespace wsseg;

namespace {

/// Relative output paths are rooted at $WSSEG_OUT when it is set.
std::string resolve_out(const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    const char* root = std::getenv("WSSEG_OUT");
    if (root == nullptr || *root == '\0') return path;
    return (fs::path(root) / path).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

void print_report(const MetricsReport& rep) {
    std::printf("images     %zu\n", rep.iou.size());
    std::printf("mIoU       %.4f +- %.4f\n", rep.iou_summary.mean, rep.iou_summary.stddev);
    std::printf("DSC        %.4f +- %.4f\n", rep.dsc_summary.mean, rep.dsc_summary.stddev);
    std::printf("Precision  %.4f +- %.4f\n", rep.precision_summary.mean,
                rep.precision_summary.stddev);
    std::printf("HD95       %.4f +- %.4f\n", rep.hd95_summary.mean, rep.hd95_summary.stddev);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> parts;
    std::istringstream is(s);
    std::string part;
    while (std::getline(is, part, ','))
        if (!part.empty()) parts.push_back(part);
    return parts;
}

void add_synth_flags(CLI::App* cmd, SynthConfig& synth) {
    cmd->add_option("--size", synth.size, "square image size in pixels");
    cmd->add_option("--min-nodules", synth.min_nodules, "minimum nodules per image");
    cmd->add_option("--max-nodules", synth.max_nodules, "maximum nodules per image");
    cmd->add_option_function<std::string>(
           "--shape",
           [&synth](const std::string& v) {
               if (v == "ellipse")
                   synth.shape = SynthConfig::Shape::kEllipse;
               else if (v == "blob")
                   synth.shape = SynthConfig::Shape::kBlob;
               else
                   throw CLI::ValidationError("--shape must be ellipse or blob");
           },
           "nodule shape family (ellipse|blob)")
        ->type_name("TEXT");
    cmd->add_option("--harmonic", synth.harmonic_amplitude, "boundary wobble amplitude");
    cmd->add_option("--contrast", synth.contrast, "nodule-background intensity gap");
    cmd->add_option("--blur-sigma", synth.blur_sigma, "gaussian blur sigma");
    cmd->add_option("--speckle", synth.speckle_strength, "speckle noise strength");
    cmd->add_option("--oracle-precision", synth.oracle_precision,
                    "prompt mask precision target");
    cmd->add_option("--oracle-recall", synth.oracle_recall, "prompt mask recall target");
    cmd->add_option("--boundary-noise", synth.boundary_noise,
                    "prompt error raggedness (depth units)");
    cmd->add_option("--jitter", synth.annotation_jitter, "extreme point jitter in pixels");
}

int run_gen_data(const std::string& out, int train_count, int test_count,
                 const SynthConfig& synth) {
    validate_config(synth);
    const std::string root = resolve_out(out);
    const auto train_set = generate_corpus(synth, train_count, 0);
    const auto test_set = generate_corpus(synth, test_count, train_count);
    write_corpus(root + "/train", train_set, synth);
    write_corpus(root + "/test", test_set, synth);
    std::printf("wrote %d train and %d test samples under %s\n", train_count, test_count,
                root.c_str());
    return 0;
}

int run_gen_labels(const std::string& data_dir, const std::string& out) {
    const auto samples = load_dataset(data_dir);
    const std::string root = resolve_out(out);
    for (const char* sub : {"location", "foreground", "background"})
        fs::create_directories(fs::path(root) / sub);

    struct Row {
        const char* name;
        std::vector<double> fg, bg;
    };
    Row rows[4] = {{"box", {}, {}}, {"quad", {}, {}}, {"prompt", {}, {}}, {"fused", {}, {}}};

    auto push = [](Row& row, std::optional<double> fg, std::optional<double> bg) {
        if (fg) row.fg.push_back(*fg);
        if (bg) row.bg.push_back(*bg);
    };

    int written = 0;
    for (const Sample& s : samples) {
        const LabelBundle topo = make_bundle(s, LabelMode::kTopo);
        push(rows[0], label_precision(topo.location, s.gt),
             label_precision(topo.background, s.gt, true));
        push(rows[1], label_precision(topo.foreground, s.gt),
             label_precision(mask_not(topo.foreground), s.gt, true));
        if (!s.has_prompt) continue;
        push(rows[2], label_precision(s.prompt_mask, s.gt),
             label_precision(mask_not(s.prompt_mask), s.gt, true));
        const LabelBundle fused = make_bundle(s, LabelMode::kFused);
        push(rows[3], label_precision(fused.foreground, s.gt),
             label_precision(fused.background, s.gt, true));
        write_png_mask((fs::path(root) / "location" / (s.id + ".png")).string(), fused.location);
        write_png_mask((fs::path(root) / "foreground" / (s.id + ".png")).string(),
                       fused.foreground);
        write_png_mask((fs::path(root) / "background" / (s.id + ".png")).string(),
                       fused.background);
        ++written;
    }

    std::ostringstream csv;
    csv << "label,fg_precision_mean,fg_precision_std,bg_precision_mean,bg_precision_std,"
           "fg_images,bg_images\n";
    std::printf("%-8s %-20s %-20s\n", "label", "fg precision", "bg precision");
    char buf[256];
    for (const Row& row : rows) {
        const MetricsSummary fg = summarize(row.fg);
        const MetricsSummary bg = summarize(row.bg);
        std::printf("%-8s %.4f +- %.4f     %.4f +- %.4f\n", row.name, fg.mean, fg.stddev, bg.mean,
                    bg.stddev);
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%zu,%zu\n", row.name, fg.mean,
                      fg.stddev, bg.mean, bg.stddev, row.fg.size(), row.bg.size());
        csv << buf;
    }
    spit((fs::path(root) / "precision_report.csv").string(), csv.str());
    std::printf("wrote %d label bundles and precision_report.csv under %s\n", written,
                root.c_str());
    return 0;
}

int run_gradcheck(int instances, int probes, double h, std::uint64_t seed, double kernel_tol,
                  double e2e_tol) {
    bool ok = true;
    for (const FdReport& rep : gradcheck_suite(instances, h, seed)) {
        const bool pass = rep.max_rel_err < kernel_tol;
        ok = ok && pass;
        std::printf("%-26s max rel err %.3e  (%d coords)  %s\n", rep.kernel.c_str(),
                    rep.max_rel_err, rep.coords_checked, pass ? "ok" : "FAIL");
    }
    const FdReport e2e = gradcheck_end_to_end(probes, h, seed);
    const bool pass = e2e.max_rel_err < e2e_tol;
    ok = ok && pass;
    std::printf("%-26s max rel err %.3e  (%d params)  %s\n", "end_to_end", e2e.max_rel_err,
                e2e.coords_checked, pass ? "ok" : "FAIL");
    return ok ? 0 : 1;
}

RunConfig load_run_config(const std::string& config_path) {
    if (config_path.empty()) return RunConfig{};
    return run_config_from_json(slurp(config_path));
}

void apply_run_overrides(CLI::App* cmd, RunConfig& cfg, const std::string& data_dir,
                         const std::string& label_mode, const std::string& loss_mode,
                         const RunConfig& flags) {
    if (cmd->count("--data")) {
        cfg.synthetic = false;
        cfg.data_dir = data_dir;
    }
    if (cmd->count("--train-count")) cfg.train_count = flags.train_count;
    if (cmd->count("--test-count")) cfg.test_count = flags.test_count;
    if (cmd->count("--epochs")) cfg.epochs = flags.epochs;
    if (cmd->count("--batch")) cfg.batch = flags.batch;
    if (cmd->count("--lr")) cfg.lr = flags.lr;
    if (cmd->count("--lambda")) cfg.weights.lambda = flags.weights.lambda;
    if (cmd->count("--beta")) cfg.weights.beta = flags.weights.beta;
    if (cmd->count("--tau")) cfg.weights.tau = flags.weights.tau;
    if (cmd->count("--seed")) cfg.seed = flags.seed;
    if (cmd->count("--size")) cfg.synth.size = flags.synth.size;
    if (cmd->count("--out")) cfg.out_dir = flags.out_dir;
    if (!label_mode.empty()) cfg.label_mode = parse_label_mode(label_mode);
    if (!loss_mode.empty()) cfg.loss_mode = parse_loss_mode(loss_mode);
}

void add_run_flags(CLI::App* cmd, RunConfig& flags, std::string& config_path,
                   std::string& data_dir, std::string& label_mode, std::string& loss_mode) {
    cmd->add_option("--config", config_path, "run config JSON file");
    cmd->add_option("--data", data_dir, "real corpus root with train/ and test/ subdirs");
    cmd->add_option("--train-count", flags.train_count, "synthetic training images");
    cmd->add_option("--test-count", flags.test_count, "synthetic test images");
    cmd->add_option("--epochs", flags.epochs, "training epochs");
    cmd->add_option("--batch", flags.batch, "batch size");
    cmd->add_option("--lr", flags.lr, "adam learning rate");
    cmd->add_option("--lambda", flags.weights.lambda, "contrastive weight");
    cmd->add_option("--beta", flags.weights.beta, "correlation weight");
    cmd->add_option("--tau", flags.weights.tau, "contrastive temperature");
    cmd->add_option("--seed", flags.seed, "run seed");
    cmd->add_option("--size", flags.synth.size, "synthetic image size");
    cmd->add_option("--label-mode", label_mode, "pseudo-label source: T, M, or H");
    cmd->add_option("--loss-mode", loss_mode, "loss strategy: P, A, B, C, D, or E");
    cmd->add_option("--out", flags.out_dir, "output directory");
}

int run_train(const RunConfig& cfg) {
    const std::string out = resolve_out(cfg.out_dir);
    fs::create_directories(out);
    spit(out + "/config.json", run_config_to_json(cfg));
    std::printf("training %s: %d epochs, batch %d, lr %g, seed %llu\n",
                mode_code(cfg.loss_mode, cfg.label_mode).c_str(), cfg.epochs, cfg.batch, cfg.lr,
                static_cast<unsigned long long>(cfg.seed));
    const TrainResult res = train(cfg);
    for (const EpochLog& e : res.history.epochs)
        std::printf("epoch %3d  mIoU %.4f  DSC %.4f  Precision %.4f  HD95 %.4f\n", e.epoch,
                    e.miou, e.dsc, e.precision, e.hd95);
    std::printf("best epoch %d (mIoU %.4f), %.1f s\n", res.history.best_epoch,
                res.history.best_miou, res.history.wall_seconds);
    save_checkpoint(out + "/best.ckpt", res.params, res.adam, res.rng_state);
    spit(out + "/history.json", history_to_json(res.history));
    std::printf("wrote %s/best.ckpt and %s/history.json\n", out.c_str(), out.c_str());
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data_dir) {
    NetParams params;
    AdamState adam;
    std::array<std::uint64_t, 4> rng_state{};
    load_checkpoint(checkpoint, params, adam, rng_state);
    const auto samples = load_dataset(data_dir);
    std::vector<RealGrid> images;
    std::vector<MaskGrid> gts;
    for (const Sample& s : samples) {
        images.push_back(s.image);
        gts.push_back(s.gt);
    }
    print_report(evaluate(params, images, gts));
    return 0;
}

int run_ablate(const RunConfig& base, const std::string& modes_arg,
               const std::string& seeds_arg) {
    std::vector<LossMode> modes;
    for (const std::string& m : split_csv(modes_arg)) modes.push_back(parse_loss_mode(m));
    std::vector<std::uint64_t> seeds;
    for (const std::string& s : split_csv(seeds_arg)) seeds.push_back(std::stoull(s));
    const std::string out = resolve_out(base.out_dir);
    fs::create_directories(out);
    const auto rows = ablation_grid(base, modes, seeds);
    const std::string csv = ablation_csv(rows);
    spit(out + "/ablation.csv", csv);
    std::printf("%-6s %-18s %-18s %-18s %-18s\n", "mode", "mIoU", "DSC", "Precision", "HD95");
    for (const AblationRow& r : rows)
        std::printf("%-6s %.4f +- %.4f   %.4f +- %.4f   %.4f +- %.4f   %.4f +- %.4f\n",
                    r.mode.c_str(), r.miou.mean, r.miou.stddev, r.dsc.mean, r.dsc.stddev,
                    r.precision.mean, r.precision.stddev, r.hd95.mean, r.hd95.stddev);
    std::printf("wrote %s/ablation.csv\n", out.c_str());
    return 0;
}

int run_render(const std::string& checkpoint, const std::string& data_dir,
               const std::string& out, double threshold, int limit) {
    NetParams params;
    AdamState adam;
    std::array<std::uint64_t, 4> rng_state{};
    load_checkpoint(checkpoint, params, adam, rng_state);
    const auto samples = load_dataset(data_dir);
    const std::string root = resolve_out(out);
    fs::create_directories(root);
    int written = 0;
    for (const Sample& s : samples) {
        if (limit > 0 && written >= limit) break;
        const ForwardResult fwd = forward(s.image, params);
        render_overlay(s.image, binarize(fwd.prediction, threshold), s.gt,
                       (fs::path(root) / (s.id + ".png")).string());
        ++written;
    }
    std::printf("wrote %d overlays under %s\n", written, root.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weakly supervised nodule segmentation toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic ultrasound-style corpus");
    std::string gen_out = "data";
    int gen_train = 200, gen_test = 50;
    SynthConfig gen_synth;
    gen->add_option("--out", gen_out, "corpus root directory");
    gen->add_option("--train-count", gen_train, "training images");
    gen->add_option("--test-count", gen_test, "test images");
    gen->add_option("--seed", gen_synth.seed, "corpus seed");
    add_synth_flags(gen, gen_synth);
    gen->callback([&] { std::exit(run_gen_data(gen_out, gen_train, gen_test, gen_synth)); });

    // gen-labels
    auto* lab = app.add_subcommand("gen-labels",
                                   "fuse point annotations with prompt masks into label bundles");
    std::string lab_data, lab_out = "labels";
    lab->add_option("--data", lab_data, "corpus directory")->required();
    lab->add_option("--out", lab_out, "output directory");
    lab->callback([&] { std::exit(run_gen_labels(lab_data, lab_out)); });

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck",
                                  "compare analytic loss gradients against finite differences");
    int gc_instances = 10, gc_probes = 20;
    double gc_h = 3e-6, gc_tol = 1e-4, gc_e2e_tol = 1e-3;
    std::uint64_t gc_seed = 1;
    gc->add_option("--instances", gc_instances, "random instances per kernel");
    gc->add_option("--probes", gc_probes, "network parameters probed end to end");
    gc->add_option("--step", gc_h, "finite difference step");
    gc->add_option("--seed", gc_seed, "instance seed");
    gc->add_option("--tolerance", gc_tol, "kernel max relative error bound");
    gc->add_option("--e2e-tolerance", gc_e2e_tol, "end-to-end max relative error bound");
    gc->callback(
        [&] { std::exit(run_gradcheck(gc_instances, gc_probes, gc_h, gc_seed, gc_tol, gc_e2e_tol)); });

    // train
    auto* tr = app.add_subcommand("train", "train the segmentation network");
    RunConfig tr_flags;
    std::string tr_config, tr_data, tr_label, tr_loss;
    add_run_flags(tr, tr_flags, tr_config, tr_data, tr_label, tr_loss);
    tr->callback([&] {
        RunConfig cfg = load_run_config(tr_config);
        apply_run_overrides(tr, cfg, tr_data, tr_label, tr_loss, tr_flags);
        std::exit(run_train(cfg));
    });

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    std::string ev_ckpt, ev_data;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--data", ev_data, "corpus directory")->required();
    ev->callback([&] { std::exit(run_eval(ev_ckpt, ev_data)); });

    // ablate
    auto* ab = app.add_subcommand("ablate", "run the loss-strategy ablation grid");
    RunConfig ab_flags;
    std::string ab_config, ab_data, ab_label, ab_loss;
    std::string ab_modes = "P,A,E", ab_seeds = "1,2,3";
    add_run_flags(ab, ab_flags, ab_config, ab_data, ab_label, ab_loss);
    ab->add_option("--modes", ab_modes, "comma-separated loss strategies");
    ab->add_option("--seeds", ab_seeds, "comma-separated run seeds");
    ab->callback([&] {
        RunConfig cfg = load_run_config(ab_config);
        apply_run_overrides(ab, cfg, ab_data, ab_label, ab_loss, ab_flags);
        std::exit(run_ablate(cfg, ab_modes, ab_seeds));
    });

    // render
    auto* rd = app.add_subcommand("render", "write prediction/ground-truth overlay images");
    std::string rd_ckpt, rd_data, rd_out = "overlays";
    double rd_threshold = 0.5;
    int rd_limit = 0;
    rd->add_option("--checkpoint", rd_ckpt, "checkpoint file")->required();
    rd->add_option("--data", rd_data, "corpus directory")->required();
    rd->add_option("--out", rd_out, "output directory");
    rd->add_option("--threshold", rd_threshold, "binarization threshold");
    rd->add_option("--limit", rd_limit, "stop after this many images (0 = all)");
    rd->callback([&] { std::exit(run_render(rd_ckpt, rd_data, rd_out, rd_threshold, rd_limit)); });

    try {
        CLI11_PARSE(app, argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
