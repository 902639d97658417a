#include "wsseg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "wsseg/image_io.hpp"

using nlohmann::json;

namespace wsseg {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kLossStream = 0x6c6f7373ULL;

struct ModePlan {
    bool pixel = false;
    bool alignment = false;
    double lambda = 0.0;
    double beta = 0.0;
};

ModePlan plan_for(LossMode mode, const LossWeights& w) {
    switch (mode) {
        case LossMode::kPixel: return {true, false, 0.0, 0.0};
        case LossMode::kA: return {false, true, 0.0, 0.0};
        case LossMode::kB: return {false, true, w.lambda, 0.0};
        case LossMode::kC: return {false, true, 0.0, w.beta};
        case LossMode::kD: return {false, false, w.lambda, w.beta};
        case LossMode::kE: return {false, true, w.lambda, w.beta};
    }
    throw std::invalid_argument("unknown loss mode");
}

void add_params(NetParams& acc, const NetParams& g) {
    auto at = named_tensors(acc);
    const auto gt = named_tensors(g);
    for (std::size_t t = 0; t < at.size(); ++t) {
        std::vector<double>& a = *at[t].second;
        const std::vector<double>& b = *gt[t].second;
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    }
}

void scale_params(NetParams& p, double s) {
    for (auto& [name, vec] : named_tensors(p))
        for (double& v : *vec) v *= s;
}

MaskGrid union_boxes(const PointAnnotation& ann, int h, int w) {
    MaskGrid out(h, w);
    for (const NodulePoints& np : ann.nodules) out = mask_or(out, bounding_box_mask(np, h, w));
    return out;
}

MaskGrid union_quads(const PointAnnotation& ann, int h, int w) {
    MaskGrid out(h, w);
    for (const NodulePoints& np : ann.nodules) out = mask_or(out, quadrilateral_mask(np, h, w));
    return out;
}

}  // namespace

char label_mode_digit(LabelMode m) {
    switch (m) {
        case LabelMode::kTopo: return '1';
        case LabelMode::kPrompt: return '2';
        case LabelMode::kFused: return '3';
    }
    throw std::invalid_argument("unknown label mode");
}

char loss_mode_letter(LossMode m) {
    switch (m) {
        case LossMode::kPixel: return 'P';
        case LossMode::kA: return 'A';
        case LossMode::kB: return 'B';
        case LossMode::kC: return 'C';
        case LossMode::kD: return 'D';
        case LossMode::kE: return 'E';
    }
    throw std::invalid_argument("unknown loss mode");
}

LabelMode parse_label_mode(const std::string& s) {
    if (s == "T" || s == "t" || s == "1") return LabelMode::kTopo;
    if (s == "M" || s == "m" || s == "2") return LabelMode::kPrompt;
    if (s == "H" || s == "h" || s == "3") return LabelMode::kFused;
    throw std::invalid_argument("label mode must be T, M, or H, got: " + s);
}

LossMode parse_loss_mode(const std::string& s) {
    if (s.size() == 1) {
        switch (std::toupper(static_cast<unsigned char>(s[0]))) {
            case 'P': return LossMode::kPixel;
            case 'A': return LossMode::kA;
            case 'B': return LossMode::kB;
            case 'C': return LossMode::kC;
            case 'D': return LossMode::kD;
            case 'E': return LossMode::kE;
        }
    }
    throw std::invalid_argument("loss mode must be one of P,A,B,C,D,E, got: " + s);
}

std::string mode_code(LossMode loss, LabelMode label) {
    return std::string(1, loss_mode_letter(loss)) + label_mode_digit(label);
}

RunConfig run_config_from_json(const std::string& text) {
    const json j = json::parse(text);
    RunConfig cfg;
    cfg.synthetic = j.value("synthetic", cfg.synthetic);
    if (j.contains("synth")) cfg.synth = synth_config_from_json(j.at("synth").dump());
    cfg.train_count = j.value("train_count", cfg.train_count);
    cfg.test_count = j.value("test_count", cfg.test_count);
    cfg.data_dir = j.value("data_dir", cfg.data_dir);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch = j.value("batch", cfg.batch);
    cfg.lr = j.value("lr", cfg.lr);
    if (j.contains("weights")) {
        const json& w = j.at("weights");
        cfg.weights.lambda = w.value("lambda", cfg.weights.lambda);
        cfg.weights.beta = w.value("beta", cfg.weights.beta);
        cfg.weights.tau = w.value("tau", cfg.weights.tau);
        if (w.contains("scales")) cfg.weights.scales = w.at("scales").get<std::vector<int>>();
        cfg.weights.samples_per_class =
            w.value("samples_per_class", cfg.weights.samples_per_class);
    }
    if (j.contains("label_mode")) cfg.label_mode = parse_label_mode(j.at("label_mode"));
    if (j.contains("loss_mode")) cfg.loss_mode = parse_loss_mode(j.at("loss_mode"));
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j;
    j["synthetic"] = cfg.synthetic;
    j["synth"] = json::parse(synth_config_to_json(cfg.synth));
    j["train_count"] = cfg.train_count;
    j["test_count"] = cfg.test_count;
    j["data_dir"] = cfg.data_dir;
    j["epochs"] = cfg.epochs;
    j["batch"] = cfg.batch;
    j["lr"] = cfg.lr;
    j["weights"] = {{"lambda", cfg.weights.lambda},
                    {"beta", cfg.weights.beta},
                    {"tau", cfg.weights.tau},
                    {"scales", cfg.weights.scales},
                    {"samples_per_class", cfg.weights.samples_per_class}};
    j["label_mode"] = std::string(1, label_mode_digit(cfg.label_mode) == '1'   ? 'T'
                                     : label_mode_digit(cfg.label_mode) == '2' ? 'M'
                                                                               : 'H');
    j["loss_mode"] = std::string(1, loss_mode_letter(cfg.loss_mode));
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    return j.dump(2) + "\n";
}

LabelBundle make_bundle(const Sample& s, LabelMode mode) {
    const int h = s.gt.height, w = s.gt.width;
    switch (mode) {
        case LabelMode::kTopo: {
            LabelBundle b;
            b.location = union_boxes(s.annotation, h, w);
            b.foreground = union_quads(s.annotation, h, w);
            b.background = mask_not(b.location);
            return b;
        }
        case LabelMode::kPrompt: {
            LabelBundle b;
            b.location = s.prompt_mask;
            b.foreground = s.prompt_mask;
            b.background = mask_not(s.prompt_mask);
            return b;
        }
        case LabelMode::kFused:
            return multi_nodule_fuse(s.annotation, s.prompt_mask, h, w);
    }
    throw std::invalid_argument("unknown label mode");
}

MaskGrid pixel_target(const Sample& s, LabelMode mode) {
    switch (mode) {
        case LabelMode::kTopo:
            return union_quads(s.annotation, s.gt.height, s.gt.width);
        case LabelMode::kPrompt:
            return s.prompt_mask;
        case LabelMode::kFused:
            return multi_nodule_fuse(s.annotation, s.prompt_mask, s.gt.height, s.gt.width)
                .foreground;
    }
    throw std::invalid_argument("unknown label mode");
}

MetricsReport evaluate(const NetParams& params, const std::vector<RealGrid>& images,
                       const std::vector<MaskGrid>& gts) {
    if (images.empty()) throw std::invalid_argument("evaluate: empty dataset");
    if (images.size() != gts.size())
        throw std::invalid_argument("evaluate: image/gt count mismatch");
    std::vector<RealGrid> preds;
    preds.reserve(images.size());
    for (const RealGrid& img : images) preds.push_back(forward(img, params).prediction);
    return corpus_report(preds, gts, 0.5);
}

TrainResult train(const RunConfig& cfg) {
    if (cfg.synthetic) {
        const auto train_set = generate_corpus(cfg.synth, cfg.train_count, 0);
        const auto test_set = generate_corpus(cfg.synth, cfg.test_count, cfg.train_count);
        return train(cfg, train_set, test_set);
    }
    const auto train_set = load_dataset(cfg.data_dir + "/train");
    const auto test_set = load_dataset(cfg.data_dir + "/test");
    return train(cfg, train_set, test_set);
}

TrainResult train(const RunConfig& cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& test_set) {
    if (train_set.empty() || test_set.empty())
        throw std::invalid_argument("train: empty dataset");
    if (cfg.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
    if (cfg.epochs < 0) throw std::invalid_argument("train: negative epochs");
    if (cfg.label_mode != LabelMode::kTopo)
        for (const Sample& s : train_set)
            if (!s.has_prompt)
                throw std::invalid_argument("train: label mode needs a prompt mask for " + s.id);

    const auto t0 = std::chrono::steady_clock::now();
    const ModePlan plan = plan_for(cfg.loss_mode, cfg.weights);
    const int n = static_cast<int>(train_set.size());

    std::vector<MaskGrid> targets;                    // pixel mode
    std::vector<LabelBundle> bundles;                 // loss modes A..E
    std::vector<MaskGrid> fg_feat, bg_feat;           // regions at feature resolution
    if (plan.pixel) {
        targets.reserve(n);
        for (const Sample& s : train_set) targets.push_back(pixel_target(s, cfg.label_mode));
    } else {
        bundles.reserve(n);
        for (const Sample& s : train_set) {
            LabelBundle b = make_bundle(s, cfg.label_mode);
            if (b.location.empty_mask())
                throw std::invalid_argument("train: empty location label for " + s.id);
            fg_feat.push_back(downsample_min(b.foreground, 2));
            bg_feat.push_back(downsample_min(b.background, 2));
            bundles.push_back(std::move(b));
        }
    }

    std::vector<RealGrid> test_images;
    std::vector<MaskGrid> test_gts;
    test_images.reserve(test_set.size());
    for (const Sample& s : test_set) {
        test_images.push_back(s.image);
        test_gts.push_back(s.gt);
    }

    TrainResult out;
    out.params = init_params(Rng::mix(cfg.seed, kInitStream));
    out.adam = init_adam(out.params, cfg.lr);
    Rng shuffle_rng(Rng::mix(cfg.seed, kShuffleStream));
    const std::uint64_t loss_base = Rng::mix(cfg.seed, kLossStream);

    NetParams best = out.params;
    TrainHistory& hist = out.history;

    auto validate = [&](int epoch) {
        const MetricsReport rep = evaluate(out.params, test_images, test_gts);
        EpochLog log;
        log.epoch = epoch;
        log.miou = rep.iou_summary.mean;
        log.dsc = rep.dsc_summary.mean;
        log.precision = rep.precision_summary.mean;
        log.hd95 = rep.hd95_summary.mean;
        hist.epochs.push_back(log);
        if (hist.best_epoch < 0 || log.miou > hist.best_miou) {
            hist.best_miou = log.miou;
            hist.best_epoch = epoch;
            best = out.params;
        }
    };

    validate(0);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    int step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (int start = 0; start < n; start += cfg.batch) {
            const int members = std::min(cfg.batch, n - start);
            NetParams gsum = zero_like(out.params);
            StepLog log;
            log.step = step;
            for (int k = 0; k < members; ++k) {
                const int idx = order[start + k];
                const Sample& s = train_set[idx];
                const ForwardResult fwd = forward(s.image, out.params);
                NetParams g;
                if (plan.pixel) {
                    const LossResult res = dense_bce_loss(fwd.prediction, targets[idx]);
                    log.pixel += res.value;
                    g = backward(fwd.cache, out.params, *res.grad_prediction, FeatureMap());
                } else {
                    RealGrid grad_pred(fwd.prediction.height, fwd.prediction.width);
                    FeatureMap grad_feat(fwd.features.channels, fwd.features.height,
                                         fwd.features.width);
                    if (plan.alignment) {
                        const LossResult a = alignment_loss(fwd.prediction, bundles[idx].location,
                                                            bundles[idx].foreground);
                        log.alignment += a.value;
                        log.skipped |= a.skipped;
                        for (std::size_t i = 0; i < grad_pred.values.size(); ++i)
                            grad_pred.values[i] += a.grad_prediction->values[i];
                    }
                    if (plan.lambda != 0.0) {
                        Rng lrng(Rng::mix(loss_base,
                                          static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                              static_cast<std::uint64_t>(idx)));
                        const LossResult c = contrastive_loss(fwd.features, fg_feat[idx],
                                                              bg_feat[idx], cfg.weights, lrng);
                        log.contrastive += c.value;
                        log.skipped |= c.skipped;
                        for (std::size_t i = 0; i < grad_feat.values.size(); ++i)
                            grad_feat.values[i] += plan.lambda * c.grad_features->values[i];
                    }
                    if (plan.beta != 0.0) {
                        const LossResult r = prototype_correlation_loss(
                            fwd.features, fwd.prediction, fg_feat[idx], bg_feat[idx]);
                        log.correlation += r.value;
                        log.skipped |= r.skipped;
                        for (std::size_t i = 0; i < grad_pred.values.size(); ++i)
                            grad_pred.values[i] += plan.beta * r.grad_prediction->values[i];
                        for (std::size_t i = 0; i < grad_feat.values.size(); ++i)
                            grad_feat.values[i] += plan.beta * r.grad_features->values[i];
                    }
                    g = backward(fwd.cache, out.params, grad_pred, grad_feat);
                }
                add_params(gsum, g);
            }
            scale_params(gsum, 1.0 / members);
            adam_step(out.params, gsum, out.adam);

            const double inv = 1.0 / members;
            log.alignment *= inv;
            log.contrastive *= inv;
            log.correlation *= inv;
            log.pixel *= inv;
            log.total = log.alignment + plan.lambda * log.contrastive +
                        plan.beta * log.correlation + log.pixel;
            hist.steps.push_back(log);
            ++step;
        }
        validate(epoch);
    }

    out.rng_state = shuffle_rng.state();
    hist.final_rng_state = out.rng_state;
    hist.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.params = best;
    return out;
}

std::string history_to_json(const TrainHistory& h) {
    json steps = json::array();
    for (const StepLog& s : h.steps)
        steps.push_back({{"step", s.step},
                         {"alignment", s.alignment},
                         {"contrastive", s.contrastive},
                         {"correlation", s.correlation},
                         {"pixel", s.pixel},
                         {"total", s.total},
                         {"skipped", s.skipped}});
    json epochs = json::array();
    for (const EpochLog& e : h.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"miou", e.miou},
                          {"dsc", e.dsc},
                          {"precision", e.precision},
                          {"hd95", e.hd95}});
    const json j = {{"steps", steps},
                    {"epochs", epochs},
                    {"best_epoch", h.best_epoch},
                    {"best_miou", h.best_miou},
                    {"wall_seconds", h.wall_seconds},
                    {"final_rng_state", h.final_rng_state}};
    return j.dump(2) + "\n";
}

std::vector<AblationRow> ablation_grid(const RunConfig& base, const std::vector<LossMode>& modes,
                                       const std::vector<std::uint64_t>& seeds) {
    if (modes.empty() || seeds.empty())
        throw std::invalid_argument("ablation_grid: empty mode or seed list");

    std::vector<Sample> train_set, test_set;
    if (base.synthetic) {
        train_set = generate_corpus(base.synth, base.train_count, 0);
        test_set = generate_corpus(base.synth, base.test_count, base.train_count);
    } else {
        train_set = load_dataset(base.data_dir + "/train");
        test_set = load_dataset(base.data_dir + "/test");
    }
    std::vector<RealGrid> test_images;
    std::vector<MaskGrid> test_gts;
    for (const Sample& s : test_set) {
        test_images.push_back(s.image);
        test_gts.push_back(s.gt);
    }

    std::vector<AblationRow> rows;
    for (const LossMode mode : modes) {
        std::vector<double> iou_all, dsc_all, prec_all, hd_all;
        for (const std::uint64_t seed : seeds) {
            RunConfig cfg = base;
            cfg.loss_mode = mode;
            cfg.seed = seed;
            const TrainResult res = train(cfg, train_set, test_set);
            const MetricsReport rep = evaluate(res.params, test_images, test_gts);
            iou_all.insert(iou_all.end(), rep.iou.begin(), rep.iou.end());
            dsc_all.insert(dsc_all.end(), rep.dsc.begin(), rep.dsc.end());
            prec_all.insert(prec_all.end(), rep.precision.begin(), rep.precision.end());
            hd_all.insert(hd_all.end(), rep.hd95.begin(), rep.hd95.end());
        }
        AblationRow row;
        row.mode = mode_code(mode, base.label_mode);
        row.miou = summarize(iou_all);
        row.dsc = summarize(dsc_all);
        row.precision = summarize(prec_all);
        row.hd95 = summarize(hd_all);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "mode,miou_mean,miou_std,dsc_mean,dsc_std,"
          "precision_mean,precision_std,hd95_mean,hd95_std\n";
    char buf[64];
    auto put = [&](double v, char sep) {
        std::snprintf(buf, sizeof buf, "%.17g%c", v, sep);
        os << buf;
    };
    for (const AblationRow& r : rows) {
        os << r.mode << ',';
        put(r.miou.mean, ',');
        put(r.miou.stddev, ',');
        put(r.dsc.mean, ',');
        put(r.dsc.stddev, ',');
        put(r.precision.mean, ',');
        put(r.precision.stddev, ',');
        put(r.hd95.mean, ',');
        put(r.hd95.stddev, '\n');
    }
    return os.str();
}

std::vector<AblationRow> parse_ablation_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("ablation csv: empty input");
    std::vector<AblationRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 9) throw std::runtime_error("ablation csv: malformed row: " + line);
        AblationRow r;
        r.mode = cells[0];
        r.miou = {std::stod(cells[1]), std::stod(cells[2])};
        r.dsc = {std::stod(cells[3]), std::stod(cells[4])};
        r.precision = {std::stod(cells[5]), std::stod(cells[6])};
        r.hd95 = {std::stod(cells[7]), std::stod(cells[8])};
        rows.push_back(std::move(r));
    }
    return rows;
}

void render_overlay(const RealGrid& image, const MaskGrid& pred, const MaskGrid& gt,
                    const std::string& out_path) {
    if (pred.height != image.height || pred.width != image.width || !pred.same_shape(gt))
        throw std::invalid_argument("render_overlay: shape mismatch");
    RgbImage rgb(image.height, image.width);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const bool p = pred.at(y, x) != 0, g = gt.at(y, x) != 0;
            std::uint8_t r, gr, b;
            if (p && g) {
                r = 255, gr = 0, b = 0;
            } else if (!p && g) {
                r = 0, gr = 255, b = 0;
            } else if (p && !g) {
                r = 0, gr = 0, b = 255;
            } else {
                const auto v = static_cast<std::uint8_t>(
                    std::lround(std::clamp(image.at(y, x), 0.0, 1.0) * 255.0));
                r = gr = b = v;
            }
            rgb.at(y, x, 0) = r;
            rgb.at(y, x, 1) = gr;
            rgb.at(y, x, 2) = b;
        }
    }
    write_png_rgb(out_path, rgb);
}

}  // namespace wsseg
