#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wsseg/dataset.hpp"
#include "wsseg/losses.hpp"
#include "wsseg/metrics.hpp"
#include "wsseg/net.hpp"

namespace wsseg {

/// Label source: T = point geometry only, M = prompted mask only,
/// H = high-confidence fusion of both. Table rows use the digits 1/2/3.
enum class LabelMode { kTopo, kPrompt, kFused };

/// Learning strategy: P = dense pixel supervision on the label-mode target,
/// A = alignment only, B = +contrastive, C = +correlation,
/// D = contrastive+correlation without alignment, E = all three.
enum class LossMode { kPixel, kA, kB, kC, kD, kE };

char label_mode_digit(LabelMode m);
char loss_mode_letter(LossMode m);
LabelMode parse_label_mode(const std::string& s);  // accepts T/M/H or 1/2/3
LossMode parse_loss_mode(const std::string& s);
std::string mode_code(LossMode loss, LabelMode label);  // e.g. "E3"

struct RunConfig {
    bool synthetic = true;
    SynthConfig synth;
    int train_count = 200;
    int test_count = 50;
    std::string data_dir;  // when !synthetic: expects train/ and test/ corpora
    int epochs = 30;
    int batch = 8;
    double lr = 2e-3;
    LossWeights weights;
    LabelMode label_mode = LabelMode::kFused;
    LossMode loss_mode = LossMode::kE;
    std::uint64_t seed = 1;
    std::string out_dir = "run";
};

RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

struct StepLog {
    int step = 0;
    double alignment = 0.0;
    double contrastive = 0.0;
    double correlation = 0.0;
    double pixel = 0.0;
    double total = 0.0;
    std::uint32_t skipped = 0;
};

struct EpochLog {
    int epoch = 0;  // 0 = before any update
    double miou = 0.0, dsc = 0.0, precision = 0.0, hd95 = 0.0;
};

struct TrainHistory {
    std::vector<StepLog> steps;
    std::vector<EpochLog> epochs;
    int best_epoch = -1;
    double best_miou = 0.0;
    double wall_seconds = 0.0;
    std::array<std::uint64_t, 4> final_rng_state{};
};

std::string history_to_json(const TrainHistory& h);

struct TrainResult {
    NetParams params;  // best-validation-mIoU parameters
    AdamState adam;    // optimizer state at the end of training
    TrainHistory history;
    std::array<std::uint64_t, 4> rng_state{};
};

/// Training targets for one sample under a label mode.
LabelBundle make_bundle(const Sample& s, LabelMode mode);
MaskGrid pixel_target(const Sample& s, LabelMode mode);

TrainResult train(const RunConfig& cfg);
TrainResult train(const RunConfig& cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& test_set);

/// Inference path: images and ground truth only, no annotations or prompts.
MetricsReport evaluate(const NetParams& params, const std::vector<RealGrid>& images,
                       const std::vector<MaskGrid>& gts);

struct AblationRow {
    std::string mode;  // e.g. "E3"
    MetricsSummary miou, dsc, precision, hd95;  // per-image stats pooled across seeds
};

/// Trains base cfg once per (mode, seed) and pools per-image test metrics.
std::vector<AblationRow> ablation_grid(const RunConfig& base, const std::vector<LossMode>& modes,
                                       const std::vector<std::uint64_t>& seeds);

std::string ablation_csv(const std::vector<AblationRow>& rows);
std::vector<AblationRow> parse_ablation_csv(const std::string& text);

/// Confusion overlay PNG: red = true positive, green = missed foreground,
/// blue = false positive, grayscale image elsewhere.
void render_overlay(const RealGrid& image, const MaskGrid& pred, const MaskGrid& gt,
                    const std::string& out_path);

}  // namespace wsseg
