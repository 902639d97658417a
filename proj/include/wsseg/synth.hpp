#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsseg/grid.hpp"
#include "wsseg/labelgen.hpp"
#include "wsseg/rng.hpp"

namespace wsseg {

/// Ultrasound-like synthetic generator: dark nodules on a brighter field,
/// blurred, then multiplied by unit-mean speckle.
struct SynthConfig {
    int size = 64;
    int min_nodules = 1;
    int max_nodules = 1;
    enum class Shape { kEllipse, kBlob };
    Shape shape = Shape::kBlob;
    double harmonic_amplitude = 0.25;  // total radial perturbation of blob outlines
    double background_mean = 0.65;
    double contrast = 0.35;            // nodule darker than background by this, pre-noise
    double blur_sigma = 1.0;
    double speckle_strength = 0.15;
    double oracle_precision = 0.96;    // prompt simulator targets
    double oracle_recall = 0.95;
    double boundary_noise = 1.5;       // raggedness of the simulated prompt boundary, px
    int annotation_jitter = 1;
    std::uint64_t seed = 1;
};

void validate_config(const SynthConfig& cfg);

struct Sample {
    std::string id;
    RealGrid image;   // values quantized to k/255
    MaskGrid gt;
    PointAnnotation annotation;
    MaskGrid prompt_mask;
    bool has_prompt = true;
};

/// Deterministic per (cfg.seed, index).
Sample gen_sample(const SynthConfig& cfg, int index);

/// Extreme points of every 4-connected component of gt (components in
/// row-major first-pixel order; ties resolved toward the smaller other
/// coordinate), each point jittered by at most `jitter` px and clamped so the
/// annotation stays valid.
PointAnnotation extreme_points(const MaskGrid& gt, int jitter, Rng& rng);

/// Boundary-biased corruption of gt hitting the configured oracle
/// precision/recall targets: removes the shallowest (1-recall)|gt| foreground
/// pixels and adds the nearest matching count of outside pixels, with noisy
/// depth ranking so the result looks like ragged dilation/erosion.
MaskGrid simulate_prompt_mask(const MaskGrid& gt, const SynthConfig& cfg, Rng& rng);

RealGrid gaussian_blur(const RealGrid& image, double sigma);

}  // namespace wsseg
