#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wsseg/grid.hpp"
#include "wsseg/rng.hpp"

namespace wsseg {

/// 3x3 or 1x1 convolution parameters, weight layout [out][in][ky][kx].
struct ConvParams {
    int in_channels = 0;
    int out_channels = 0;
    int ksize = 0;
    int stride = 1;
    std::vector<double> weight;
    std::vector<double> bias;
};

/// Per-channel scale/shift applied after a convolution. No batch statistics,
/// so training and inference compute the same function.
struct AffineParams {
    std::vector<double> gamma;
    std::vector<double> shift;
};

/// Fixed encoder-decoder: 1->8 (full res), 8->16 (stride 2), 16->32 (stride 2),
/// 32->32 bottleneck, nearest x2, 32->16 decode (emits the feature map F at
/// half resolution, C=16), nearest x2, 1x1 head + logistic -> m.
struct NetParams {
    ConvParams e0, d0, d1, b, u1, head;
    AffineParams n_e0, n_d0, n_d1, n_b, n_u1;
};

inline constexpr int kFeatureChannels = 16;

/// He fan-in initialization for all conv weights; gamma=1, shifts/biases=0.
/// Deterministic per seed.
NetParams init_params(std::uint64_t seed);

/// Zero-valued parameter set with the same shapes; gradient accumulator.
NetParams zero_like(const NetParams& p);

std::size_t param_count(const NetParams& p);

/// Closed-form count from the architecture descriptor alone.
std::size_t expected_param_count();

/// Fixed-order visitation of every named tensor; the order defines the
/// flattened parameter layout used by the optimizer and checkpoints.
std::vector<std::pair<std::string, std::vector<double>*>> named_tensors(NetParams& p);
std::vector<std::pair<std::string, const std::vector<double>*>> named_tensors(const NetParams& p);

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
    RealGrid image;
    FeatureMap a_e0, a_d0, a_d1, a_b, up_b, a_u1, up_u1;   // post-ReLU outputs
    FeatureMap z_e0, z_d0, z_d1, z_b, z_u1;                // post-norm, pre-ReLU
    FeatureMap c_e0, c_d0, c_d1, c_b, c_u1;                // conv outputs, pre-norm
    RealGrid logits;
    RealGrid prediction;
};

/// Runs the network on an H x W image (H, W divisible by 4, >= 8).
/// Returns F (16 x H/2 x W/2) and m in (0,1), plus the cache.
struct ForwardResult {
    FeatureMap features;
    RealGrid prediction;
    ForwardCache cache;
};
ForwardResult forward(const RealGrid& image, const NetParams& p);

/// Exact reverse-mode gradients of forward() wrt every parameter, given
/// upstream gradients on m and F. grad_F may be empty (treated as zero).
NetParams backward(const ForwardCache& cache, const NetParams& p, const RealGrid& grad_prediction,
                   const FeatureMap& grad_features);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<double> m;  // first moments, flattened parameter order
    std::vector<double> v;  // second moments
};

AdamState init_adam(const NetParams& p, double lr);

/// One bias-corrected Adam update; moments and step advance in place.
void adam_step(NetParams& p, const NetParams& grads, AdamState& s);

/// Versioned binary container: named parameter tensors, optimizer state, and
/// an rng state. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const NetParams& p, const AdamState& s,
                     const std::array<std::uint64_t, 4>& rng_state);
void load_checkpoint(const std::string& path, NetParams& p, AdamState& s,
                     std::array<std::uint64_t, 4>& rng_state);

}  // namespace wsseg
