#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wsseg {

/// |analytic - numeric| / max(1e-12, |analytic| + |numeric|)
double relative_error(double analytic, double numeric);

struct FdReport {
    std::string kernel;
    double max_rel_err = 0.0;
    int coords_checked = 0;
};

inline constexpr const char* kGradcheckKernels[] = {
    "projection",       "topo",
    "alignment",        "dense_bce",
    "contrastive",      "correlation_consistency",
    "correlation_seg",  "prototype_correlation",
    "total",
};

/// Central-difference check of one named kernel on a random instance derived
/// from `seed` (features 4x8x8, grids 8x8 or 16x16). Sampling rngs are
/// re-seeded identically for every perturbed evaluation.
FdReport finite_diff_check(const std::string& kernel, double h, std::uint64_t seed);

/// Runs every kernel `instances` times; returns one report per kernel with
/// the max relative error across its instances.
std::vector<FdReport> gradcheck_suite(int instances, double h, std::uint64_t base_seed);

/// d(total_loss)/d(parameter) through forward/backward on a 16x16 image vs
/// central differences, on `probes` randomly chosen parameters.
FdReport gradcheck_end_to_end(int probes, double h, std::uint64_t seed);

}  // namespace wsseg
