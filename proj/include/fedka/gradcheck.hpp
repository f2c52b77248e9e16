#pragma once

// Finite-difference suites for the training objectives: cross-entropy, the
// FedProx objective and cross-entropy plus the anchor loss, on an MLP, a small
// conv net and the t-CNN preset.

#include <cstdint>
#include <string>
#include <vector>

namespace fedka::check {

struct GradcheckOptions {
    std::size_t seeds = 5;
    std::size_t coords = 30;
    double step = 1e-5;
    double tolerance = 1e-4;
    bool include_cnn = true;
    double prox_mu = 0.1;
    double beta = 0.1;
};

struct GradcheckResult {
    std::string model;
    std::string objective;
    std::uint64_t seed = 0;
    std::size_t coords_checked = 0;
    std::size_t coords_skipped = 0;  // a ReLU or max-pool decision flipped within +-step
    double max_rel_error = 0.0;
    bool passed = false;
};

// Relative error per coordinate is |analytic - central| / max(|analytic|, |central|, 1e-12).
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& opts);

}  // namespace fedka::check
