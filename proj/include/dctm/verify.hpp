#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dctm {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct VerifyOptions {
    std::uint64_t seed = 20240601;
    std::size_t grad_configs = 20;  // random configurations per differentiable op
    bool corrupt_conv_backward = false;  // negative control
};

/// Gradient checks for every differentiable op, conv and CCC oracles, the
/// receptive-field perturbation probe and attention row sums on the
/// default-size model.
std::vector<CheckResult> run_verify(const VerifyOptions& options,
                                    const std::function<void(const CheckResult&)>& on_check = {});

std::string verify_text(const std::vector<CheckResult>& results);

} // namespace dctm
