#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dctm/tensor.hpp"

namespace dctm {

struct GradCheckResult {
    // Worst per-tensor relative error ||analytic - numeric|| / max(||analytic||, ||numeric||).
    double max_rel_error = 0.0;
    std::string worst_tensor;
    bool passed = false;
};

/// Compares reverse-mode gradients of a scalar loss against central finite
/// differences. `loss_fn` must rebuild the graph from the current values of
/// `wrt` on every call. Tensors whose analytic and numeric gradients are both
/// below `abs_floor` count as agreeing.
GradCheckResult check_gradients(const std::function<Tensor<double>()>& loss_fn,
                                std::vector<Tensor<double>> wrt, double step = 1e-5,
                                double tolerance = 1e-4, double abs_floor = 1e-9);

} // namespace dctm
