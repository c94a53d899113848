#include "dctm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dctm {

GradCheckResult check_gradients(const std::function<Tensor<double>()>& loss_fn,
                                std::vector<Tensor<double>> wrt, double step, double tolerance,
                                double abs_floor) {
    for (auto& t : wrt) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    backward(loss_fn());

    GradCheckResult result;
    result.passed = true;
    NoGradGuard no_grad;
    for (auto& t : wrt) {
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        std::vector<double> numeric(t.numel());
        auto values = t.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = loss_fn().item();
            values[i] = saved - step;
            const double down = loss_fn().item();
            values[i] = saved;
            numeric[i] = (up - down) / (2.0 * step);
        }
        double diff = 0.0;
        double na = 0.0;
        double nn = 0.0;
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
            na += analytic[i] * analytic[i];
            nn += numeric[i] * numeric[i];
        }
        diff = std::sqrt(diff);
        const double denom = std::max(std::sqrt(na), std::sqrt(nn));
        double rel = 0.0;
        if (denom > abs_floor) {
            rel = diff / denom;
        } else if (diff > abs_floor) {
            rel = diff / abs_floor;
        }
        if (!std::isfinite(rel)) rel = INFINITY;
        if (rel > result.max_rel_error || result.worst_tensor.empty()) {
            if (rel >= result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_tensor = t.name().empty() ? "<unnamed>" : t.name();
            }
        }
        if (!(rel <= tolerance)) result.passed = false;
    }
    return result;
}

} // namespace dctm
