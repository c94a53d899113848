#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dctm/session.hpp"
#include "dctm/tensor.hpp"

namespace dctm {

struct CccResult {
    double ccc = 0.0;
    double mean_x = 0.0;
    double mean_y = 0.0;
    double var_x = 0.0;  // population variance
    double var_y = 0.0;
    double pearson = 0.0;
    std::size_t n = 0;
    // Set when either sequence has zero variance; ccc is then 0.
    bool degenerate = false;
};

/// Concordance correlation coefficient
///   ccc = 2 cov(x, y) / (var_x + var_y + (mean_x - mean_y)^2)
/// over entries whose mask byte is nonzero (all entries when mask is empty).
/// Requires at least two unmasked entries.
CccResult ccc(std::span<const double> x, std::span<const double> y, std::span<const std::uint8_t> mask = {});

/// Mean over windows of (1 - ccc(pred_b, target_b)) for pred/target [B, T].
/// Windows with fewer than two unmasked frames are skipped; the result is
/// differentiable w.r.t. pred wherever the denominator is positive.
template <typename T>
Tensor<T> ccc_loss(const Tensor<T>& pred, const Tensor<T>& target, std::span<const std::uint8_t> mask = {});

// Per-frame L2 norm of the raw feature vector.
std::vector<double> frame_magnitudes(const ModalityStream& stream);

/// ccc between per-frame feature magnitude and labels, over frames that are
/// valid in the stream and unmasked in `mask`.
CccResult magnitude_ccc(const ModalityStream& stream, std::span<const double> labels,
                        std::span<const std::uint8_t> mask = {});

double mean_squared_error(std::span<const double> x, std::span<const double> y);
double mean_absolute_error(std::span<const double> x, std::span<const double> y);

} // namespace dctm
