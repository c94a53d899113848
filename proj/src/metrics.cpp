#include "dctm/metrics.hpp"

#include <cmath>

namespace dctm {

CccResult ccc(std::span<const double> x, std::span<const double> y, std::span<const std::uint8_t> mask) {
    if (x.size() != y.size()) {
        throw DimensionError("ccc: sequences differ in length (" + std::to_string(x.size()) + " vs " +
                             std::to_string(y.size()) + ")");
    }
    if (!mask.empty() && mask.size() != x.size()) throw DimensionError("ccc: mask length differs from data");
    auto used = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };

    CccResult r;
    double sx = 0.0;
    double sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!used(i)) continue;
        sx += x[i];
        sy += y[i];
        ++r.n;
    }
    if (r.n < 2) throw ContractError("ccc: needs at least two unmasked entries, got " + std::to_string(r.n));
    const double n = static_cast<double>(r.n);
    r.mean_x = sx / n;
    r.mean_y = sy / n;
    double vx = 0.0;
    double vy = 0.0;
    double cov = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!used(i)) continue;
        const double dx = x[i] - r.mean_x;
        const double dy = y[i] - r.mean_y;
        vx += dx * dx;
        vy += dy * dy;
        cov += dx * dy;
    }
    r.var_x = vx / n;
    r.var_y = vy / n;
    cov /= n;
    if (r.var_x == 0.0 || r.var_y == 0.0) {
        r.degenerate = true;
        r.ccc = 0.0;
        r.pearson = 0.0;
        return r;
    }
    r.pearson = cov / std::sqrt(r.var_x * r.var_y);
    const double gap = r.mean_x - r.mean_y;
    r.ccc = 2.0 * cov / (r.var_x + r.var_y + gap * gap);
    return r;
}

template <typename T>
Tensor<T> ccc_loss(const Tensor<T>& pred, const Tensor<T>& target, std::span<const std::uint8_t> mask) {
    if (pred.rank() != 2 || pred.shape() != target.shape()) {
        throw DimensionError("ccc_loss: pred " + shape_str(pred.shape()) + " and target " +
                             shape_str(target.shape()) + " must both be [B, T]");
    }
    const std::size_t batch = pred.dim(0);
    const std::size_t len = pred.dim(1);
    if (!mask.empty() && mask.size() != batch * len) throw DimensionError("ccc_loss: mask must have B*T entries");
    auto used = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };

    const auto p = pred.data();
    const auto y = target.data();
    // d loss / d pred, already divided by the number of contributing windows.
    std::vector<double> dpred(batch * len, 0.0);
    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t n = 0;
        double sp = 0.0;
        double sy = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t i = b * len + t;
            if (!used(i)) continue;
            ++n;
            sp += static_cast<double>(p[i]);
            sy += static_cast<double>(y[i]);
        }
        if (n < 2) continue;
        ++windows;
        const double nn = static_cast<double>(n);
        const double mp = sp / nn;
        const double my = sy / nn;
        double vp = 0.0;
        double vy = 0.0;
        double cov = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t i = b * len + t;
            if (!used(i)) continue;
            const double dp = static_cast<double>(p[i]) - mp;
            const double dy = static_cast<double>(y[i]) - my;
            vp += dp * dp;
            vy += dy * dy;
            cov += dp * dy;
        }
        vp /= nn;
        vy /= nn;
        cov /= nn;
        const double num = 2.0 * cov;
        const double den = vp + vy + (mp - my) * (mp - my);
        if (den <= 0.0) {
            total += 1.0;  // both constant and equal: ccc := 0, no gradient
            continue;
        }
        const double c = num / den;
        total += 1.0 - c;
        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t i = b * len + t;
            if (!used(i)) continue;
            const double dnum = 2.0 * (static_cast<double>(y[i]) - my) / nn;
            const double dden = 2.0 * (static_cast<double>(p[i]) - my) / nn;
            dpred[i] = -(dnum * den - num * dden) / (den * den);
        }
    }
    if (windows == 0) throw ContractError("ccc_loss: no window has two or more unmasked frames");
    const double inv = 1.0 / static_cast<double>(windows);
    for (auto& g : dpred) g *= inv;
    auto grad = std::make_shared<std::vector<double>>(std::move(dpred));
    return make_result<T>({1}, {static_cast<T>(total * inv)}, {pred.node_ptr(), target.node_ptr()},
                          [grad](TensorNode<T>& self) {
                              auto& in = *self.inputs[0];
                              if (!in.requires_grad) return;
                              auto& gi = in.ensure_grad();
                              const double up = static_cast<double>(self.grad[0]);
                              for (std::size_t i = 0; i < gi.size(); ++i) {
                                  gi[i] += static_cast<T>(up * (*grad)[i]);
                              }
                          });
}

std::vector<double> frame_magnitudes(const ModalityStream& stream) {
    std::vector<double> out(stream.frames, 0.0);
    for (std::size_t t = 0; t < stream.frames; ++t) {
        double s = 0.0;
        for (std::size_t c = 0; c < stream.channels; ++c) s += stream.at(t, c) * stream.at(t, c);
        out[t] = std::sqrt(s);
    }
    return out;
}

CccResult magnitude_ccc(const ModalityStream& stream, std::span<const double> labels,
                        std::span<const std::uint8_t> mask) {
    if (labels.size() != stream.frames) {
        throw DimensionError("magnitude_ccc: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(stream.frames) + " frames");
    }
    std::vector<std::uint8_t> use(stream.frames, 1);
    for (std::size_t t = 0; t < stream.frames; ++t) {
        if (!stream.valid.empty() && !stream.valid[t]) use[t] = 0;
        if (!mask.empty() && !mask[t]) use[t] = 0;
    }
    auto mags = frame_magnitudes(stream);
    return ccc(mags, labels, use);
}

double mean_squared_error(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.empty()) throw DimensionError("mse: sequences must be non-empty and equal length");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return s / static_cast<double>(x.size());
}

double mean_absolute_error(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.empty()) throw DimensionError("mae: sequences must be non-empty and equal length");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
    return s / static_cast<double>(x.size());
}

template Tensor<float> ccc_loss<float>(const Tensor<float>&, const Tensor<float>&, std::span<const std::uint8_t>);
template Tensor<double> ccc_loss<double>(const Tensor<double>&, const Tensor<double>&, std::span<const std::uint8_t>);

} // namespace dctm
