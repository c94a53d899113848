#pragma once

// Brute-force reference implementations used only by the tests. Nothing in
// here calls into the library's numerics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "dctm/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline Vec to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

// a [m x k] * b [k x n], row-major
inline Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
    Vec c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t t = 0; t < k; ++t) c[i * n + j] += a[i * k + t] * b[t * n + j];
    return c;
}

inline Vec softmax(const Vec& x) {
    const double mx = *std::max_element(x.begin(), x.end());
    Vec e(x.size());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (e[i] = std::exp(x[i] - mx));
    for (auto& v : e) v /= s;
    return e;
}

inline Vec layer_norm(const Vec& x, double eps) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + eps);
    return y;
}

// Zero-pads F explicitly, then sums taps at spacing l around each centre.
inline Vec dilated_conv_padded(const Vec& f, const Vec& k, std::size_t l) {
    const std::size_t half = (k.size() - 1) / 2 * l;
    Vec padded(f.size() + 2 * half, 0.0);
    std::copy(f.begin(), f.end(), padded.begin() + static_cast<std::ptrdiff_t>(half));
    Vec y(f.size(), 0.0);
    for (std::size_t p = 0; p < f.size(); ++p)
        for (std::size_t t = 0; t < k.size(); ++t) y[p] += k[t] * padded[p + t * l];
    return y;
}

// Multi-channel batched version of the above: x [B, Cin, T], w [Cout, Cin, K].
inline Vec conv1d(const Vec& x, const Vec& w, const Vec& bias, std::size_t batch, std::size_t cin, std::size_t cout,
                  std::size_t k, std::size_t l, std::size_t t_len) {
    Vec y(batch * cout * t_len, 0.0);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < cout; ++o) {
            Vec acc(t_len, bias.empty() ? 0.0 : bias[o]);
            for (std::size_t c = 0; c < cin; ++c) {
                Vec f(x.begin() + static_cast<std::ptrdiff_t>((b * cin + c) * t_len),
                      x.begin() + static_cast<std::ptrdiff_t>((b * cin + c + 1) * t_len));
                Vec kk(w.begin() + static_cast<std::ptrdiff_t>((o * cin + c) * k),
                       w.begin() + static_cast<std::ptrdiff_t>((o * cin + c + 1) * k));
                const Vec part = dilated_conv_padded(f, kk, l);
                for (std::size_t p = 0; p < t_len; ++p) acc[p] += part[p];
            }
            std::copy(acc.begin(), acc.end(), y.begin() + static_cast<std::ptrdiff_t>((b * cout + o) * t_len));
        }
    return y;
}

// Textbook convolution with the kernel flipped, single batch: x [Cin, T].
inline Vec true_conv(const Vec& x, const Vec& w, std::size_t cin, std::size_t cout, std::size_t k, std::size_t l,
                     std::size_t t_len) {
    Vec y(cout * t_len, 0.0);
    const long half = static_cast<long>((k - 1) / 2);
    for (std::size_t o = 0; o < cout; ++o)
        for (long p = 0; p < static_cast<long>(t_len); ++p)
            for (std::size_t c = 0; c < cin; ++c)
                for (long t = 0; t < static_cast<long>(k); ++t) {
                    const long src = p - static_cast<long>(l) * (t - half);
                    if (src >= 0 && src < static_cast<long>(t_len))
                        y[o * t_len + static_cast<std::size_t>(p)] +=
                            w[(o * cin + c) * k + static_cast<std::size_t>(t)] * x[c * t_len + static_cast<std::size_t>(src)];
                }
    return y;
}

struct Ccc {
    double ccc;
    double mean_x, mean_y, var_x, var_y, cov;
};

// Two-pass: means, then centred moments; population normalisation.
inline Ccc ccc(const Vec& x, const Vec& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, c = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
        c += (x[i] - mx) * (y[i] - my);
    }
    vx /= n;
    vy /= n;
    c /= n;
    const double den = vx + vy + (mx - my) * (mx - my);
    return {den > 0 ? 2 * c / den : 0.0, mx, my, vx, vy, c};
}

// Single-head attention for one sequence: q [Tq x dk], k/v [Tk x dk].
inline Vec attention_head(const Vec& q, const Vec& k, const Vec& v, std::size_t tq, std::size_t tk, std::size_t dk,
                          Vec* weights = nullptr) {
    Vec out(tq * dk, 0.0);
    for (std::size_t i = 0; i < tq; ++i) {
        Vec s(tk);
        for (std::size_t j = 0; j < tk; ++j) {
            double dot = 0.0;
            for (std::size_t d = 0; d < dk; ++d) dot += q[i * dk + d] * k[j * dk + d];
            s[j] = dot / std::sqrt(static_cast<double>(dk));
        }
        const Vec a = softmax(s);
        if (weights) weights->insert(weights->end(), a.begin(), a.end());
        for (std::size_t j = 0; j < tk; ++j)
            for (std::size_t d = 0; d < dk; ++d) out[i * dk + d] += a[j] * v[j * dk + d];
    }
    return out;
}

/// Worst per-tensor relative error between reverse-mode gradients and a
/// central finite difference with step h. Runs `loss` once for the analytic
/// pass and twice per coordinate.
inline double gradient_rel_error(const std::function<dctm::Tensor<double>()>& loss,
                                 std::vector<dctm::Tensor<double>> wrt, double h = 1e-5) {
    for (auto& t : wrt) t.zero_grad();
    dctm::backward(loss());
    std::vector<Vec> analytic;
    for (auto& t : wrt) analytic.push_back(to_vec(t.grad()));
    double worst = 0.0;
    for (std::size_t i = 0; i < wrt.size(); ++i) {
        auto data = wrt[i].mutable_data();
        Vec numeric(data.size());
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double keep = data[j];
            data[j] = keep + h;
            const double up = loss().item();
            data[j] = keep - h;
            const double down = loss().item();
            data[j] = keep;
            numeric[j] = (up - down) / (2 * h);
        }
        double diff = 0, na = 0, nn = 0;
        for (std::size_t j = 0; j < numeric.size(); ++j) {
            diff += (analytic[i][j] - numeric[j]) * (analytic[i][j] - numeric[j]);
            na += analytic[i][j] * analytic[i][j];
            nn += numeric[j] * numeric[j];
        }
        const double scale = std::sqrt(std::max(na, nn));
        if (scale > 1e-9) worst = std::max(worst, std::sqrt(diff) / scale);
    }
    for (auto& t : wrt) t.zero_grad();
    return worst;
}

} // namespace oracle
