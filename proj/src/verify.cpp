#include "dctm/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "dctm/conv.hpp"
#include "dctm/fusion.hpp"
#include "dctm/gradcheck.hpp"
#include "dctm/metrics.hpp"
#include "dctm/model.hpp"
#include "dctm/ops.hpp"
#include "dctm/random.hpp"
#include "dctm/transformer.hpp"

namespace dctm {

namespace {

using TD = Tensor<double>;

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1)) % (hi - lo + 1);
}

TD leaf(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    TD t = uniform_tensor<double>(std::move(shape), lo, hi, rng);
    t.set_requires_grad(true);
    return t;
}

// Values bounded away from zero, so relu never straddles its kink under a
// finite-difference step.
TD leaf_away_from_zero(Shape shape, std::mt19937_64& rng) {
    TD t = leaf(std::move(shape), rng);
    for (auto& v : t.mutable_data()) v = (v < 0 ? -1.0 : 1.0) * (0.1 + std::abs(v));
    return t;
}

// Scalar probe of a tensor-valued output: sum(out * r) with fixed random r.
TD probe(const TD& out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TD r = uniform_tensor<double>(out.shape(), -1.0, 1.0, rng);
    return sum(mul(out, r));
}

struct GradCase {
    std::function<TD()> loss;
    std::vector<TD> wrt;
};

CheckResult grad_check(const std::string& op, std::size_t configs, std::mt19937_64& rng,
                       const std::function<GradCase(std::mt19937_64&, std::uint64_t)>& make_case) {
    CheckResult r;
    r.name = "grad." + op;
    double worst = 0.0;
    std::string worst_tensor;
    std::size_t failures = 0;
    for (std::size_t i = 0; i < configs; ++i) {
        GradCase c = make_case(rng, rng());
        const auto g = check_gradients(c.loss, c.wrt, 1e-5, 1e-4);
        if (!g.passed) ++failures;
        if (g.max_rel_error >= worst) {
            worst = g.max_rel_error;
            worst_tensor = g.worst_tensor;
        }
    }
    r.passed = failures == 0;
    std::ostringstream d;
    d << configs << " configs, max rel err " << worst;
    if (!worst_tensor.empty()) d << " (" << worst_tensor << ")";
    if (failures) d << ", " << failures << " failed";
    r.detail = d.str();
    return r;
}

std::vector<CheckResult> gradient_checks(std::size_t n, std::mt19937_64& rng) {
    std::vector<CheckResult> out;

    out.push_back(grad_check("matmul", n, rng, [](std::mt19937_64& g, std::uint64_t s) {
        const std::size_t m = pick(g, 1, 5), k = pick(g, 1, 5), p = pick(g, 1, 5), b = pick(g, 1, 3);
        const bool batched_rhs = uniform01(g) < 0.5;
        TD a = leaf({b, m, k}, g);
        a.set_name("a");
        TD w = batched_rhs ? leaf({b, k, p}, g) : leaf({k, p}, g);
        w.set_name("b");
        return GradCase{[=] { return probe(matmul(a, w), s); }, {a, w}};
    }));

    out.push_back(grad_check("elementwise", n, rng, [](std::mt19937_64& g, std::uint64_t s) {
        const std::size_t r = pick(g, 1, 4), c = pick(g, 1, 5);
        TD a = leaf_away_from_zero({r, c}, g);
        a.set_name("a");
        TD b = leaf({c}, g);  // broadcast over rows
        b.set_name("b");
        TD d = leaf({r, c}, g);
        d.set_name("c");
        return GradCase{[=] {
                            TD x = add(mul(a, b), sub(d, b));
                            TD y = add(tanh(x), mul(sigmoid(d), relu(a)));
                            return probe(add_scalar(scale(y, 1.5), 0.25), s);
                        },
                        {a, b, d}};
    }));

    out.push_back(grad_check("softmax", n, rng, [](std::mt19937_64& g, std::uint64_t s) {
        const Shape shape{pick(g, 1, 3), pick(g, 2, 5), pick(g, 2, 6)};
        const std::size_t axis = pick(g, 0, 2);
        TD x = leaf(shape, g, -2.0, 2.0);
        x.set_name("x");
        return GradCase{[=] { return probe(softmax(x, axis), s); }, {x}};
    }));

    out.push_back(grad_check("layer_norm", n, rng, [](std::mt19937_64& g, std::uint64_t s) {
        const std::size_t b = pick(g, 1, 3), t = pick(g, 1, 4), d = pick(g, 2, 8);
        TD x = leaf({b, t, d}, g, -2.0, 2.0);
        x.set_name("x");
        TD gain = leaf({d}, g, 0.5, 1.5);
        gain.set_name("gain");
        TD bias = leaf({d}, g);
        bias.set_name("bias");
        return GradCase{[=] { return probe(layer_norm(x, gain, bias), s); }, {x, gain, bias}};
    }));

    out.push_back(grad_check("dilated_conv", n, rng, [](std::mt19937_64& g, std::uint64_t s) {
        const std::size_t b = pick(g, 1, 2), cin = pick(g, 1, 3), cout = pick(g, 1, 3);
        const std::size_t k = 2 * pick(g, 0, 2) + 1, dil = pick(g, 1, 4), t = pick(g, 4, 16);
        TD x = leaf({b, cin, t}, g);
        x.set_name("x");
        TD w = leaf({cout, cin, k}, g);
        w.set_name("weight");
        TD bias = leaf({cout}, g);
        bias.set_name("bias");
        return GradCase{[=] { return probe(dilated_conv1d(x, w, bias, dil), s); }, {x, w, bias}};
    }));

    out.push_back(grad_check("attention", n, rng, [](std::mt19937_64& g, std::uint64_t s) {
        const std::size_t heads = pick(g, 1, 3), d = heads * pick(g, 1, 3), b = pick(g, 1, 2);
        const std::size_t tq = pick(g, 1, 5), tk = pick(g, 1, 5);
        AttentionWeights<double> w("attn", d, g);
        std::vector<TD> wrt;
        w.collect(wrt);
        for (auto& p : wrt) {
            if (p.name().find(".bias") != std::string::npos) {
                for (auto& v : p.mutable_data()) v = uniform01(g) - 0.5;
            }
        }
        TD q = leaf({b, tq, d}, g);
        q.set_name("query_src");
        TD mem = leaf({b, tk, d}, g);
        mem.set_name("memory");
        wrt.push_back(q);
        wrt.push_back(mem);
        return GradCase{[=] { return probe(multi_head_attention(q, mem, w, heads).out, s); }, wrt};
    }));

    out.push_back(grad_check("gmu", n, rng, [](std::mt19937_64& g, std::uint64_t s) {
        const std::size_t d1 = pick(g, 1, 4), d2 = pick(g, 1, 4), d = pick(g, 1, 4);
        const std::size_t b = pick(g, 1, 2), t = pick(g, 1, 4);
        GmuUnit<double> unit("gmu", "first", "second", d1, d2, d, g);
        std::vector<TD> wrt;
        unit.collect(wrt);
        TD x1 = leaf({b, t, d1}, g);
        x1.set_name("x1");
        TD x2 = leaf({b, t, d2}, g);
        x2.set_name("x2");
        wrt.push_back(x1);
        wrt.push_back(x2);
        return GradCase{[=] { return probe(gmu_fuse(x1, x2, unit).fused, s); }, wrt};
    }));

    out.push_back(grad_check("sigmoid_head", n, rng, [](std::mt19937_64& g, std::uint64_t s) {
        const std::size_t b = pick(g, 1, 3), t = pick(g, 1, 6), d = pick(g, 1, 6);
        Linear<double> head("head", d, 1, g);
        std::vector<TD> wrt;
        head.collect(wrt);
        TD x = leaf({b, t, d}, g);
        x.set_name("decoded");
        wrt.push_back(x);
        return GradCase{[=] { return probe(regression_head(x, head), s); }, wrt};
    }));

    out.push_back(grad_check("ccc_loss", n, rng, [](std::mt19937_64& g, std::uint64_t) {
        const std::size_t b = pick(g, 1, 3), t = pick(g, 3, 12);
        TD pred = leaf({b, t}, g, 0.05, 0.95);
        pred.set_name("pred");
        TD target = uniform_tensor<double>({b, t}, 0.0, 1.0, g);
        std::vector<std::uint8_t> mask(b * t, 1);
        // Mask a few frames but keep at least three per window.
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 3; j < t; ++j) mask[i * t + j] = uniform01(g) < 0.25 ? 0 : 1;
        }
        return GradCase{[=] { return ccc_loss(pred, target, mask); }, {pred}};
    }));

    return out;
}

// y[o,p] = sum_c sum_t w[o,c,t] x[c, p + dil (t - half)]
std::vector<double> conv_oracle(const std::vector<double>& x, const std::vector<double>& w, const std::vector<double>& bias,
                                std::size_t batch, std::size_t cin, std::size_t cout, std::size_t k, std::size_t dil,
                                std::size_t t_len) {
    std::vector<double> y(batch * cout * t_len, 0.0);
    const auto half = static_cast<std::ptrdiff_t>((k - 1) / 2);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t p = 0; p < t_len; ++p) {
                double acc = bias.empty() ? 0.0 : bias[o];
                for (std::size_t c = 0; c < cin; ++c) {
                    for (std::size_t t = 0; t < k; ++t) {
                        const auto src = static_cast<std::ptrdiff_t>(p) +
                                         static_cast<std::ptrdiff_t>(dil) * (static_cast<std::ptrdiff_t>(t) - half);
                        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
                        acc += w[(o * cin + c) * k + t] * x[(b * cin + c) * t_len + static_cast<std::size_t>(src)];
                    }
                }
                y[(b * cout + o) * t_len + p] = acc;
            }
        }
    }
    return y;
}

// True convolution (kernel flipped): y[o,p] = sum w[o,c,t] x[c, p - dil (t - half)]
std::vector<double> true_conv(const std::vector<double>& x, const std::vector<double>& w, std::size_t cin,
                              std::size_t cout, std::size_t k, std::size_t dil, std::size_t t_len) {
    std::vector<double> y(cout * t_len, 0.0);
    const auto half = static_cast<std::ptrdiff_t>((k - 1) / 2);
    for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t p = 0; p < t_len; ++p) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cin; ++c) {
                for (std::size_t t = 0; t < k; ++t) {
                    const auto src = static_cast<std::ptrdiff_t>(p) -
                                     static_cast<std::ptrdiff_t>(dil) * (static_cast<std::ptrdiff_t>(t) - half);
                    if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
                    acc += w[(o * cin + c) * k + t] * x[c * t_len + static_cast<std::size_t>(src)];
                }
            }
            y[o * t_len + p] = acc;
        }
    }
    return y;
}

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

CheckResult conv_checks(std::mt19937_64& rng) {
    CheckResult r{"conv.oracle", true, "", 0.0};
    NoGradGuard no_grad;
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const std::size_t b = pick(rng, 1, 3), cin = pick(rng, 1, 4), cout = pick(rng, 1, 4);
        const std::size_t k = 2 * pick(rng, 0, 3) + 1, dil = pick(rng, 1, 6), t = pick(rng, 1, 40);
        TD x = uniform_tensor<double>({b, cin, t}, -1, 1, rng);
        TD w = uniform_tensor<double>({cout, cin, k}, -1, 1, rng);
        TD bias = uniform_tensor<double>({cout}, -1, 1, rng);
        const auto y = dilated_conv1d(x, w, bias, dil);
        worst = std::max(worst, max_abs_diff(vec(y.data()), conv_oracle(vec(x.data()), vec(w.data()), vec(bias.data()), b, cin, cout, k, dil, t)));
    }
    std::ostringstream d;
    d << "50 cases max err " << worst;
    if (worst > 1e-12) r.passed = false;

    // dilation 1 against a plain same-padded convolution written out directly
    double plain_err = 0.0;
    for (int i = 0; i < 10; ++i) {
        const std::size_t k = 2 * pick(rng, 0, 3) + 1, t = pick(rng, 1, 30);
        TD x = uniform_tensor<double>({1, 1, t}, -1, 1, rng);
        TD w = uniform_tensor<double>({1, 1, k}, -1, 1, rng);
        const auto y = dilated_conv1d(x, w, TD{}, 1);
        std::vector<double> padded(t + k - 1, 0.0);
        std::copy(x.data().begin(), x.data().end(), padded.begin() + static_cast<std::ptrdiff_t>((k - 1) / 2));
        for (std::size_t p = 0; p < t; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += w.data()[j] * padded[p + j];
            plain_err = std::max(plain_err, std::abs(acc - y.data()[p]));
        }
    }
    d << "; dilation-1 err " << plain_err;
    if (plain_err > 1e-12) r.passed = false;

    // centered identity kernel
    bool identity = true;
    for (std::size_t dil : {1, 2, 4}) {
        TD x = uniform_tensor<double>({2, 3, 17}, -1, 1, rng);
        std::vector<double> w(3 * 3 * 5, 0.0);
        for (std::size_t c = 0; c < 3; ++c) w[(c * 3 + c) * 5 + 2] = 1.0;
        const auto y = dilated_conv1d(x, TD::from({3, 3, 5}, w), TD{}, dil);
        identity = identity && vec(y.data()) == vec(x.data());
    }
    d << "; identity " << (identity ? "exact" : "MISMATCH");
    if (!identity) r.passed = false;

    // Cross-correlation with w equals true convolution with w reversed.
    // Integer-valued data keeps every partial sum exact.
    bool flip = true;
    for (int i = 0; i < 20; ++i) {
        const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = 2 * pick(rng, 0, 3) + 1;
        const std::size_t dil = pick(rng, 1, 5), t = pick(rng, 1, 30);
        std::vector<double> xv(cin * t), wv(cout * cin * k), wrev(cout * cin * k);
        for (auto& v : xv) v = std::floor(uniform01(rng) * 19.0) - 9.0;
        for (auto& v : wv) v = std::floor(uniform01(rng) * 9.0) - 4.0;
        for (std::size_t oc = 0; oc < cout * cin; ++oc) {
            for (std::size_t j = 0; j < k; ++j) wrev[oc * k + j] = wv[oc * k + (k - 1 - j)];
        }
        const auto y = dilated_conv1d(TD::from({1, cin, t}, xv), TD::from({cout, cin, k}, wv), TD{}, dil);
        flip = flip && vec(y.data()) == true_conv(xv, wrev, cin, cout, k, dil, t);
    }
    d << "; flip equivalence " << (flip ? "exact" : "MISMATCH");
    if (!flip) r.passed = false;
    r.detail = d.str();
    return r;
}

CheckResult receptive_field_check(std::mt19937_64& rng) {
    CheckResult r{"receptive_field", true, "", 0.0};
    NoGradGuard no_grad;
    const auto specs = make_stack_specs(8, {5, 5, 3}, {4, 4, 4}, {16, 16, 16});
    std::mt19937_64 init(rng());
    ConvStack<double> stack("probe", specs, Activation::Relu, init);
    const std::size_t rf = stack.receptive_field();
    const std::size_t t_len = 128, center = 64;
    const auto half = static_cast<std::ptrdiff_t>((rf - 1) / 2);
    TD x = uniform_tensor<double>({1, 8, t_len}, -1, 1, rng);
    const auto base = stack.forward(x);

    // Offsets a tap path can reach. With equal dilations these sit on a
    // lattice, so frames between lattice points have no influence either.
    std::vector<std::ptrdiff_t> reachable{0};
    for (const auto& spec : specs) {
        std::vector<std::ptrdiff_t> next;
        const auto h = static_cast<std::ptrdiff_t>((spec.kernel_size - 1) / 2);
        for (auto r0 : reachable) {
            for (std::ptrdiff_t t = -h; t <= h; ++t) next.push_back(r0 + static_cast<std::ptrdiff_t>(spec.dilation) * t);
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        reachable = std::move(next);
    }

    double outside = 0.0;
    double off_lattice = 0.0;
    double on_lattice_min = INFINITY;
    for (std::ptrdiff_t off = -half - 20; off <= half + 20; ++off) {
        auto xp = vec(x.data());
        const auto frame = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(center) + off);
        for (std::size_t c = 0; c < 8; ++c) xp[c * t_len + frame] += 0.5;
        const auto y = stack.forward(TD::from({1, 8, t_len}, xp));
        double change = 0.0;
        for (std::size_t o = 0; o < stack.out_channels(); ++o) {
            change = std::max(change, std::abs(y.data()[o * t_len + center] - base.data()[o * t_len + center]));
        }
        if (std::abs(off) > half) {
            outside = std::max(outside, change);
        } else if (std::binary_search(reachable.begin(), reachable.end(), off)) {
            on_lattice_min = std::min(on_lattice_min, change);
        } else {
            off_lattice = std::max(off_lattice, change);
        }
    }
    const bool edges = reachable.front() == -half && reachable.back() == half;
    std::ostringstream d;
    d << "RF " << rf << ", max influence outside " << outside << ", min influence on the " << reachable.size()
      << " reachable taps " << on_lattice_min << " (edges +-" << half << (edges ? " reachable" : " NOT reachable")
      << "), max influence between taps " << off_lattice;
    r.detail = d.str();
    r.passed = rf == 41 && edges && outside <= 1e-12 && on_lattice_min > 1e-12;
    return r;
}

CheckResult ccc_checks(std::mt19937_64& rng) {
    CheckResult r{"ccc.oracle", true, "", 0.0};
    double worst = 0.0;
    bool self_one = true, symmetric = true, bounded = true;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = pick(rng, 2, 200);
        std::vector<double> x(n), y(n);
        const double shift = uniform01(rng) * 2 - 1, gain = uniform01(rng) * 3;
        for (std::size_t j = 0; j < n; ++j) {
            x[j] = uniform01(rng);
            y[j] = gain * x[j] + shift + (uniform01(rng) - 0.5);
        }
        // two-pass: means first, then centered moments
        double mx = 0, my = 0;
        for (std::size_t j = 0; j < n; ++j) {
            mx += x[j];
            my += y[j];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        double vx = 0, vy = 0, cxy = 0;
        for (std::size_t j = 0; j < n; ++j) {
            vx += (x[j] - mx) * (x[j] - mx);
            vy += (y[j] - my) * (y[j] - my);
            cxy += (x[j] - mx) * (y[j] - my);
        }
        vx /= static_cast<double>(n);
        vy /= static_cast<double>(n);
        cxy /= static_cast<double>(n);
        const double expected = 2 * cxy / (vx + vy + (mx - my) * (mx - my));
        const double got = ccc(x, y).ccc;
        worst = std::max(worst, std::abs(got - expected));
        self_one = self_one && std::abs(ccc(x, x).ccc - 1.0) <= 1e-12;
        symmetric = symmetric && std::abs(ccc(y, x).ccc - got) <= 1e-15;
        bounded = bounded && std::abs(got) <= 1.0;
    }
    const std::vector<double> a{1, 2, 3, 4}, b{2, 3, 4, 5};
    const bool worked = ccc(a, b).ccc == 2.5 / 3.5;
    std::ostringstream d;
    d << "1000 pairs max err " << worst << "; self " << self_one << " symmetric " << symmetric << " bounded " << bounded
      << " worked example " << worked;
    r.detail = d.str();
    r.passed = worst <= 1e-10 && self_one && symmetric && bounded && worked;
    return r;
}

CheckResult attention_rows_check(std::uint64_t seed) {
    CheckResult r{"attention.rows", true, "", 0.0};
    ModelSpec spec;
    spec.input_dims = {12, 16, 10};
    spec.seed = seed;
    DctmModel<double> model(spec);
    std::mt19937_64 rng(seed);
    std::array<TD, kNumModalities> inputs;
    for (Modality m : kAllModalities) inputs[index_of(m)] = normal_tensor<double>({2, spec.input_dims[index_of(m)], 64}, 1.0, rng);
    NoGradGuard no_grad;
    const auto out = model.forward(inputs, false);
    double worst = 0.0;
    for (const auto& w : out.attention) {
        const std::size_t tk = w.shape().back();
        const auto& v = w.data();
        for (std::size_t row = 0; row * tk < v.size(); ++row) {
            double s = 0.0;
            for (std::size_t j = 0; j < tk; ++j) s += v[row * tk + j];
            worst = std::max(worst, std::abs(s - 1.0));
        }
    }
    bool in_range = out.scores.shape() == Shape{2, 64};
    for (double s : out.scores.data()) in_range = in_range && s > 0.0 && s < 1.0;
    std::ostringstream d;
    d << out.attention.size() << " attention maps, max |row sum - 1| " << worst << "; scores "
      << shape_str(out.scores.shape()) << (in_range ? " in (0,1)" : " OUT OF RANGE");
    r.detail = d.str();
    r.passed = worst <= 1e-6 && in_range && out.attention.size() == 12;
    return r;
}

} // namespace

std::vector<CheckResult> run_verify(const VerifyOptions& options, const std::function<void(const CheckResult&)>& on_check) {
    fault::set_corrupt_conv_backward(options.corrupt_conv_backward);
    std::vector<CheckResult> results;
    std::mt19937_64 rng(options.seed);
    auto timed = [&](auto&& fn) {
        const auto start = std::chrono::steady_clock::now();
        auto res = fn();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return std::make_pair(std::move(res), secs);
    };
    auto record = [&](CheckResult c) {
        if (on_check) on_check(c);
        results.push_back(std::move(c));
    };
    try {
        auto [grads, secs] = timed([&] { return gradient_checks(options.grad_configs, rng); });
        for (auto& g : grads) {
            g.seconds = secs / static_cast<double>(grads.size());
            record(std::move(g));
        }
        for (auto fn : {conv_checks, receptive_field_check, ccc_checks}) {
            auto [c, s] = timed([&] { return fn(rng); });
            c.seconds = s;
            record(std::move(c));
        }
        auto [a, s] = timed([&] { return attention_rows_check(options.seed); });
        a.seconds = s;
        record(std::move(a));
    } catch (...) {
        fault::set_corrupt_conv_backward(false);
        throw;
    }
    fault::set_corrupt_conv_backward(false);
    return results;
}

std::string verify_text(const std::vector<CheckResult>& results) {
    std::ostringstream out;
    std::size_t failed = 0;
    for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        if (!r.passed) ++failed;
    }
    out << (failed ? std::to_string(failed) + " check(s) failed" : "all checks passed") << "\n";
    return out.str();
}

} // namespace dctm
