#include "dctm/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace dctm {

namespace fault {
namespace {
std::atomic<bool> g_corrupt_conv{false};
}
void set_corrupt_conv_backward(bool enabled) { g_corrupt_conv.store(enabled); }
bool corrupt_conv_backward() { return g_corrupt_conv.load(); }
} // namespace fault

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                                 shape_str(b) + " are not broadcast-compatible");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `in` viewed against `out` (zero along broadcast axes).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<std::size_t> strides(out.size(), 0);
    auto own = contiguous_strides(in);
    const std::size_t offset = out.size() - in.size();
    for (std::size_t i = 0; i < in.size(); ++i) {
        strides[offset + i] = in[i] == 1 ? 0 : own[i];
    }
    return strides;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
    const std::size_t n = shape_numel(out);
    const std::size_t na = shape_numel(sa);
    const std::size_t nb = shape_numel(sb);
    if (sa == out && sb == out) {
        for (std::size_t i = 0; i < n; ++i) f(i, i, i);
        return;
    }
    auto is_suffix = [&](const Shape& s) {
        std::size_t k = 0;
        while (k < s.size() && s[k] == 1) ++k;
        const std::size_t len = s.size() - k;
        if (len > out.size()) return false;
        return std::equal(s.begin() + static_cast<std::ptrdiff_t>(k), s.end(),
                          out.end() - static_cast<std::ptrdiff_t>(len));
    };
    if (na == n && sa.size() == out.size() && is_suffix(sb)) {
        for (std::size_t i = 0; i < n; ++i) f(i, i, i % nb);
        return;
    }
    if (nb == n && sb.size() == out.size() && is_suffix(sa)) {
        for (std::size_t i = 0; i < n; ++i) f(i, i % na, i);
        return;
    }
    auto st_a = broadcast_strides(sa, out);
    auto st_b = broadcast_strides(sb, out);
    std::vector<std::size_t> idx(out.size(), 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t d = out.size(); d-- > 0;) {
            ++idx[d];
            ia += st_a[d];
            ib += st_b[d];
            if (idx[d] < out[d]) break;
            ia -= st_a[d] * out[d];
            ib -= st_b[d] * out[d];
            idx[d] = 0;
        }
    }
}

enum class BinaryKind { Add, Sub, Mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* op) {
    Shape out = broadcast_shapes(a.shape(), b.shape(), op);
    Buffer<T> y(shape_numel(out));
    const auto& da = a.node()->data;
    const auto& db = b.node()->data;
    switch (kind) {
    case BinaryKind::Add:
        for_each_broadcast(out, a.shape(), b.shape(),
                           [&](std::size_t i, std::size_t ia, std::size_t ib) { y[i] = da[ia] + db[ib]; });
        break;
    case BinaryKind::Sub:
        for_each_broadcast(out, a.shape(), b.shape(),
                           [&](std::size_t i, std::size_t ia, std::size_t ib) { y[i] = da[ia] - db[ib]; });
        break;
    case BinaryKind::Mul:
        for_each_broadcast(out, a.shape(), b.shape(),
                           [&](std::size_t i, std::size_t ia, std::size_t ib) { y[i] = da[ia] * db[ib]; });
        break;
    }
    return make_result<T>(out, std::move(y), {a.node_ptr(), b.node_ptr()}, [kind](TensorNode<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const auto& g = self.grad;
        T* ga = na.requires_grad ? na.ensure_grad().data() : nullptr;
        T* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
        const T sign_b = kind == BinaryKind::Sub ? T(-1) : T(1);
        for_each_broadcast(self.shape, na.shape, nb.shape,
                           [&](std::size_t i, std::size_t ia, std::size_t ib) {
                               if (kind == BinaryKind::Mul) {
                                   if (ga) ga[ia] += g[i] * nb.data[ib];
                                   if (gb) gb[ib] += g[i] * na.data[ia];
                               } else {
                                   if (ga) ga[ia] += g[i];
                                   if (gb) gb[ib] += sign_b * g[i];
                               }
                           });
    });
}

// Unary op whose derivative is expressible from (input, output).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv) {
    const auto& dx = x.node()->data;
    Buffer<T> y(dx.size());
    for (std::size_t i = 0; i < dx.size(); ++i) y[i] = fwd(dx[i]);
    return make_result<T>(x.shape(), std::move(y), {x.node_ptr()}, [deriv](TensorNode<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& gi = in.ensure_grad();
        for (std::size_t i = 0; i < gi.size(); ++i) {
            gi[i] += self.grad[i] * deriv(in.data[i], self.data[i]);
        }
    });
}

template <typename T>
T stable_sigmoid(T v) {
    if (v >= T(0)) {
        return T(1) / (T(1) + std::exp(-v));
    }
    const T e = std::exp(v);
    return e / (T(1) + e);
}

} // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw DimensionError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(a.rank() - 2);
    const std::size_t k = a.dim(a.rank() - 1);
    const std::size_t kb = b.dim(b.rank() - 2);
    const std::size_t n = b.dim(b.rank() - 1);
    if (k != kb) {
        throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };

    if (b.rank() == 2) {
        // Shared right operand: one GEMM over all leading rows of a.
        Shape out(a.shape().begin(), a.shape().end() - 1);
        out.push_back(n);
        const std::size_t rows = a.numel() / k;
        Buffer<T> y(rows * n);
        MutMap<T>(y.data(), ei(rows), ei(n)).noalias() =
            ConstMap<T>(a.data().data(), ei(rows), ei(k)) * ConstMap<T>(b.data().data(), ei(k), ei(n));
        return make_result<T>(out, std::move(y), {a.node_ptr(), b.node_ptr()},
                              [rows, k, n, ei](TensorNode<T>& self) {
                                  auto& na = *self.inputs[0];
                                  auto& nb = *self.inputs[1];
                                  ConstMap<T> g(self.grad.data(), ei(rows), ei(n));
                                  if (na.requires_grad) {
                                      MutMap<T>(na.ensure_grad().data(), ei(rows), ei(k)).noalias() +=
                                          g * ConstMap<T>(nb.data.data(), ei(k), ei(n)).transpose();
                                  }
                                  if (nb.requires_grad) {
                                      MutMap<T>(nb.ensure_grad().data(), ei(k), ei(n)).noalias() +=
                                          ConstMap<T>(na.data.data(), ei(rows), ei(k)).transpose() * g;
                                  }
                              });
    }

    Shape batch_a(a.shape().begin(), a.shape().end() - 2);
    Shape batch_b(b.shape().begin(), b.shape().end() - 2);
    Shape batch = broadcast_shapes(batch_a, batch_b, "matmul");
    const std::size_t nbatch = shape_numel(batch);
    std::vector<std::size_t> off_a(nbatch);
    std::vector<std::size_t> off_b(nbatch);
    for_each_broadcast(batch, batch_a, batch_b, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        off_a[i] = ia * m * k;
        off_b[i] = ib * k * n;
    });
    Shape out = batch;
    out.push_back(m);
    out.push_back(n);
    Buffer<T> y(nbatch * m * n);
    for (std::size_t i = 0; i < nbatch; ++i) {
        MutMap<T>(y.data() + i * m * n, ei(m), ei(n)).noalias() =
            ConstMap<T>(a.data().data() + off_a[i], ei(m), ei(k)) *
            ConstMap<T>(b.data().data() + off_b[i], ei(k), ei(n));
    }
    return make_result<T>(
        out, std::move(y), {a.node_ptr(), b.node_ptr()},
        [m, k, n, nbatch, off_a = std::move(off_a), off_b = std::move(off_b), ei](TensorNode<T>& self) {
            auto& na = *self.inputs[0];
            auto& nb = *self.inputs[1];
            T* ga = na.requires_grad ? na.ensure_grad().data() : nullptr;
            T* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
            for (std::size_t i = 0; i < nbatch; ++i) {
                ConstMap<T> g(self.grad.data() + i * m * n, ei(m), ei(n));
                if (ga) {
                    MutMap<T>(ga + off_a[i], ei(m), ei(k)).noalias() +=
                        g * ConstMap<T>(nb.data.data() + off_b[i], ei(k), ei(n)).transpose();
                }
                if (gb) {
                    MutMap<T>(gb + off_b[i], ei(k), ei(n)).noalias() +=
                        ConstMap<T>(na.data.data() + off_a[i], ei(m), ei(k)).transpose() * g;
                }
            }
        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::Add, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::Sub, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::Mul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    return unary(
        x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
    return unary(
        x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return unary(
        x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary(
        x, [](T v) { return stable_sigmoid(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary(
        x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                             shape_str(x.shape()));
    }
    const auto& s = x.shape();
    const std::size_t len = s[axis];
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const auto& xd = x.node()->data;
    Buffer<T> y(xd.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = xd[base];
            for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
            T total = 0;
            for (std::size_t j = 0; j < len; ++j) {
                T e = std::exp(xd[base + j * inner] - mx);
                y[base + j * inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < len; ++j) y[base + j * inner] /= total;
        }
    }
    return make_result<T>(s, std::move(y), {x.node_ptr()}, [outer, inner, len](TensorNode<T>& self) {
        auto& in_node = *self.inputs[0];
        if (!in_node.requires_grad) return;
        auto& gx = in_node.ensure_grad();
        const auto& g = self.grad;
        const auto& yv = self.data;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T dot = 0;
                for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * yv[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t idx = base + j * inner;
                    gx[idx] += yv[idx] * (g[idx] - dot);
                }
            }
        }
    });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    if (x.rank() < 1 || x.shape().back() == 0) {
        throw DimensionError("layer_norm: input needs a non-empty last axis, got " + shape_str(x.shape()));
    }
    const std::size_t d = x.shape().back();
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
        throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                             shape_str(bias.shape()) + " do not match last axis of " + shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / d;
    const auto& xd = x.node()->data;
    const auto& gd = gain.node()->data;
    const auto& bd = bias.node()->data;
    auto xhat = std::make_shared<Buffer<T>>(xd.size());
    auto rstd = std::make_shared<Buffer<T>>(rows);
    Buffer<T> y(xd.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xd.data() + r * d;
        T mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= T(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + eps);
        (*rstd)[r] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const T h = (row[j] - mu) * inv;
            (*xhat)[r * d + j] = h;
            y[r * d + j] = h * gd[j] + bd[j];
        }
    }
    return make_result<T>(
        x.shape(), std::move(y), {x.node_ptr(), gain.node_ptr(), bias.node_ptr()},
        [rows, d, xhat, rstd](TensorNode<T>& self) {
            auto& nx = *self.inputs[0];
            auto& ng = *self.inputs[1];
            auto& nb = *self.inputs[2];
            const auto& g = self.grad;
            T* gx = nx.requires_grad ? nx.ensure_grad().data() : nullptr;
            T* gg = ng.requires_grad ? ng.ensure_grad().data() : nullptr;
            T* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
            for (std::size_t r = 0; r < rows; ++r) {
                const T* gr = g.data() + r * d;
                const T* hr = xhat->data() + r * d;
                if (gg || gb) {
                    for (std::size_t j = 0; j < d; ++j) {
                        if (gg) gg[j] += gr[j] * hr[j];
                        if (gb) gb[j] += gr[j];
                    }
                }
                if (gx) {
                    T mean_dh = 0;
                    T mean_dh_h = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dh = gr[j] * ng.data[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                    }
                    mean_dh /= T(d);
                    mean_dh_h /= T(d);
                    const T inv = (*rstd)[r];
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dh = gr[j] * ng.data[j];
                        gx[r * d + j] += inv * (dh - mean_dh - hr[j] * mean_dh_h);
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = 0;
    for (T v : x.data()) total += v;
    return make_result<T>({1}, {total}, {x.node_ptr()}, [](TensorNode<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& gi = in.ensure_grad();
        for (auto& v : gi) v += self.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    Buffer<T> y(x.data().begin(), x.data().end());
    return make_result<T>(std::move(shape), std::move(y), {x.node_ptr()}, [](TensorNode<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& gi = in.ensure_grad();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order) {
    const auto& s = x.shape();
    if (order.size() != s.size()) {
        throw DimensionError("permute: order has " + std::to_string(order.size()) + " axes for " +
                             shape_str(s));
    }
    std::vector<bool> seen(s.size(), false);
    for (std::size_t ax : order) {
        if (ax >= s.size() || seen[ax]) throw DimensionError("permute: invalid axis order");
        seen[ax] = true;
    }
    auto in_strides = contiguous_strides(s);
    Shape out(s.size());
    std::vector<std::size_t> src_strides(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        out[i] = s[order[i]];
        src_strides[i] = in_strides[order[i]];
    }
    // gather[i] = source flat index of output element i
    const std::size_t n = x.numel();
    auto gather = std::make_shared<std::vector<std::size_t>>(n);
    {
        std::vector<std::size_t> idx(out.size(), 0);
        std::size_t src = 0;
        for (std::size_t i = 0; i < n; ++i) {
            (*gather)[i] = src;
            for (std::size_t dd = out.size(); dd-- > 0;) {
                ++idx[dd];
                src += src_strides[dd];
                if (idx[dd] < out[dd]) break;
                src -= src_strides[dd] * out[dd];
                idx[dd] = 0;
            }
        }
    }
    const auto& xd = x.node()->data;
    Buffer<T> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = xd[(*gather)[i]];
    return make_result<T>(out, std::move(y), {x.node_ptr()}, [gather](TensorNode<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& gi = in.ensure_grad();
        for (std::size_t i = 0; i < gather->size(); ++i) gi[(*gather)[i]] += self.grad[i];
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const Shape& ref = parts.front().shape();
    if (axis >= ref.size()) throw DimensionError("concat: axis out of range for " + shape_str(ref));
    std::size_t total_axis = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == ref.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) {
            if (i != axis && s[i] != ref[i]) ok = false;
        }
        if (!ok) {
            throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(ref) +
                                 " along axis " + std::to_string(axis));
        }
        total_axis += s[axis];
    }
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
    for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
    Shape out = ref;
    out[axis] = total_axis;
    Buffer<T> y(shape_numel(out));
    std::vector<std::size_t> chunk(parts.size());
    std::vector<NodePtr<T>> inputs;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        chunk[p] = parts[p].dim(axis) * inner;
        inputs.push_back(parts[p].node_ptr());
    }
    const std::size_t row = total_axis * inner;
    for (std::size_t o = 0; o < outer; ++o) {
        std::size_t col = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const T* src = parts[p].data().data() + o * chunk[p];
            std::copy(src, src + chunk[p], y.begin() + static_cast<std::ptrdiff_t>(o * row + col));
            col += chunk[p];
        }
    }
    return make_result<T>(out, std::move(y), std::move(inputs), [outer, row, chunk](TensorNode<T>& self) {
        for (std::size_t o = 0; o < outer; ++o) {
            std::size_t col = 0;
            for (std::size_t p = 0; p < chunk.size(); ++p) {
                auto& in = *self.inputs[p];
                if (in.requires_grad) {
                    auto& gi = in.ensure_grad();
                    for (std::size_t j = 0; j < chunk[p]; ++j) {
                        gi[o * chunk[p] + j] += self.grad[o * row + col + j];
                    }
                }
                col += chunk[p];
            }
        }
    });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T p, std::mt19937_64& rng, bool training) {
    if (!training || p <= T(0)) return x;
    if (p >= T(1)) throw ContractError("dropout: rate must be < 1");
    const T keep_scale = T(1) / (T(1) - p);
    Buffer<T> mask(x.numel());
    for (auto& m : mask) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        m = u < static_cast<double>(p) ? T(0) : keep_scale;
    }
    auto shared_mask = std::make_shared<Buffer<T>>(std::move(mask));
    const auto& xd = x.node()->data;
    Buffer<T> y(xd.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xd[i] * (*shared_mask)[i];
    return make_result<T>(x.shape(), std::move(y), {x.node_ptr()}, [shared_mask](TensorNode<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& gi = in.ensure_grad();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i] * (*shared_mask)[i];
    });
}

template <typename T>
Tensor<T> dilated_conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         std::size_t dilation) {
    if (x.rank() != 3) throw DimensionError("dilated_conv1d: input must be [B, C, T], got " + shape_str(x.shape()));
    if (weight.rank() != 3) {
        throw DimensionError("dilated_conv1d: weight must be [C_out, C_in, K], got " + shape_str(weight.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t cin = x.dim(1);
    const std::size_t len = x.dim(2);
    const std::size_t cout = weight.dim(0);
    const std::size_t ksize = weight.dim(2);
    if (weight.dim(1) != cin) {
        throw DimensionError("dilated_conv1d: channel mismatch, input " + shape_str(x.shape()) + " vs weight " +
                             shape_str(weight.shape()));
    }
    if (ksize % 2 == 0) throw DimensionError("dilated_conv1d: kernel size must be odd");
    if (dilation < 1) throw DimensionError("dilated_conv1d: dilation must be >= 1");
    if (bias.defined() && bias.shape() != Shape{cout}) {
        throw DimensionError("dilated_conv1d: bias " + shape_str(bias.shape()) + " does not match C_out=" +
                             std::to_string(cout));
    }
    const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>((ksize - 1) / 2);
    const std::ptrdiff_t dil = static_cast<std::ptrdiff_t>(dilation);
    const std::ptrdiff_t tlen = static_cast<std::ptrdiff_t>(len);
    const std::size_t patch = cin * ksize;

    // Unfolded input: cols[b][(c*K + t), p] = x[b, c, p + l*(t - half)].
    auto cols = std::make_shared<Buffer<T>>(batch * patch * len, T(0));
    const auto& xd = x.node()->data;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < cin; ++c) {
            const T* src = xd.data() + (b * cin + c) * len;
            for (std::size_t t = 0; t < ksize; ++t) {
                T* dst = cols->data() + (b * patch + c * ksize + t) * len;
                const std::ptrdiff_t shift = dil * (static_cast<std::ptrdiff_t>(t) - half);
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
                const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(tlen, tlen - shift);
                for (std::ptrdiff_t p = lo; p < hi; ++p) dst[p] = src[p + shift];
            }
        }
    }
    Buffer<T> y(batch * cout * len);
    ConstMap<T> w(weight.data().data(), ei(cout), ei(patch));
    for (std::size_t b = 0; b < batch; ++b) {
        MutMap<T> yb(y.data() + b * cout * len, ei(cout), ei(len));
        yb.noalias() = w * ConstMap<T>(cols->data() + b * patch * len, ei(patch), ei(len));
        if (bias.defined()) {
            for (std::size_t o = 0; o < cout; ++o) yb.row(ei(o)).array() += bias.data()[o];
        }
    }
    std::vector<NodePtr<T>> inputs{x.node_ptr(), weight.node_ptr()};
    if (bias.defined()) inputs.push_back(bias.node_ptr());
    return make_result<T>(
        {batch, cout, len}, std::move(y), std::move(inputs),
        [=](TensorNode<T>& self) {
            auto& nx = *self.inputs[0];
            auto& nw = *self.inputs[1];
            TensorNode<T>* nb = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
            ConstMap<T> wmat(nw.data.data(), ei(cout), ei(patch));
            RowMat<T> dcols(ei(patch), ei(len));
            for (std::size_t b = 0; b < batch; ++b) {
                ConstMap<T> g(self.grad.data() + b * cout * len, ei(cout), ei(len));
                ConstMap<T> cb(cols->data() + b * patch * len, ei(patch), ei(len));
                if (nw.requires_grad) {
                    MutMap<T>(nw.ensure_grad().data(), ei(cout), ei(patch)).noalias() += g * cb.transpose();
                }
                if (nb && nb->requires_grad) {
                    auto& gb = nb->ensure_grad();
                    for (std::size_t o = 0; o < cout; ++o) gb[o] += g.row(ei(o)).sum();
                }
                if (nx.requires_grad) {
                    dcols.noalias() = wmat.transpose() * g;
                    if (fault::corrupt_conv_backward()) dcols *= T(1.01);
                    T* gx = nx.ensure_grad().data();
                    for (std::size_t c = 0; c < cin; ++c) {
                        T* dst = gx + (b * cin + c) * len;
                        for (std::size_t t = 0; t < ksize; ++t) {
                            const T* src = dcols.data() + (c * ksize + t) * len;
                            const std::ptrdiff_t shift = dil * (static_cast<std::ptrdiff_t>(t) - half);
                            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
                            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(tlen, tlen - shift);
                            for (std::ptrdiff_t p = lo; p < hi; ++p) dst[p + shift] += src[p];
                        }
                    }
                }
            }
        });
}

#define DCTM_INSTANTIATE_OPS(T)                                                                      \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                                \
    template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                           \
    template Tensor<T> tanh<T>(const Tensor<T>&);                                                    \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                 \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                    \
    template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);                                    \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);       \
    template Tensor<T> sum<T>(const Tensor<T>&);                                                     \
    template Tensor<T> mean<T>(const Tensor<T>&);                                                    \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                          \
    template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<std::size_t>&);                \
    template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                        \
    template Tensor<T> dropout<T>(const Tensor<T>&, T, std::mt19937_64&, bool);                      \
    template Tensor<T> dilated_conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);

DCTM_INSTANTIATE_OPS(float)
DCTM_INSTANTIATE_OPS(double)

} // namespace dctm
