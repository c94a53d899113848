#include "dctm/fusion.hpp"

namespace dctm {

FusionKind parse_fusion_kind(const std::string& text) {
    if (text == "sa") return FusionKind::SelfAttentionConcat;
    if (text == "gmu") return FusionKind::GatedMultimodal;
    throw ConfigError("unknown fusion '" + text + "' (expected sa|gmu)");
}

std::string to_string(FusionKind kind) { return kind == FusionKind::SelfAttentionConcat ? "sa" : "gmu"; }

namespace {

template <typename T>
void check_aligned(const std::vector<Tensor<T>>& features, const char* who) {
    if (features.empty()) throw ContractError(std::string(who) + ": no modality inputs");
    const auto& ref = features.front();
    for (const auto& f : features) {
        if (f.rank() != 3) throw DimensionError(std::string(who) + ": expected [B, C, T], got " + shape_str(f.shape()));
        if (f.dim(0) != ref.dim(0) || f.dim(2) != ref.dim(2)) {
            throw AlignmentError(std::string(who) + ": modality streams disagree on batch/frames: " +
                                 shape_str(ref.shape()) + " vs " + shape_str(f.shape()));
        }
    }
}

template <typename T>
Tensor<T> to_tokens(const Tensor<T>& x) {
    return permute(x, {0, 2, 1});
}

} // namespace

template <typename T>
GmuUnit<T>::GmuUnit(const std::string& name, std::string first, std::string second, std::size_t d1,
                    std::size_t d2, std::size_t d, std::mt19937_64& rng)
    : first_name(std::move(first)),
      second_name(std::move(second)),
      transform1(name + ".transform1", d1, d, rng, true, LinearInit::FanIn),
      transform2(name + ".transform2", d2, d, rng, true, LinearInit::FanIn),
      gate(name + ".gate", d1 + d2, d, rng, true, LinearInit::FanIn) {}

template <typename T>
void GmuUnit<T>::collect(std::vector<Tensor<T>>& out) const {
    transform1.collect(out);
    transform2.collect(out);
    gate.collect(out);
}

template <typename T>
GmuOutput<T> gmu_fuse(const Tensor<T>& x1, const Tensor<T>& x2, const GmuUnit<T>& unit) {
    auto check = [](const Tensor<T>& x, const Linear<T>& lin, const std::string& who) {
        if (x.rank() != 3 || x.shape().back() != lin.in_features()) {
            throw DimensionError("gmu: input '" + who + "' has shape " + shape_str(x.shape()) + ", expected [B, T, " +
                                 std::to_string(lin.in_features()) + "]");
        }
    };
    check(x1, unit.transform1, unit.first_name);
    check(x2, unit.transform2, unit.second_name);
    if (x1.dim(0) != x2.dim(0) || x1.dim(1) != x2.dim(1)) {
        throw AlignmentError("gmu: inputs '" + unit.first_name + "' " + shape_str(x1.shape()) + " and '" +
                             unit.second_name + "' " + shape_str(x2.shape()) + " are not aligned");
    }
    Tensor<T> h1 = tanh(unit.transform1(x1));
    Tensor<T> h2 = tanh(unit.transform2(x2));
    Tensor<T> z = sigmoid(unit.gate(concat<T>({x1, x2}, 2)));
    Tensor<T> fused = add(mul(z, h1), mul(add_scalar(scale(z, T(-1)), T(1)), h2));
    return {fused, z};
}

template <typename T>
Tensor<T> fuse_concat(const std::vector<Tensor<T>>& features, const Linear<T>& projection) {
    check_aligned(features, "fuse_concat");
    Tensor<T> joined = features.size() == 1 ? features.front() : concat(features, 1);
    return projection(to_tokens(joined));
}

template <typename T>
HierarchicalOutput<T> fuse_gated_hierarchical(const std::vector<Tensor<T>>& features,
                                              const std::vector<GmuUnit<T>>& units) {
    check_aligned(features, "fuse_gated_hierarchical");
    if (units.size() + 1 != features.size()) {
        throw ContractError("fuse_gated_hierarchical: " + std::to_string(features.size()) + " inputs need " +
                            std::to_string(features.size() - 1) + " units");
    }
    HierarchicalOutput<T> out;
    Tensor<T> acc = to_tokens(features[0]);
    for (std::size_t i = 0; i < units.size(); ++i) {
        auto step = gmu_fuse(acc, to_tokens(features[i + 1]), units[i]);
        acc = step.fused;
        out.gates.push_back(step.gate);
    }
    out.fused = acc;
    return out;
}

template <typename T>
Fusion<T>::Fusion(FusionKind kind, std::vector<Modality> order, std::vector<std::size_t> channels,
                  std::size_t hidden, std::mt19937_64& rng)
    : kind_(kind), order_(std::move(order)), channels_(std::move(channels)) {
    if (order_.empty() || order_.size() != channels_.size()) {
        throw ContractError("fusion: need one channel count per active modality");
    }
    if (kind_ == FusionKind::SelfAttentionConcat) {
        std::size_t total = 0;
        for (auto c : channels_) total += c;
        projection_ = Linear<T>("fusion.proj", total, hidden, rng, true, LinearInit::FanIn);
        return;
    }
    if (order_.size() == 1) {
        projection_ = Linear<T>("fusion.solo", channels_[0], hidden, rng, true, LinearInit::FanIn);
        return;
    }
    std::string acc_name = to_string(order_[0]);
    std::size_t acc_dim = channels_[0];
    for (std::size_t i = 1; i < order_.size(); ++i) {
        units_.emplace_back("fusion.gmu" + std::to_string(i - 1), acc_name, to_string(order_[i]), acc_dim,
                            channels_[i], hidden, rng);
        acc_name = "(" + acc_name + "+" + to_string(order_[i]) + ")";
        acc_dim = hidden;
    }
}

template <typename T>
FusionOutput<T> Fusion<T>::forward(const std::vector<Tensor<T>>& features) const {
    if (features.size() != order_.size()) {
        throw ContractError("fusion: expected " + std::to_string(order_.size()) + " modality inputs, got " +
                            std::to_string(features.size()));
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].rank() != 3 || features[i].dim(1) != channels_[i]) {
            throw DimensionError("fusion: modality '" + to_string(order_[i]) + "' has shape " +
                                 shape_str(features[i].shape()) + ", expected " + std::to_string(channels_[i]) +
                                 " channels");
        }
    }
    if (kind_ == FusionKind::SelfAttentionConcat) return {fuse_concat(features, projection_), {}};
    if (order_.size() == 1) {
        check_aligned(features, "fusion");
        return {tanh(projection_(to_tokens(features[0]))), {}};
    }
    auto h = fuse_gated_hierarchical(features, units_);
    return {h.fused, h.gates};
}

template <typename T>
void Fusion<T>::collect(std::vector<Tensor<T>>& out) const {
    if (projection_.weight.defined()) projection_.collect(out);
    for (const auto& u : units_) u.collect(out);
}

#define DCTM_INSTANTIATE_FUSION(T)                                                                        \
    template struct GmuUnit<T>;                                                                           \
    template GmuOutput<T> gmu_fuse<T>(const Tensor<T>&, const Tensor<T>&, const GmuUnit<T>&);             \
    template Tensor<T> fuse_concat<T>(const std::vector<Tensor<T>>&, const Linear<T>&);                   \
    template HierarchicalOutput<T> fuse_gated_hierarchical<T>(const std::vector<Tensor<T>>&,              \
                                                              const std::vector<GmuUnit<T>>&);            \
    template class Fusion<T>;

DCTM_INSTANTIATE_FUSION(float)
DCTM_INSTANTIATE_FUSION(double)

} // namespace dctm
