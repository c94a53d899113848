#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dctm/data.hpp"
#include "dctm/model.hpp"

namespace dctm {

/// Full resolved run configuration. Defaults mirror the reference recipe:
/// conv kernels 5,5,3 at dilation 4, 4+4 transformer layers, 8 heads,
/// hidden 128, Adam at lr 1e-6 for 30 epochs over 64-frame windows.
///
/// Text form is flat `key = value` lines with dotted keys; `#` starts a
/// comment. Lists are comma-separated; ablate.modalities separates groups
/// with ';'.
struct DctmConfig {
    // conv
    ConvMode conv_mode = ConvMode::Dilated;
    std::vector<std::size_t> kernels{5, 5, 3};
    std::vector<std::size_t> dilations{4, 4, 4};
    // Per-layer output channels of every modality's stack. 64 is a guess:
    // three stacks concatenate to 192 before projection to hidden 128.
    std::vector<std::size_t> channels{64, 64, 64};
    Activation conv_activation = Activation::Relu;

    // fusion
    FusionKind fusion = FusionKind::SelfAttentionConcat;
    std::vector<Modality> fusion_order{Modality::Head, Modality::Pose, Modality::Voice};
    std::vector<Modality> modalities{Modality::Head, Modality::Pose, Modality::Voice};

    TransformerConfig transformer;
    // Feature counts per modality; 0 = resolve from the training data.
    std::array<std::size_t, kNumModalities> input_dims{0, 0, 0};

    // data
    std::size_t window = 64;
    std::size_t stride = 32;
    SubjectFilter subject = SubjectFilter::Both;
    std::string train_dir;
    std::string val_dir;
    std::string test_dir;
    std::string output_dir = "runs/dctm";

    // optimization
    double lr = 1e-6;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t max_steps = 0;     // 0 = no cap
    double early_stop_ccc = 0.0;   // stop once validation CCC reaches this; 0 = off
    std::uint64_t seed = 42;

    // gen-synth
    SyntheticSpec synth;
    std::size_t synth_train = 20;
    std::size_t synth_val = 5;
    std::size_t synth_test = 0;

    // ablate grid
    std::vector<ConvMode> ablate_conv{ConvMode::Traditional, ConvMode::Dilated};
    std::vector<FusionKind> ablate_fusion{FusionKind::SelfAttentionConcat, FusionKind::GatedMultimodal};
    std::vector<SubjectFilter> ablate_subject{SubjectFilter::Both};
    std::vector<std::vector<Modality>> ablate_modalities{{Modality::Head, Modality::Pose, Modality::Voice}};

    void set(const std::string& key, const std::string& value);
    /// Every key with its resolved value, in a stable order.
    std::vector<std::pair<std::string, std::string>> entries() const;
    static std::vector<std::string> keys();

    void validate() const;

    // Active modalities in fusion order.
    std::vector<Modality> active_modalities() const;
    ModelSpec model_spec() const;

    void apply_text(const std::string& text, const std::string& origin = "<config>");
    void apply_file(const std::filesystem::path& path);
    std::string to_text() const;
};

/// Shortest decimal text that round-trips the double.
std::string format_number(double v);

} // namespace dctm
