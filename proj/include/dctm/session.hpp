#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dctm/modality.hpp"

namespace dctm {

enum class Role { Expert, Novice };

std::string to_string(Role role);
Role parse_role(const std::string& text);

// Per-frame feature matrix of one modality, row-major [frames x channels].
struct ModalityStream {
    Modality modality = Modality::Head;
    std::vector<std::string> feature_names;
    std::size_t frames = 0;
    std::size_t channels = 0;
    std::vector<double> features;
    std::vector<std::uint8_t> valid;  // 0 where the source row held NaN cells

    double at(std::size_t frame, std::size_t channel) const { return features[frame * channels + channel]; }
    double& at(std::size_t frame, std::size_t channel) { return features[frame * channels + channel]; }
};

struct Session {
    std::string id;
    Role role = Role::Expert;
    std::array<ModalityStream, kNumModalities> streams;
    std::vector<double> labels;       // empty for unlabeled sessions
    std::vector<std::uint8_t> mask;   // 1 where the frame counts toward loss/metrics
    std::vector<std::string> warnings;

    std::size_t frames() const { return streams[0].frames; }
    bool labeled() const { return !labels.empty(); }
    const ModalityStream& stream(Modality m) const { return streams[index_of(m)]; }
    ModalityStream& stream(Modality m) { return streams[index_of(m)]; }
};

} // namespace dctm
