#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace dctm {

enum class Modality : std::size_t { Head = 0, Pose = 1, Voice = 2 };

inline constexpr std::size_t kNumModalities = 3;
inline constexpr std::array<Modality, kNumModalities> kAllModalities{Modality::Head, Modality::Pose,
                                                                     Modality::Voice};

std::string to_string(Modality m);
Modality parse_modality(const std::string& text);
// Comma-separated list, e.g. "head,pose,voice". Duplicates are rejected.
std::vector<Modality> parse_modality_list(const std::string& text);
std::string to_string(const std::vector<Modality>& list);

inline std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

} // namespace dctm
