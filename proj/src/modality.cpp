#include "dctm/modality.hpp"

#include <algorithm>
#include <sstream>

#include "dctm/errors.hpp"

namespace dctm {

std::string to_string(Modality m) {
    switch (m) {
    case Modality::Head: return "head";
    case Modality::Pose: return "pose";
    case Modality::Voice: return "voice";
    }
    return "?";
}

Modality parse_modality(const std::string& text) {
    if (text == "head") return Modality::Head;
    if (text == "pose") return Modality::Pose;
    if (text == "voice") return Modality::Voice;
    throw ConfigError("unknown modality '" + text + "' (expected head|pose|voice)");
}

std::vector<Modality> parse_modality_list(const std::string& text) {
    std::vector<Modality> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (item.empty()) continue;
        Modality m = parse_modality(item);
        if (std::find(out.begin(), out.end(), m) != out.end()) {
            throw ConfigError("modality '" + item + "' listed twice in '" + text + "'");
        }
        out.push_back(m);
    }
    if (out.empty()) throw ConfigError("empty modality list");
    return out;
}

std::string to_string(const std::vector<Modality>& list) {
    std::string s;
    for (std::size_t i = 0; i < list.size(); ++i) {
        if (i) s += ',';
        s += to_string(list[i]);
    }
    return s;
}

} // namespace dctm
