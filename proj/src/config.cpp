#include "dctm/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dctm {

std::string format_number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) return std::to_string(v);
    return std::string(buf, end);
}

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    const std::string t = trim(text);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + text + "'");
    }
    return v;
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const std::string t = trim(text);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + text + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& item : split(text, ',')) out.push_back(static_cast<std::size_t>(parse_u64(key, item)));
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

template <std::size_t N, typename Fn>
auto parse_fixed(const std::string& key, const std::string& text, Fn parse_one) {
    auto items = split(text, ',');
    if (items.size() != N) {
        throw ConfigError("config key '" + key + "': expected " + std::to_string(N) + " comma-separated values");
    }
    std::array<decltype(parse_one(key, items[0])), N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = parse_one(key, items[i]);
    return out;
}

template <typename T>
std::string join(const std::vector<T>& values, const std::function<std::string(const T&)>& fmt, char sep = ',') {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += sep;
        s += fmt(values[i]);
    }
    return s;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    return join<std::size_t>(v, [](const std::size_t& x) { return std::to_string(x); });
}

template <std::size_t N, typename T>
std::string join_array(const std::array<T, N>& a) {
    std::string s;
    for (std::size_t i = 0; i < N; ++i) {
        if (i) s += ',';
        if constexpr (std::is_floating_point_v<T>) {
            s += format_number(a[i]);
        } else {
            s += std::to_string(a[i]);
        }
    }
    return s;
}

struct KeyHandler {
    std::function<void(DctmConfig&, const std::string& key, const std::string& value)> set;
    std::function<std::string(const DctmConfig&)> get;
};

const std::vector<std::pair<std::string, KeyHandler>>& key_table() {
    static const std::vector<std::pair<std::string, KeyHandler>> table = [] {
        std::vector<std::pair<std::string, KeyHandler>> t;
        auto add = [&](std::string key, KeyHandler h) { t.emplace_back(std::move(key), std::move(h)); };

        add("conv.mode", {[](DctmConfig& c, const std::string&, const std::string& v) { c.conv_mode = parse_conv_mode(trim(v)); },
                          [](const DctmConfig& c) { return to_string(c.conv_mode); }});
        add("conv.kernels", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.kernels = parse_sizes(k, v); },
                             [](const DctmConfig& c) { return join_sizes(c.kernels); }});
        add("conv.dilations", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.dilations = parse_sizes(k, v); },
                               [](const DctmConfig& c) { return join_sizes(c.dilations); }});
        add("conv.channels", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.channels = parse_sizes(k, v); },
                              [](const DctmConfig& c) { return join_sizes(c.channels); }});
        add("conv.activation", {[](DctmConfig& c, const std::string&, const std::string& v) { c.conv_activation = parse_activation(trim(v)); },
                                [](const DctmConfig& c) { return to_string(c.conv_activation); }});
        add("fusion", {[](DctmConfig& c, const std::string&, const std::string& v) { c.fusion = parse_fusion_kind(trim(v)); },
                       [](const DctmConfig& c) { return to_string(c.fusion); }});
        add("fusion.order", {[](DctmConfig& c, const std::string&, const std::string& v) { c.fusion_order = parse_modality_list(v); },
                             [](const DctmConfig& c) { return to_string(c.fusion_order); }});
        add("modalities", {[](DctmConfig& c, const std::string&, const std::string& v) { c.modalities = parse_modality_list(v); },
                           [](const DctmConfig& c) { return to_string(c.modalities); }});
        add("model.hidden", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.transformer.hidden = parse_u64(k, v); },
                             [](const DctmConfig& c) { return std::to_string(c.transformer.hidden); }});
        add("model.heads", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.transformer.heads = parse_u64(k, v); },
                            [](const DctmConfig& c) { return std::to_string(c.transformer.heads); }});
        add("model.encoder_layers", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.transformer.encoder_layers = parse_u64(k, v); },
                                     [](const DctmConfig& c) { return std::to_string(c.transformer.encoder_layers); }});
        add("model.decoder_layers", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.transformer.decoder_layers = parse_u64(k, v); },
                                     [](const DctmConfig& c) { return std::to_string(c.transformer.decoder_layers); }});
        add("model.ff_dim", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.transformer.ff_dim = parse_u64(k, v); },
                             [](const DctmConfig& c) { return std::to_string(c.transformer.ff_dim); }});
        add("model.dropout", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.transformer.dropout = parse_double(k, v); },
                              [](const DctmConfig& c) { return format_number(c.transformer.dropout); }});
        add("model.positional", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.transformer.positional = parse_bool(k, v); },
                                 [](const DctmConfig& c) { return std::string(c.transformer.positional ? "true" : "false"); }});
        add("model.input_dims", {[](DctmConfig& c, const std::string& k, const std::string& v) {
                                     c.input_dims = parse_fixed<kNumModalities>(k, v, [](const std::string& kk, const std::string& s) {
                                         return static_cast<std::size_t>(parse_u64(kk, s));
                                     });
                                 },
                                 [](const DctmConfig& c) { return join_array(c.input_dims); }});
        add("data.window", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.window = parse_u64(k, v); },
                            [](const DctmConfig& c) { return std::to_string(c.window); }});
        add("data.stride", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.stride = parse_u64(k, v); },
                            [](const DctmConfig& c) { return std::to_string(c.stride); }});
        add("data.train", {[](DctmConfig& c, const std::string&, const std::string& v) { c.train_dir = trim(v); },
                           [](const DctmConfig& c) { return c.train_dir; }});
        add("data.val", {[](DctmConfig& c, const std::string&, const std::string& v) { c.val_dir = trim(v); },
                         [](const DctmConfig& c) { return c.val_dir; }});
        add("data.test", {[](DctmConfig& c, const std::string&, const std::string& v) { c.test_dir = trim(v); },
                          [](const DctmConfig& c) { return c.test_dir; }});
        add("subject", {[](DctmConfig& c, const std::string&, const std::string& v) { c.subject = parse_subject_filter(trim(v)); },
                        [](const DctmConfig& c) { return to_string(c.subject); }});
        add("output", {[](DctmConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); },
                       [](const DctmConfig& c) { return c.output_dir; }});
        add("train.lr", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.lr = parse_double(k, v); },
                         [](const DctmConfig& c) { return format_number(c.lr); }});
        add("train.epochs", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.epochs = parse_u64(k, v); },
                             [](const DctmConfig& c) { return std::to_string(c.epochs); }});
        add("train.batch_size", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.batch_size = parse_u64(k, v); },
                                 [](const DctmConfig& c) { return std::to_string(c.batch_size); }});
        add("train.beta1", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.beta1 = parse_double(k, v); },
                            [](const DctmConfig& c) { return format_number(c.beta1); }});
        add("train.beta2", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.beta2 = parse_double(k, v); },
                            [](const DctmConfig& c) { return format_number(c.beta2); }});
        add("train.eps", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.adam_eps = parse_double(k, v); },
                          [](const DctmConfig& c) { return format_number(c.adam_eps); }});
        add("train.max_steps", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.max_steps = parse_u64(k, v); },
                                [](const DctmConfig& c) { return std::to_string(c.max_steps); }});
        add("train.early_stop_ccc", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.early_stop_ccc = parse_double(k, v); },
                                     [](const DctmConfig& c) { return format_number(c.early_stop_ccc); }});
        add("seed", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); },
                     [](const DctmConfig& c) { return std::to_string(c.seed); }});
        add("synth.train", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.synth_train = parse_u64(k, v); },
                            [](const DctmConfig& c) { return std::to_string(c.synth_train); }});
        add("synth.val", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.synth_val = parse_u64(k, v); },
                          [](const DctmConfig& c) { return std::to_string(c.synth_val); }});
        add("synth.test", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.synth_test = parse_u64(k, v); },
                           [](const DctmConfig& c) { return std::to_string(c.synth_test); }});
        add("synth.frames", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.synth.frames = parse_u64(k, v); },
                             [](const DctmConfig& c) { return std::to_string(c.synth.frames); }});
        add("synth.dims", {[](DctmConfig& c, const std::string& k, const std::string& v) {
                               c.synth.dims = parse_fixed<kNumModalities>(k, v, [](const std::string& kk, const std::string& s) {
                                   return static_cast<std::size_t>(parse_u64(kk, s));
                               });
                           },
                           [](const DctmConfig& c) { return join_array(c.synth.dims); }});
        add("synth.snr", {[](DctmConfig& c, const std::string& k, const std::string& v) {
                              c.synth.snr = parse_fixed<kNumModalities>(k, v, parse_double);
                          },
                          [](const DctmConfig& c) { return join_array(c.synth.snr); }});
        add("synth.seed", {[](DctmConfig& c, const std::string& k, const std::string& v) { c.synth.seed = parse_u64(k, v); },
                           [](const DctmConfig& c) { return std::to_string(c.synth.seed); }});
        add("ablate.conv", {[](DctmConfig& c, const std::string&, const std::string& v) {
                                c.ablate_conv.clear();
                                for (const auto& s : split(v, ',')) c.ablate_conv.push_back(parse_conv_mode(s));
                            },
                            [](const DctmConfig& c) {
                                return join<ConvMode>(c.ablate_conv, [](const ConvMode& m) { return to_string(m); });
                            }});
        add("ablate.fusion", {[](DctmConfig& c, const std::string&, const std::string& v) {
                                  c.ablate_fusion.clear();
                                  for (const auto& s : split(v, ',')) c.ablate_fusion.push_back(parse_fusion_kind(s));
                              },
                              [](const DctmConfig& c) {
                                  return join<FusionKind>(c.ablate_fusion, [](const FusionKind& f) { return to_string(f); });
                              }});
        add("ablate.subject", {[](DctmConfig& c, const std::string&, const std::string& v) {
                                   c.ablate_subject.clear();
                                   for (const auto& s : split(v, ',')) c.ablate_subject.push_back(parse_subject_filter(s));
                               },
                               [](const DctmConfig& c) {
                                   return join<SubjectFilter>(c.ablate_subject, [](const SubjectFilter& f) { return to_string(f); });
                               }});
        add("ablate.modalities", {[](DctmConfig& c, const std::string&, const std::string& v) {
                                      c.ablate_modalities.clear();
                                      for (const auto& g : split(v, ';')) c.ablate_modalities.push_back(parse_modality_list(g));
                                  },
                                  [](const DctmConfig& c) {
                                      return join<std::vector<Modality>>(
                                          c.ablate_modalities, [](const std::vector<Modality>& g) { return to_string(g); }, ';');
                                  }});
        return t;
    }();
    return table;
}

} // namespace

void DctmConfig::set(const std::string& key, const std::string& value) {
    for (const auto& [name, handler] : key_table()) {
        if (name == key) {
            handler.set(*this, key, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> DctmConfig::entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, handler] : key_table()) out.emplace_back(name, handler.get(*this));
    return out;
}

std::vector<std::string> DctmConfig::keys() {
    std::vector<std::string> out;
    for (const auto& entry : key_table()) out.push_back(entry.first);
    return out;
}

void DctmConfig::validate() const {
    if (conv_mode != ConvMode::None) {
        if (kernels.empty()) throw ConfigError("conv.kernels must not be empty");
        if (kernels.size() != dilations.size() || kernels.size() != channels.size()) {
            throw ConfigError("conv.kernels, conv.dilations and conv.channels must have the same length");
        }
        for (auto k : kernels) {
            if (k == 0 || k % 2 == 0) throw ConfigError("conv.kernels must be positive odd integers");
        }
        for (auto d : dilations) {
            if (d == 0) throw ConfigError("conv.dilations must be positive");
        }
        for (auto c : channels) {
            if (c == 0) throw ConfigError("conv.channels must be positive");
        }
    }
    try {
        transformer.validate();
    } catch (const ConfigError&) {
        throw;
    }
    if (window == 0 || stride == 0) throw ConfigError("data.window and data.stride must be positive");
    if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (epochs == 0) throw ConfigError("train.epochs must be positive");
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("train.eps must be positive");
    for (Modality m : modalities) {
        if (std::find(fusion_order.begin(), fusion_order.end(), m) == fusion_order.end()) {
            throw ConfigError("modality '" + to_string(m) + "' missing from fusion.order");
        }
    }
}

std::vector<Modality> DctmConfig::active_modalities() const {
    std::vector<Modality> out;
    for (Modality m : fusion_order) {
        if (std::find(modalities.begin(), modalities.end(), m) != modalities.end()) out.push_back(m);
    }
    return out;
}

ModelSpec DctmConfig::model_spec() const {
    validate();
    ModelSpec spec;
    spec.modalities = active_modalities();
    spec.input_dims = input_dims;
    spec.conv_mode = conv_mode;
    spec.kernels = kernels;
    spec.dilations = dilations;
    spec.channels = channels;
    spec.conv_activation = conv_activation;
    spec.fusion = fusion;
    spec.transformer = transformer;
    spec.seed = seed;
    return spec;
}

void DctmConfig::apply_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void DctmConfig::apply_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_text(ss.str(), path.string());
}

std::string DctmConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
    return out;
}

} // namespace dctm
