#include "dctm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "dctm/random.hpp"

namespace fs = std::filesystem;

namespace dctm {

std::string to_string(Role role) { return role == Role::Expert ? "expert" : "novice"; }

Role parse_role(const std::string& text) {
    if (text == "expert") return Role::Expert;
    if (text == "novice") return Role::Novice;
    throw ConfigError("unknown role '" + text + "' (expected expert|novice)");
}

SubjectFilter parse_subject_filter(const std::string& text) {
    if (text == "expert") return SubjectFilter::Expert;
    if (text == "novice") return SubjectFilter::Novice;
    if (text == "both") return SubjectFilter::Both;
    throw ConfigError("unknown subject filter '" + text + "' (expected expert|novice|both)");
}

std::string to_string(SubjectFilter filter) {
    switch (filter) {
    case SubjectFilter::Expert: return "expert";
    case SubjectFilter::Novice: return "novice";
    case SubjectFilter::Both: return "both";
    }
    return "?";
}

bool subject_matches(SubjectFilter filter, Role role) {
    return filter == SubjectFilter::Both || (filter == SubjectFilter::Expert) == (role == Role::Expert);
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

// NaN for empty/"nan" cells; nullopt when the text is not a number.
std::optional<double> parse_cell(const std::string& cell) {
    if (cell.empty() || cell == "nan" || cell == "NaN" || cell == "NAN") return kNaN;
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') return std::nullopt;
    return v;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

CsvTable read_feature_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("missing feature file: " + path.string());
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_csv(line);
        if (table.header.empty()) {
            table.header = cells;
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(table.header.size()) + " columns, found " + std::to_string(cells.size()));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            auto v = parse_cell(c);
            if (!v) throw DataError(path.string() + ":" + std::to_string(line_no) + ": unparsable value '" + c + "'");
            row.push_back(*v);
        }
        table.rows.push_back(std::move(row));
    }
    if (table.header.empty()) throw DataError(path.string() + ": empty file (header row required)");
    return table;
}

std::vector<double> read_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("missing label file: " + path.string());
    std::vector<double> labels;
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string cell = trim(line);
        if (cell.empty()) continue;
        auto v = parse_cell(cell);
        if (!v) {
            if (first) {  // header
                first = false;
                continue;
            }
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": unparsable label '" + cell + "'");
        }
        first = false;
        const std::size_t frame = labels.size();
        if (!std::isnan(*v) && (*v < 0.0 || *v > 1.0)) {
            throw DataError(path.string() + ": label " + cell + " at frame " + std::to_string(frame) +
                            " is outside [0, 1]");
        }
        labels.push_back(*v);
    }
    return labels;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

Session load_session(const SessionFiles& files) {
    Session s;
    s.id = files.id;
    s.role = files.role;
    std::array<CsvTable, kNumModalities> tables;
    for (Modality m : kAllModalities) tables[index_of(m)] = read_feature_csv(files.modality[index_of(m)]);
    std::vector<double> labels;
    if (files.labels) labels = read_labels(*files.labels);

    std::size_t shortest = std::numeric_limits<std::size_t>::max();
    std::size_t longest = 0;
    for (const auto& t : tables) {
        shortest = std::min(shortest, t.rows.size());
        longest = std::max(longest, t.rows.size());
    }
    if (files.labels) {
        shortest = std::min(shortest, labels.size());
        longest = std::max(longest, labels.size());
    }
    if (shortest != longest) {
        std::ostringstream msg;
        const double gap = static_cast<double>(longest - shortest) / static_cast<double>(longest);
        if (gap > kSevereLengthMismatch) msg << "severe ";
        msg << "length mismatch in " << s.id << "/" << to_string(s.role) << ":";
        for (Modality m : kAllModalities) msg << ' ' << to_string(m) << '=' << tables[index_of(m)].rows.size();
        if (files.labels) msg << " labels=" << labels.size();
        msg << "; truncated to " << shortest << " frames";
        s.warnings.push_back(msg.str());
    }
    const std::size_t frames = shortest;

    s.mask.assign(frames, 1);
    for (Modality m : kAllModalities) {
        auto& table = tables[index_of(m)];
        auto& st = s.stream(m);
        st.modality = m;
        st.feature_names = table.header;
        st.frames = frames;
        st.channels = table.header.size();
        st.features.resize(frames * st.channels);
        st.valid.assign(frames, 1);
        for (std::size_t t = 0; t < frames; ++t) {
            for (std::size_t c = 0; c < st.channels; ++c) {
                const double v = table.rows[t][c];
                st.at(t, c) = v;
                if (std::isnan(v) || std::isinf(v)) st.valid[t] = 0;
            }
            if (!st.valid[t]) s.mask[t] = 0;
        }
    }
    if (files.labels) {
        s.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(frames));
        for (std::size_t t = 0; t < frames; ++t) {
            if (std::isnan(s.labels[t])) {
                s.labels[t] = 0.0;
                s.mask[t] = 0;
            }
        }
    }
    return s;
}

SessionFiles session_files(const fs::path& root, const std::string& session_id, Role role) {
    SessionFiles f;
    f.id = session_id;
    f.role = role;
    const fs::path dir = root / session_id;
    for (Modality m : kAllModalities) {
        f.modality[index_of(m)] = dir / (to_string(role) + "." + to_string(m) + ".csv");
    }
    f.labels = dir / (to_string(role) + ".labels.csv");
    return f;
}

std::vector<Session> load_split(const fs::path& root, SubjectFilter filter, bool require_labels) {
    if (!fs::is_directory(root)) throw DataError("data directory not found: " + root.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    std::vector<Session> sessions;
    for (const auto& id : ids) {
        for (Role role : {Role::Expert, Role::Novice}) {
            if (!subject_matches(filter, role)) continue;
            SessionFiles files = session_files(root, id, role);
            bool any = false;
            for (const auto& p : files.modality) any = any || fs::exists(p);
            if (!any) continue;
            if (!fs::exists(*files.labels)) {
                if (require_labels) throw DataError("missing label file: " + files.labels->string());
                files.labels.reset();
            }
            sessions.push_back(load_session(files));
        }
    }
    return sessions;
}

void write_session(const fs::path& root, const Session& session) {
    const fs::path dir = root / session.id;
    fs::create_directories(dir);
    const std::string role = to_string(session.role);
    for (Modality m : kAllModalities) {
        const auto& st = session.stream(m);
        std::ofstream out(dir / (role + "." + to_string(m) + ".csv"));
        if (!out) throw DataError("cannot write session files under " + dir.string());
        for (std::size_t c = 0; c < st.channels; ++c) out << (c ? "," : "") << st.feature_names[c];
        out << '\n';
        for (std::size_t t = 0; t < st.frames; ++t) {
            for (std::size_t c = 0; c < st.channels; ++c) {
                const double v = st.at(t, c);
                out << (c ? "," : "") << (std::isnan(v) ? std::string("nan") : format_double(v));
            }
            out << '\n';
        }
    }
    if (session.labeled()) {
        std::ofstream out(dir / (role + ".labels.csv"));
        out << "engagement\n";
        for (double v : session.labels) out << format_double(v) << '\n';
    }
}

std::vector<Session> filter_subjects(const std::vector<Session>& sessions, SubjectFilter filter) {
    std::vector<Session> out;
    for (const auto& s : sessions) {
        if (subject_matches(filter, s.role)) out.push_back(s);
    }
    return out;
}

NormStats compute_norm_stats(const std::vector<Session>& sessions) {
    if (sessions.empty()) throw DataError("normalization needs at least one session");
    NormStats stats;
    for (Modality m : kAllModalities) {
        const std::size_t k = index_of(m);
        const auto& ref = sessions.front().stream(m);
        stats.names[k] = ref.feature_names;
        std::vector<double> sum(ref.channels, 0.0);
        std::size_t count = 0;
        for (const auto& s : sessions) {
            const auto& st = s.stream(m);
            if (st.channels != ref.channels) {
                throw DataError("session " + s.id + ": modality " + to_string(m) + " has " +
                                std::to_string(st.channels) + " features, expected " + std::to_string(ref.channels));
            }
            for (std::size_t t = 0; t < st.frames; ++t) {
                if (!st.valid[t]) continue;
                ++count;
                for (std::size_t c = 0; c < st.channels; ++c) sum[c] += st.at(t, c);
            }
        }
        std::vector<double> mu(ref.channels, 0.0);
        std::vector<double> sd(ref.channels, 0.0);
        if (count > 0) {
            for (std::size_t c = 0; c < ref.channels; ++c) mu[c] = sum[c] / static_cast<double>(count);
            std::vector<double> sq(ref.channels, 0.0);
            for (const auto& s : sessions) {
                const auto& st = s.stream(m);
                for (std::size_t t = 0; t < st.frames; ++t) {
                    if (!st.valid[t]) continue;
                    for (std::size_t c = 0; c < st.channels; ++c) {
                        const double d = st.at(t, c) - mu[c];
                        sq[c] += d * d;
                    }
                }
            }
            for (std::size_t c = 0; c < ref.channels; ++c) sd[c] = std::sqrt(sq[c] / static_cast<double>(count));
        }
        stats.mean[k] = std::move(mu);
        stats.stddev[k] = std::move(sd);
    }
    return stats;
}

std::vector<Session> normalize(std::vector<Session> sessions, const NormStats& stats) {
    for (auto& s : sessions) {
        for (Modality m : kAllModalities) {
            const std::size_t k = index_of(m);
            auto& st = s.stream(m);
            if (st.channels != stats.mean[k].size()) {
                throw DataError("session " + s.id + ": modality " + to_string(m) + " has " +
                                std::to_string(st.channels) + " features, normalization stats have " +
                                std::to_string(stats.mean[k].size()));
            }
            for (std::size_t t = 0; t < st.frames; ++t) {
                for (std::size_t c = 0; c < st.channels; ++c) {
                    double& v = st.at(t, c);
                    if (!st.valid[t] || std::isnan(v) || std::isinf(v)) {
                        v = 0.0;
                        continue;
                    }
                    const double sd = stats.stddev[k][c];
                    v = (v - stats.mean[k][c]) / (sd < kMinFeatureStd ? 1.0 : sd);
                }
            }
        }
    }
    return sessions;
}

NormalizeResult normalize(std::vector<Session> sessions, const std::optional<NormStats>& stats) {
    NormalizeResult r;
    r.stats = stats ? *stats : compute_norm_stats(sessions);
    r.sessions = normalize(std::move(sessions), r.stats);
    return r;
}

std::vector<Session> denormalize(std::vector<Session> sessions, const NormStats& stats) {
    for (auto& s : sessions) {
        for (Modality m : kAllModalities) {
            const std::size_t k = index_of(m);
            auto& st = s.stream(m);
            for (std::size_t t = 0; t < st.frames; ++t) {
                for (std::size_t c = 0; c < st.channels; ++c) {
                    const double sd = stats.stddev[k][c];
                    st.at(t, c) = st.at(t, c) * (sd < kMinFeatureStd ? 1.0 : sd) + stats.mean[k][c];
                }
            }
        }
    }
    return sessions;
}

void save_norm_stats(const fs::path& path, const NormStats& stats) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write normalization stats: " + path.string());
    out << "feature,mean,std\n";
    for (Modality m : kAllModalities) {
        const std::size_t k = index_of(m);
        for (std::size_t c = 0; c < stats.mean[k].size(); ++c) {
            out << to_string(m) << '.' << stats.names[k][c] << ',' << format_double(stats.mean[k][c]) << ','
                << format_double(stats.stddev[k][c]) << '\n';
        }
    }
}

NormStats load_norm_stats(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read normalization stats: " + path.string());
    NormStats stats;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (line_no == 1) continue;
        auto cells = split_csv(line);
        const auto dot = cells.empty() ? std::string::npos : cells[0].find('.');
        if (cells.size() != 3 || dot == std::string::npos) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected feature,mean,std");
        }
        const std::size_t k = index_of(parse_modality(cells[0].substr(0, dot)));
        auto mu = parse_cell(cells[1]);
        auto sd = parse_cell(cells[2]);
        if (!mu || !sd) throw DataError(path.string() + ":" + std::to_string(line_no) + ": unparsable number");
        stats.names[k].push_back(cells[0].substr(dot + 1));
        stats.mean[k].push_back(*mu);
        stats.stddev[k].push_back(*sd);
    }
    return stats;
}

std::vector<WindowSpan> make_windows(std::size_t frames, std::size_t window, std::size_t stride) {
    if (window == 0) throw ContractError("make_windows: window must be >= 1");
    if (stride == 0) throw ContractError("make_windows: stride must be >= 1");
    std::vector<WindowSpan> spans;
    if (frames == 0) return spans;
    if (frames <= window) {
        spans.push_back({0, frames});
        return spans;
    }
    std::size_t start = 0;
    for (; start + window <= frames; start += stride) spans.push_back({start, window});
    if (spans.back().start + window < frames) spans.push_back({frames - window, window});
    return spans;
}

std::vector<WindowRef> index_windows(const std::vector<Session>& sessions, std::size_t window, std::size_t stride) {
    std::vector<WindowRef> refs;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        for (const auto& span : make_windows(sessions[i].frames(), window, stride)) refs.push_back({i, span});
    }
    return refs;
}

template <typename T>
WindowBatch<T> make_batch(const std::vector<Session>& sessions, std::span<const WindowRef> refs, std::size_t window) {
    if (refs.empty()) throw ContractError("make_batch: no windows");
    WindowBatch<T> batch;
    batch.window = window;
    batch.provenance.assign(refs.begin(), refs.end());
    const std::size_t b_count = refs.size();
    std::array<std::size_t, kNumModalities> channels{};
    for (Modality m : kAllModalities) channels[index_of(m)] = sessions.at(refs[0].session).stream(m).channels;

    std::array<std::vector<T>, kNumModalities> feats;
    for (std::size_t k = 0; k < kNumModalities; ++k) feats[k].assign(b_count * channels[k] * window, T(0));
    std::vector<T> labels(b_count * window, T(0));
    batch.mask.assign(b_count * window, 0);

    for (std::size_t b = 0; b < b_count; ++b) {
        const Session& s = sessions.at(refs[b].session);
        const WindowSpan& span = refs[b].span;
        if (span.start + span.valid > s.frames() || span.valid > window) {
            throw ContractError("make_batch: window exceeds session " + s.id);
        }
        for (Modality m : kAllModalities) {
            const std::size_t k = index_of(m);
            const auto& st = s.stream(m);
            if (st.channels != channels[k]) {
                throw DataError("make_batch: session " + s.id + " modality " + to_string(m) +
                                " feature count differs within batch");
            }
            for (std::size_t c = 0; c < st.channels; ++c) {
                T* dst = feats[k].data() + (b * channels[k] + c) * window;
                for (std::size_t t = 0; t < span.valid; ++t) dst[t] = static_cast<T>(st.at(span.start + t, c));
            }
        }
        for (std::size_t t = 0; t < span.valid; ++t) {
            const std::size_t frame = span.start + t;
            if (s.labeled()) labels[b * window + t] = static_cast<T>(s.labels[frame]);
            batch.mask[b * window + t] = s.labeled() && s.mask[frame] ? 1 : 0;
        }
    }
    for (std::size_t k = 0; k < kNumModalities; ++k) {
        batch.features[k] = Tensor<T>::from({b_count, channels[k], window}, std::move(feats[k]));
    }
    batch.labels = Tensor<T>::from({b_count, window}, std::move(labels));
    return batch;
}

std::vector<double> overlap_average(std::size_t frames, std::span<const WindowSpan> spans,
                                    const std::vector<std::vector<double>>& predictions) {
    if (spans.size() != predictions.size()) {
        throw ContractError("overlap_average: " + std::to_string(predictions.size()) + " predictions for " +
                            std::to_string(spans.size()) + " windows");
    }
    std::vector<double> total(frames, 0.0);
    std::vector<std::size_t> count(frames, 0);
    for (std::size_t w = 0; w < spans.size(); ++w) {
        const auto& span = spans[w];
        if (predictions[w].size() < span.valid || span.start + span.valid > frames) {
            throw ContractError("overlap_average: window " + std::to_string(w) + " is out of range");
        }
        for (std::size_t t = 0; t < span.valid; ++t) {
            total[span.start + t] += predictions[w][t];
            ++count[span.start + t];
        }
    }
    for (std::size_t t = 0; t < frames; ++t) {
        if (count[t] == 0) throw ContractError("overlap_average: frame " + std::to_string(t) + " is not covered");
        total[t] /= static_cast<double>(count[t]);
    }
    return total;
}

std::vector<Session> generate_synthetic(const SyntheticSpec& spec) {
    for (double snr : spec.snr) {
        if (!(snr >= 0.0)) throw ConfigError("synthetic: snr must be >= 0");
    }
    if (spec.frames == 0) throw ConfigError("synthetic: frames must be >= 1");
    constexpr std::size_t kSignals = 3;
    constexpr std::size_t kLag = 5;
    constexpr double kWalkBound = 10.0;

    std::array<std::vector<double>, kNumModalities> mixing;
    for (Modality m : kAllModalities) {
        const std::size_t k = index_of(m);
        if (spec.dims[k] == 0) throw ConfigError("synthetic: modality " + to_string(m) + " needs >= 1 feature");
        std::mt19937_64 rng(derive_seed(spec.seed, 1 + k));
        std::normal_distribution<double> normal(0.0, 1.0);
        mixing[k].resize(spec.dims[k] * kSignals);
        for (auto& w : mixing[k]) w = normal(rng);
    }

    std::vector<Session> sessions;
    for (std::size_t i = 0; i < spec.sessions; ++i) {
        const std::size_t frames = spec.frames;
        std::mt19937_64 walk_rng(derive_seed(spec.seed, 100 + i));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> walk(frames);
        double pos = 0.0;
        for (std::size_t t = 0; t < frames; ++t) {
            pos += normal(walk_rng);
            if (pos > kWalkBound) pos = 2.0 * kWalkBound - pos;
            if (pos < -kWalkBound) pos = -2.0 * kWalkBound - pos;
            walk[t] = pos;
        }
        std::vector<double> latent(frames);
        const std::size_t half = kLatentSmoothing / 2;
        for (std::size_t t = 0; t < frames; ++t) {
            const std::size_t lo = t >= half ? t - half : 0;
            const std::size_t hi = std::min(frames, t + half + 1);
            double acc = 0.0;
            for (std::size_t u = lo; u < hi; ++u) acc += walk[u];
            latent[t] = acc / static_cast<double>(hi - lo);
        }
        const auto [mn, mx] = std::minmax_element(latent.begin(), latent.end());
        const double lo_v = *mn;
        const double span = *mx - *mn;
        for (auto& e : latent) e = span > 0.0 ? 0.05 + 0.9 * (e - lo_v) / span : 0.5;

        Session s;
        char id[64];
        std::snprintf(id, sizeof id, "%s_%03zu", spec.id_prefix.c_str(), i);
        s.id = id;
        s.role = i % 2 == 0 ? Role::Expert : Role::Novice;
        s.labels = latent;
        s.mask.assign(frames, 1);
        for (Modality m : kAllModalities) {
            const std::size_t k = index_of(m);
            auto& st = s.stream(m);
            st.modality = m;
            st.frames = frames;
            st.channels = spec.dims[k];
            for (std::size_t c = 0; c < st.channels; ++c) st.feature_names.push_back(to_string(m) + "_" + std::to_string(c));
            st.features.resize(frames * st.channels);
            st.valid.assign(frames, 1);
            std::mt19937_64 noise_rng(derive_seed(spec.seed, 10000 + i * kNumModalities + k));
            const double snr = spec.snr[k];
            for (std::size_t t = 0; t < frames; ++t) {
                const double lagged = latent[t >= kLag ? t - kLag : 0];
                const double slope = t > 0 ? latent[t] - latent[t - 1] : 0.0;
                const std::array<double, kSignals> signal{latent[t], lagged, slope};
                for (std::size_t c = 0; c < st.channels; ++c) {
                    const double noise = normal(noise_rng);
                    double v = 0.0;
                    if (snr > 0.0) {
                        for (std::size_t j = 0; j < kSignals; ++j) v += mixing[k][c * kSignals + j] * signal[j];
                        v += noise / snr;
                    } else {
                        v = noise;
                    }
                    st.at(t, c) = v;
                }
            }
        }
        sessions.push_back(std::move(s));
    }
    return sessions;
}

template WindowBatch<float> make_batch<float>(const std::vector<Session>&, std::span<const WindowRef>, std::size_t);
template WindowBatch<double> make_batch<double>(const std::vector<Session>&, std::span<const WindowRef>, std::size_t);

} // namespace dctm
