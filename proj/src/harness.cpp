#include "dctm/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "dctm/adam.hpp"
#include "dctm/errors.hpp"
#include "dctm/random.hpp"

#ifndef DCTM_BUILD_ID
#define DCTM_BUILD_ID "unknown"
#endif

namespace dctm {

std::string build_id() { return DCTM_BUILD_ID; }

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
std::array<Tensor<T>, kNumModalities> batch_inputs(const WindowBatch<T>& batch, const ModelSpec& spec) {
    std::array<Tensor<T>, kNumModalities> inputs;
    for (Modality m : spec.modalities) inputs[index_of(m)] = batch.features[index_of(m)];
    return inputs;
}

std::size_t loss_windows(const std::vector<std::uint8_t>& mask, std::size_t window) {
    std::size_t usable = 0;
    for (std::size_t b = 0; b * window < mask.size(); ++b) {
        std::size_t n = 0;
        for (std::size_t t = 0; t < window; ++t) n += mask[b * window + t] ? 1 : 0;
        if (n >= 2) ++usable;
    }
    return usable;
}

void shuffle_indices(std::vector<std::size_t>& order, std::uint64_t seed) {
    // Explicit Fisher-Yates so the order does not depend on the standard
    // library's shuffle implementation.
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
}

void resolve_input_dims(DctmConfig& config, const std::vector<Session>& sessions) {
    const Session& first = sessions.front();
    for (Modality m : kAllModalities) {
        const std::size_t k = index_of(m);
        const std::size_t found = first.stream(m).channels;
        if (config.input_dims[k] != 0 && config.input_dims[k] != found) {
            throw ConfigError("model.input_dims for " + to_string(m) + " is " + std::to_string(config.input_dims[k]) +
                              " but the data has " + std::to_string(found) + " features");
        }
        config.input_dims[k] = found;
    }
}

std::vector<std::string> collect_warnings(const std::vector<Session>& sessions) {
    std::vector<std::string> out;
    for (const auto& s : sessions) {
        for (const auto& w : s.warnings) out.push_back(s.id + "/" + to_string(s.role) + ": " + w);
    }
    return out;
}

} // namespace

template <typename T>
std::vector<std::vector<double>> predict_sessions(DctmModel<T>& model, const std::vector<Session>& sessions,
                                                  std::size_t window, std::size_t stride, std::size_t batch_size) {
    NoGradGuard no_grad;
    const auto refs = index_windows(sessions, window, stride);
    std::vector<std::vector<std::vector<double>>> per_window(sessions.size());
    std::vector<std::vector<WindowSpan>> spans(sessions.size());
    for (std::size_t begin = 0; begin < refs.size(); begin += batch_size) {
        const std::size_t end = std::min(refs.size(), begin + batch_size);
        std::span<const WindowRef> chunk(refs.data() + begin, end - begin);
        const auto batch = make_batch<T>(sessions, chunk, window);
        const auto out = model.forward(batch_inputs(batch, model.spec()), false);
        const auto& scores = out.scores.data();
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            std::vector<double> row(window);
            for (std::size_t t = 0; t < window; ++t) row[t] = static_cast<double>(scores[b * window + t]);
            per_window[chunk[b].session].push_back(std::move(row));
            spans[chunk[b].session].push_back(chunk[b].span);
        }
    }
    std::vector<std::vector<double>> result(sessions.size());
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        if (sessions[i].frames() == 0) continue;
        result[i] = overlap_average(sessions[i].frames(), spans[i], per_window[i]);
    }
    return result;
}

SplitScores score_sessions(const std::vector<Session>& sessions, const std::vector<std::vector<double>>& predictions) {
    if (sessions.size() != predictions.size()) {
        throw DimensionError("score_sessions: " + std::to_string(sessions.size()) + " sessions but " +
                             std::to_string(predictions.size()) + " prediction sets");
    }
    SplitScores scores;
    std::vector<double> all_pred;
    std::vector<double> all_label;
    double session_sum = 0.0;
    std::size_t session_count = 0;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        const Session& s = sessions[i];
        if (!s.labeled()) throw DataError("session " + s.id + " has no labels to score against");
        const auto& pred = predictions[i];
        if (pred.size() != s.frames()) throw DimensionError("score_sessions: prediction length mismatch for " + s.id);
        std::vector<double> p;
        std::vector<double> y;
        for (std::size_t t = 0; t < s.frames(); ++t) {
            if (!s.mask.empty() && !s.mask[t]) continue;
            p.push_back(pred[t]);
            y.push_back(s.labels[t]);
        }
        SessionScore entry{s.id, s.role, std::nullopt};
        if (p.size() >= 2) {
            entry.result = ccc(p, y);
            session_sum += entry.result->ccc;
            ++session_count;
            if (entry.result->degenerate) scores.degeneracy.push_back(s.id + "/" + to_string(s.role) + ": zero variance");
        } else {
            scores.degeneracy.push_back(s.id + "/" + to_string(s.role) + ": fewer than two labeled frames");
        }
        scores.per_session.push_back(std::move(entry));
        all_pred.insert(all_pred.end(), p.begin(), p.end());
        all_label.insert(all_label.end(), y.begin(), y.end());
    }
    if (all_pred.size() < 2) throw DataError("split has fewer than two labeled frames");
    scores.overall = ccc(all_pred, all_label);
    if (scores.overall.degenerate) scores.degeneracy.push_back("overall: zero variance");
    scores.session_mean = session_count ? session_sum / static_cast<double>(session_count) : 0.0;
    return scores;
}

template <typename T>
std::optional<double> mean_top_gate_second(DctmModel<T>& model, const std::vector<Session>& sessions,
                                           std::size_t window, std::size_t batch_size) {
    if (model.spec().fusion != FusionKind::GatedMultimodal || model.spec().modalities.size() < 2) return std::nullopt;
    NoGradGuard no_grad;
    const auto refs = index_windows(sessions, window, window);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t begin = 0; begin < refs.size(); begin += batch_size) {
        const std::size_t end = std::min(refs.size(), begin + batch_size);
        std::span<const WindowRef> chunk(refs.data() + begin, end - begin);
        const auto batch = make_batch<T>(sessions, chunk, window);
        const auto out = model.forward(batch_inputs(batch, model.spec()), false);
        const auto& z = out.gates.back();
        const std::size_t per_frame = z.numel() / (chunk.size() * window);
        const auto& data = z.data();
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            for (std::size_t t = 0; t < chunk[b].span.valid; ++t) {
                const std::size_t base = (b * window + t) * per_frame;
                for (std::size_t h = 0; h < per_frame; ++h) sum += 1.0 - static_cast<double>(data[base + h]);
                count += per_frame;
            }
        }
    }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
}

TrainResult train_model(DctmConfig config, const std::vector<Session>& train_raw, const std::vector<Session>& val_raw,
                        const EpochCallback& on_epoch) {
    const auto start = Clock::now();
    config.validate();
    auto train_sessions = filter_subjects(train_raw, config.subject);
    auto val_sessions = filter_subjects(val_raw, config.subject);
    if (train_sessions.empty()) throw ConfigError("training set is empty after subject filter '" + to_string(config.subject) + "'");
    for (const auto& s : train_sessions) {
        if (!s.labeled()) throw DataError("training session " + s.id + " has no labels");
    }
    resolve_input_dims(config, train_sessions);

    auto fitted = normalize(std::move(train_sessions), std::optional<NormStats>{});
    auto train = std::move(fitted.sessions);
    auto val = normalize(std::move(val_sessions), fitted.stats);

    const auto refs = index_windows(train, config.window, config.stride);
    if (refs.empty()) throw ConfigError("training set has no frames");

    TrainResult result;
    result.stats = fitted.stats;
    result.model = std::make_unique<DctmModel<float>>(config.model_spec());
    DctmModel<float>& model = *result.model;
    auto params = model.parameters();
    auto adam = make_adam_state(params, AdamOptions{config.lr, config.beta1, config.beta2, config.adam_eps});

    EvalReport& report = result.report;
    report.command = "train";
    report.split = val.empty() ? "train" : "val";
    report.warnings = collect_warnings(train);
    for (auto& w : collect_warnings(val)) report.warnings.push_back(std::move(w));

    std::vector<std::size_t> order(refs.size());
    std::size_t step = 0;
    bool stop = false;
    std::optional<double> best_score;
    for (std::size_t epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_indices(order, derive_seed(config.seed, 1000 + epoch));
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            if (config.max_steps && step >= config.max_steps) {
                stop = true;
                break;
            }
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            std::vector<WindowRef> chunk;
            for (std::size_t i = begin; i < end; ++i) chunk.push_back(refs[order[i]]);
            const auto batch = make_batch<float>(train, chunk, config.window);
            if (loss_windows(batch.mask, config.window) == 0) continue;

            const auto out = model.forward(batch_inputs(batch, model.spec()), true);
            auto loss = ccc_loss(out.scores, batch.labels, batch.mask);
            const double value = static_cast<double>(loss.item());
            if (!std::isfinite(value)) {
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                     std::to_string(step + 1));
            }
            backward(loss);
            try {
                adam_step(params, adam);
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                                     std::to_string(step + 1) + ")");
            }
            zero_grads(params);
            ++step;
            report.loss_curve.push_back(value);
            loss_sum += value;
            ++loss_count;
        }

        EpochLog log;
        log.epoch = epoch;
        log.steps = step;
        log.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
        if (!val.empty()) {
            const auto preds = predict_sessions(model, val, config.window, config.stride, config.batch_size);
            log.val_ccc = score_sessions(val, preds).overall.ccc;
        }
        const bool improved = !val.empty() ? (!best_score || *log.val_ccc > *best_score) : true;
        if (improved) {
            best_score = log.val_ccc;
            report.best_epoch = epoch;
            result.best = snapshot_parameters(params);
        }
        report.epochs.push_back(log);
        if (on_epoch) on_epoch(log);
        if (config.early_stop_ccc > 0.0 && log.val_ccc && *log.val_ccc >= config.early_stop_ccc) stop = true;
    }

    result.last = snapshot_parameters(params);
    if (result.best.empty()) result.best = result.last;
    restore_parameters(result.best, params);

    report.steps = step;
    report.best_val_ccc = best_score;
    if (!val.empty()) {
        const auto preds = predict_sessions(model, val, config.window, config.stride, config.batch_size);
        report.scores = score_sessions(val, preds);
        report.voice_gate = mean_top_gate_second(model, val, config.window, config.batch_size);
    }
    result.config = config;
    report.config = config.entries();
    report.build = build_id();
    report.wall_seconds = seconds_since(start);
    return result;
}

void write_run(const std::filesystem::path& dir, const TrainResult& result) {
    std::filesystem::create_directories(dir);
    write_checkpoint(dir / "best.dctm", result.best);
    write_checkpoint(dir / "last.dctm", result.last);
    save_norm_stats(dir / "norm_stats.csv", result.stats);
    auto write_text = [&](const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write " + path.string());
        out << text;
    };
    write_text(dir / "config.txt", result.config.to_text());
    write_text(dir / "report.json", report_json(result.report));
    write_text(dir / "report.txt", report_text(result.report));
}

LoadedRun load_run(const std::filesystem::path& checkpoint,
                   const std::vector<std::pair<std::string, std::string>>& overrides) {
    const auto dir = checkpoint.parent_path().empty() ? std::filesystem::path(".") : checkpoint.parent_path();
    LoadedRun run;
    const auto config_path = dir / "config.txt";
    if (!std::filesystem::exists(config_path)) throw ConfigError("missing " + config_path.string() + " next to checkpoint");
    run.config.apply_file(config_path);
    for (const auto& [k, v] : overrides) run.config.set(k, v);
    for (std::size_t d : run.config.input_dims) {
        if (d == 0) throw ConfigError(config_path.string() + ": model.input_dims must be resolved");
    }
    run.stats = load_norm_stats(dir / "norm_stats.csv");
    run.model = std::make_unique<DctmModel<float>>(run.config.model_spec());
    auto params = run.model->parameters();
    load_parameters(checkpoint, params);
    return run;
}

EvalReport evaluate_model(LoadedRun& run, const std::vector<Session>& raw_sessions, const std::string& split) {
    const auto start = Clock::now();
    auto sessions = filter_subjects(raw_sessions, run.config.subject);
    if (sessions.empty()) throw ConfigError("split '" + split + "' is empty after subject filter");
    EvalReport report;
    report.command = "evaluate";
    report.split = split;
    report.warnings = collect_warnings(sessions);
    auto normalized = normalize(std::move(sessions), run.stats);
    const auto preds =
        predict_sessions(*run.model, normalized, run.config.window, run.config.stride, run.config.batch_size);
    report.scores = score_sessions(normalized, preds);
    report.voice_gate = mean_top_gate_second(*run.model, normalized, run.config.window, run.config.batch_size);
    report.config = run.config.entries();
    report.build = build_id();
    report.wall_seconds = seconds_since(start);
    return report;
}

std::vector<std::filesystem::path> write_predictions(const std::filesystem::path& out, const std::vector<Session>& sessions,
                                                     const std::vector<std::vector<double>>& predictions) {
    std::filesystem::create_directories(out);
    std::vector<std::filesystem::path> written;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        const auto path = out / (sessions[i].id + "." + to_string(sessions[i].role) + ".csv");
        std::ofstream f(path);
        if (!f) throw DataError("cannot write " + path.string());
        f << "frame_index,score\n";
        char buf[64];
        for (std::size_t t = 0; t < predictions[i].size(); ++t) {
            std::snprintf(buf, sizeof buf, "%.9g", predictions[i][t]);
            f << t << ',' << buf << '\n';
        }
        written.push_back(path);
    }
    return written;
}

SyntheticSplits generate_synthetic_splits(SyntheticSpec spec, std::size_t train, std::size_t val, std::size_t test) {
    spec.sessions = train + val + test;
    auto all = generate_synthetic(spec);
    SyntheticSplits out;
    auto it = std::make_move_iterator(all.begin());
    out.train.assign(it, it + static_cast<std::ptrdiff_t>(train));
    out.val.assign(it + static_cast<std::ptrdiff_t>(train), it + static_cast<std::ptrdiff_t>(train + val));
    out.test.assign(it + static_cast<std::ptrdiff_t>(train + val), std::make_move_iterator(all.end()));
    return out;
}

std::vector<ModalityMagnitude> magnitude_table(const std::vector<Session>& sessions) {
    std::vector<ModalityMagnitude> table;
    for (Modality m : kAllModalities) {
        std::vector<double> mags;
        std::vector<double> labels;
        for (const auto& s : sessions) {
            if (!s.labeled()) continue;
            const auto& stream = s.stream(m);
            const auto frame_mag = frame_magnitudes(stream);
            for (std::size_t t = 0; t < s.frames(); ++t) {
                if (!stream.valid.empty() && !stream.valid[t]) continue;
                if (!s.mask.empty() && !s.mask[t]) continue;
                mags.push_back(frame_mag[t]);
                labels.push_back(s.labels[t]);
            }
        }
        if (mags.size() < 2) continue;
        table.push_back({m, ccc(mags, labels)});
    }
    return table;
}

AblationReport run_ablation(const DctmConfig& config, const std::vector<Session>& train, const std::vector<Session>& val,
                            const std::vector<Session>& test, const std::function<void(const AblationCell&)>& on_cell) {
    const auto start = Clock::now();
    AblationReport report;
    for (ConvMode conv : config.ablate_conv) {
        for (FusionKind fusion : config.ablate_fusion) {
            for (SubjectFilter subject : config.ablate_subject) {
                for (const auto& mods : config.ablate_modalities) {
                    const auto cell_start = Clock::now();
                    AblationCell cell;
                    cell.conv = conv;
                    cell.fusion = fusion;
                    cell.subject = subject;
                    cell.modalities = mods;
                    try {
                        DctmConfig c = config;
                        c.conv_mode = conv;
                        c.fusion = fusion;
                        c.subject = subject;
                        c.modalities = mods;
                        c.validate();
                        cell.receptive_field = c.model_spec().receptive_field();
                        auto trained = train_model(c, train, val);
                        if (trained.report.scores) cell.val_ccc = trained.report.scores->overall.ccc;
                        cell.voice_gate = trained.report.voice_gate;
                        auto test_sessions = filter_subjects(test, subject);
                        bool labeled = !test_sessions.empty();
                        for (const auto& s : test_sessions) labeled = labeled && s.labeled();
                        if (labeled) {
                            auto normalized = normalize(std::move(test_sessions), trained.stats);
                            const auto preds =
                                predict_sessions(*trained.model, normalized, c.window, c.stride, c.batch_size);
                            cell.test_ccc = score_sessions(normalized, preds).overall.ccc;
                        }
                    } catch (const std::exception& e) {
                        cell.error = e.what();
                    }
                    cell.seconds = seconds_since(cell_start);
                    if (on_cell) on_cell(cell);
                    report.cells.push_back(std::move(cell));
                }
            }
        }
    }
    std::vector<Session> all = train;
    all.insert(all.end(), val.begin(), val.end());
    all.insert(all.end(), test.begin(), test.end());
    report.magnitudes = magnitude_table(all);
    report.config = config.entries();
    report.build = build_id();
    report.wall_seconds = seconds_since(start);
    return report;
}

template std::vector<std::vector<double>> predict_sessions<float>(DctmModel<float>&, const std::vector<Session>&,
                                                                  std::size_t, std::size_t, std::size_t);
template std::vector<std::vector<double>> predict_sessions<double>(DctmModel<double>&, const std::vector<Session>&,
                                                                   std::size_t, std::size_t, std::size_t);
template std::optional<double> mean_top_gate_second<float>(DctmModel<float>&, const std::vector<Session>&, std::size_t,
                                                           std::size_t);
template std::optional<double> mean_top_gate_second<double>(DctmModel<double>&, const std::vector<Session>&,
                                                            std::size_t, std::size_t);

} // namespace dctm
