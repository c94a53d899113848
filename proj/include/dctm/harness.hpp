#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dctm/checkpoint.hpp"
#include "dctm/config.hpp"
#include "dctm/data.hpp"
#include "dctm/metrics.hpp"
#include "dctm/model.hpp"

namespace dctm {

std::string build_id();

struct SessionScore {
    std::string id;
    Role role = Role::Expert;
    std::optional<CccResult> result;  // empty when fewer than two labeled frames
};

struct SplitScores {
    // Headline: CCC over all unmasked frames of the split, concatenated.
    CccResult overall;
    // Mean of the per-session values that exist.
    double session_mean = 0.0;
    std::vector<SessionScore> per_session;
    std::vector<std::string> degeneracy;
};

struct EpochLog {
    std::size_t epoch = 0;      // 1-based
    std::size_t steps = 0;      // cumulative optimizer steps
    double train_loss = 0.0;    // mean batch loss over the epoch
    std::optional<double> val_ccc;
};

struct EvalReport {
    std::string command;
    std::string split;
    std::optional<SplitScores> scores;
    std::vector<double> loss_curve;  // one entry per optimizer step
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    std::optional<double> best_val_ccc;
    std::size_t steps = 0;
    std::optional<double> voice_gate;  // GMU: mean top-level gate weight on the last fused branch
    std::vector<std::pair<std::string, std::string>> config;
    std::string build;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;
};

std::string report_json(const EvalReport& report);
std::string report_text(const EvalReport& report);

/// Per-frame scores for every session, from coverage-anchored windows
/// averaged where they overlap. Sessions must already be normalized.
template <typename T>
std::vector<std::vector<double>> predict_sessions(DctmModel<T>& model, const std::vector<Session>& sessions,
                                                  std::size_t window, std::size_t stride, std::size_t batch_size);

SplitScores score_sessions(const std::vector<Session>& sessions, const std::vector<std::vector<double>>& predictions);

/// Mean of (1 - z) over the outermost GMU gate, i.e. the weight the final
/// unit puts on its second input (the last modality in fusion order).
/// Empty for concat fusion or a single modality.
template <typename T>
std::optional<double> mean_top_gate_second(DctmModel<T>& model, const std::vector<Session>& sessions,
                                           std::size_t window, std::size_t batch_size);

struct TrainResult {
    DctmConfig config;  // resolved, input_dims filled in
    std::unique_ptr<DctmModel<float>> model;  // holds the best-validation weights
    NormStats stats;
    std::vector<CheckpointRecord> best;
    std::vector<CheckpointRecord> last;
    EvalReport report;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam on ccc_loss over shuffled training windows. Validation CCC after
/// each epoch selects the kept weights; without validation data the last
/// epoch is kept. Throws NumericalError naming epoch/step on a non-finite
/// loss and ConfigError on an empty training set.
TrainResult train_model(DctmConfig config, const std::vector<Session>& train, const std::vector<Session>& val,
                        const EpochCallback& on_epoch = {});

// Writes best.dctm, last.dctm, config.txt, norm_stats.csv, report.json, report.txt.
void write_run(const std::filesystem::path& dir, const TrainResult& result);

struct LoadedRun {
    DctmConfig config;
    std::unique_ptr<DctmModel<float>> model;
    NormStats stats;
};

/// Rebuilds the model from a run directory's config.txt and norm_stats.csv
/// and loads `checkpoint` into it. `overrides` are applied on top of the
/// stored config (data paths and the like).
LoadedRun load_run(const std::filesystem::path& checkpoint,
                   const std::vector<std::pair<std::string, std::string>>& overrides = {});

EvalReport evaluate_model(LoadedRun& run, const std::vector<Session>& raw_sessions, const std::string& split);

/// Writes `<out>/<session id>.<role>.csv` with rows `frame_index,score`.
std::vector<std::filesystem::path> write_predictions(const std::filesystem::path& out, const std::vector<Session>& sessions,
                                                     const std::vector<std::vector<double>>& predictions);

struct SyntheticSplits {
    std::vector<Session> train;
    std::vector<Session> val;
    std::vector<Session> test;
};

/// One generator draw split in order, so every split shares the same
/// per-modality mixing matrices.
SyntheticSplits generate_synthetic_splits(SyntheticSpec spec, std::size_t train, std::size_t val, std::size_t test);

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

struct AblationCell {
    ConvMode conv = ConvMode::Dilated;
    FusionKind fusion = FusionKind::SelfAttentionConcat;
    SubjectFilter subject = SubjectFilter::Both;
    std::vector<Modality> modalities;
    std::size_t receptive_field = 1;
    std::optional<double> val_ccc;
    std::optional<double> test_ccc;
    std::optional<double> voice_gate;
    std::string error;
    double seconds = 0.0;
};

struct ModalityMagnitude {
    Modality modality = Modality::Head;
    CccResult result;
};

struct AblationReport {
    std::vector<AblationCell> cells;
    std::vector<ModalityMagnitude> magnitudes;
    std::vector<std::pair<std::string, std::string>> config;
    std::string build;
    double wall_seconds = 0.0;
};

/// Concatenates every labeled session and correlates the per-frame raw
/// feature L2 norm of each modality with the labels.
std::vector<ModalityMagnitude> magnitude_table(const std::vector<Session>& sessions);

/// Trains and evaluates every (conv, fusion, subject, modality subset) cell.
/// A failing cell records its error and the grid continues.
AblationReport run_ablation(const DctmConfig& config, const std::vector<Session>& train,
                            const std::vector<Session>& val, const std::vector<Session>& test,
                            const std::function<void(const AblationCell&)>& on_cell = {});

std::string ablation_json(const AblationReport& report);
std::string ablation_text(const AblationReport& report);

} // namespace dctm
