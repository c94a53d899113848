#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dctm/session.hpp"
#include "dctm/tensor.hpp"

namespace dctm {

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

struct SessionFiles {
    std::string id;
    Role role = Role::Expert;
    std::array<std::filesystem::path, kNumModalities> modality;
    std::optional<std::filesystem::path> labels;
};

// Relative gap between the shortest and longest input beyond which the
// truncation warning is marked severe.
inline constexpr double kSevereLengthMismatch = 0.05;

/// Reads one participant's feature CSVs (header row, one row per frame) and
/// optional label file (one value per line, optional header). Streams are
/// truncated to the shortest input; any truncation is recorded in
/// Session::warnings. Rows holding NaN/empty cells are marked invalid and
/// masked out of the loss.
Session load_session(const SessionFiles& files);

enum class SubjectFilter { Expert, Novice, Both };
SubjectFilter parse_subject_filter(const std::string& text);
std::string to_string(SubjectFilter filter);
bool subject_matches(SubjectFilter filter, Role role);

SessionFiles session_files(const std::filesystem::path& root, const std::string& session_id, Role role);

/// Loads every `<root>/<session_id>/<role>.*.csv` participant, sorted by
/// (session id, role). Label files are required when `require_labels`.
std::vector<Session> load_split(const std::filesystem::path& root, SubjectFilter filter, bool require_labels);

void write_session(const std::filesystem::path& root, const Session& session);

std::vector<Session> filter_subjects(const std::vector<Session>& sessions, SubjectFilter filter);

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

struct NormStats {
    std::array<std::vector<std::string>, kNumModalities> names;
    std::array<std::vector<double>, kNumModalities> mean;
    std::array<std::vector<double>, kNumModalities> stddev;  // population

    bool operator==(const NormStats&) const = default;
};

// Features whose std falls below this are centered but not scaled.
inline constexpr double kMinFeatureStd = 1e-8;

/// Per-feature mean/std over every valid frame of the given sessions.
NormStats compute_norm_stats(const std::vector<Session>& sessions);

/// z-scores every stream with `stats`; cells of invalid frames become 0.
std::vector<Session> normalize(std::vector<Session> sessions, const NormStats& stats);

struct NormalizeResult {
    std::vector<Session> sessions;
    NormStats stats;
};

/// Training call (no stats): fits and applies. Evaluation call: applies the
/// stored training stats unchanged.
NormalizeResult normalize(std::vector<Session> sessions, const std::optional<NormStats>& stats);

std::vector<Session> denormalize(std::vector<Session> sessions, const NormStats& stats);

// CSV with header `feature,mean,std`; feature is `<modality>.<column name>`.
void save_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats load_norm_stats(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

struct WindowSpan {
    std::size_t start = 0;
    std::size_t valid = 0;  // frames taken from the session; the rest is padding

    bool operator==(const WindowSpan&) const = default;
};

/// Starts at 0, stride, 2*stride, ... while a full window fits; when the last
/// full window stops short of the end, one more window is anchored at
/// frames - window. Sequences shorter than the window give one padded window.
std::vector<WindowSpan> make_windows(std::size_t frames, std::size_t window, std::size_t stride);

struct WindowRef {
    std::size_t session = 0;
    WindowSpan span;
};

std::vector<WindowRef> index_windows(const std::vector<Session>& sessions, std::size_t window, std::size_t stride);

template <typename T>
struct WindowBatch {
    std::array<Tensor<T>, kNumModalities> features;  // [B, C_m, W]
    Tensor<T> labels;                                // [B, W]
    std::vector<std::uint8_t> mask;                  // B*W; 1 = contributes to loss/metrics
    std::vector<WindowRef> provenance;
    std::size_t window = 0;
};

template <typename T>
WindowBatch<T> make_batch(const std::vector<Session>& sessions, std::span<const WindowRef> refs, std::size_t window);

/// Per-frame mean of every window prediction covering the frame. Padding
/// positions are ignored. Throws ContractError if a frame is uncovered.
std::vector<double> overlap_average(std::size_t frames, std::span<const WindowSpan> spans,
                                    const std::vector<std::vector<double>>& predictions);

// ---------------------------------------------------------------------------
// Synthetic sessions
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    std::uint64_t seed = 7;
    std::size_t sessions = 4;
    std::size_t frames = 1000;
    std::array<std::size_t, kNumModalities> dims{12, 16, 10};
    std::array<double, kNumModalities> snr{1.0, 1.0, 1.0};
    std::string id_prefix = "synth";
};

/// Latent engagement: reflected Gaussian random walk, 25-frame moving
/// average, rescaled to [0.05, 0.95]. Modality m observes
///   mixing_m * [e(t), e(t-5), e(t) - e(t-1)] + N(0, 1) / snr_m
/// with a mixing matrix fixed per modality by the seed; snr 0 gives pure
/// N(0, 1) noise. Sessions alternate expert/novice roles.
std::vector<Session> generate_synthetic(const SyntheticSpec& spec);

// Smoothing length of the latent engagement curve.
inline constexpr std::size_t kLatentSmoothing = 25;

} // namespace dctm
