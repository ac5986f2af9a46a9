#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spdseq/metrics.hpp"
#include "spdseq/model.hpp"
#include "spdseq/token_cache.hpp"

namespace spdseq::harness {

/// Train/validation/test recording ids for one fold; pairwise disjoint.
struct FoldSpec {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;

    void validate() const;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 16;
    int max_passes = 100;
    int patience = 10;           // validation rounds without improvement
    std::uint64_t seed = 1;
    bool oversample = true;
    int clip_test = 24;          // epochs ignored at each end of test recordings
    std::optional<std::filesystem::path> finetune_from;

    void validate(int context) const;  // clip_test >= ell
};

/// One recording's pre-tokenized data plus its labels.
struct RecordingData {
    std::string id;
    TokenCache cache;
    std::vector<int> labels;
};

/// One classification target: a centre epoch with its L-epoch context
/// window. Token matrices are materialized on demand from the cache.
struct SequenceItem {
    const TokenCache* cache = nullptr;
    int center = 0;
    int label = 0;
    int ell = 0;

    std::vector<Eigen::MatrixXd> epochs() const;
};

/// Targets with full context. Training/validation targets are the epochs at
/// indices [ell, E-1-ell]; passing `clip` instead restricts test targets to
/// [clip, E-1-clip] so every compared model classifies identical epochs.
std::vector<SequenceItem> build_sequences(const TokenCache& cache,
                                          const std::vector<int>& labels, int ell,
                                          std::optional<int> clip = std::nullopt);

/// Seeded duplication until every class matches the majority count, then a
/// deterministic shuffle. The class space is 0..max(label); a gap in it
/// raises MissingClass.
std::vector<SequenceItem> oversample(const std::vector<SequenceItem>& items,
                                     std::uint64_t seed);

struct TrainResult {
    MetricsReport validation;   // at the selected (best) pass
    std::vector<double> validation_history;  // MF1 per pass
    int best_pass = -1;
    int passes_run = 0;
    std::filesystem::path checkpoint;
};

/// Full training loop: oversampled batches, adaptive-moment updates, early
/// stopping on validation MF1, best checkpoint persisted to
/// `checkpoint_path`. Deterministic for a fixed seed.
TrainResult train(const std::vector<RecordingData>& corpus, const FoldSpec& fold,
                  const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::filesystem::path& checkpoint_path);

/// Confusion/F1/MF1 of a checkpoint over the clipped targets of the given
/// recordings.
MetricsReport evaluate(const std::filesystem::path& checkpoint,
                       const std::vector<RecordingData>& recordings,
                       const model::ModelConfig& mcfg, int clip);

/// In-memory variant used inside the training loop.
MetricsReport evaluate_items(model::Model& m, const std::vector<SequenceItem>& items);

struct CrossValidationResult {
    std::vector<MetricsReport> fold_reports;
    AggregateReport aggregate;
};

/// Trains and tests every fold, then aggregates mean +/- sample std.
CrossValidationResult cross_validate(const std::vector<RecordingData>& corpus,
                                     const std::vector<FoldSpec>& folds,
                                     const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                                     const std::filesystem::path& workdir);

} // namespace spdseq::harness
