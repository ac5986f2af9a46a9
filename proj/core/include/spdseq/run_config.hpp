#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "spdseq/enrichment.hpp"
#include "spdseq/harness.hpp"
#include "spdseq/model.hpp"

namespace spdseq {

/// Everything one run needs: data paths, enrichment, model, training and
/// fold definition. Serialized as key = value text with a schema version;
/// unknown keys are rejected and serialization materializes every default,
/// so a written manifest reproduces the run bit for bit.
struct RunConfig {
    int schema_version = 1;
    std::filesystem::path data_dir;
    std::filesystem::path out_dir;
    std::string cache_tag;  // empty: derived from the enrichment config

    EnrichmentConfig enrichment;
    model::ModelConfig model;
    harness::TrainConfig train;
    harness::FoldSpec fold;

    std::string effective_cache_tag() const;
    void validate() const;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config(const std::filesystem::path& path);

/// Every field written out, defaults included.
std::string serialize(const RunConfig& cfg);

/// The runnable ablation grid: the three enrichment strategies with
/// handcrafted features, zero-valued augmentation, global-covariance
/// whitening, classic MHA, and the two alternative input lengths.
std::vector<std::pair<std::string, RunConfig>> ablation_suite(const RunConfig& base);

/// Run manifest: the materialized config plus the seed and a content hash
/// per consumed cache file.
void write_manifest(const std::filesystem::path& path, const RunConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& cache_hashes);

} // namespace spdseq
