#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "claimvec/embedder.hpp"
#include "claimvec/eval.hpp"
#include "claimvec/models.hpp"

namespace claimvec {

struct PipelineConfig {
    std::filesystem::path claims;
    std::filesystem::path members;
    std::filesystem::path code_map;
    std::filesystem::path workdir;
    std::optional<std::filesystem::path> external_scores;  // CSV patient_id,score

    int base_year = 2015;
    int target_year = 2016;

    std::uint64_t split_seed = 1;
    std::uint64_t cv_seed = 2;
    std::uint64_t embed_seed = 3;
    std::uint64_t infer_seed = 4;
    double split_fraction = 0.7;

    std::size_t min_count = 5;
    std::optional<double> cost_cap;
    EmbedConfig embed;

    bool grid_enabled = false;
    std::vector<GridPoint> grid = full_grid();
    std::size_t grid_concurrency = 1;

    std::vector<double> lambda_grid = default_lambda_grid();
    std::size_t k_folds = 5;
    GbtParams gbt;

    bool holdout_infer = false;
    std::string pr_population = "all";  // "all" or "test"
    std::size_t infer_epochs = 20;
};

/// Parses the JSON config. Relative paths resolve against `base_dir`.
PipelineConfig parse_pipeline_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
/// Loads and validates a config file; relative paths resolve against its directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_to_json(const PipelineConfig& config);

/// Throws ConfigError for out-of-range values or input paths that do not exist.
void validate(const PipelineConfig& config);

// ---------------------------------------------------------------- workdir + manifest

inline constexpr int kManifestVersion = 1;

struct ManifestEntry {
    std::string sha256;
    std::string stage;
};

/// Artifacts of one run directory and their content hashes.
class Workdir {
public:
    explicit Workdir(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path path(std::string_view artifact) const { return root_ / artifact; }
    bool has_manifest() const;
    const std::map<std::string, ManifestEntry>& artifacts() const noexcept { return artifacts_; }

    /// Hashes an artifact already written under root and saves the manifest atomically.
    void record(const std::string& artifact, const std::string& stage);
    /// Throws FormatError when the artifact is unlisted, missing, or its hash differs.
    void verify(const std::string& artifact) const;
    void verify_all() const;
    void require(const std::string& artifact) const;

private:
    void save() const;

    std::filesystem::path root_;
    std::map<std::string, ManifestEntry> artifacts_;
};

// ---------------------------------------------------------------- stages

using Logger = std::function<void(std::string_view)>;

// Each stage reads its inputs from the workdir (or the configured paths), writes its
// outputs atomically, and records them in the manifest.
void stage_cohort(const PipelineConfig& config, Workdir& wd, const Logger& log = {});
void stage_label(const PipelineConfig& config, Workdir& wd, const Logger& log = {});
void stage_grid(const PipelineConfig& config, Workdir& wd, const Logger& log = {});
void stage_embed(const PipelineConfig& config, Workdir& wd, const Logger& log = {});
void stage_featurize(const PipelineConfig& config, Workdir& wd, const Logger& log = {});
void stage_fit(const PipelineConfig& config, Workdir& wd, const Logger& log = {});
void stage_evaluate(const PipelineConfig& config, Workdir& wd, const Logger& log = {});

/// Every stage in order; a failure is rethrown as Error("stage <name>: <cause>").
Report run_pipeline(const PipelineConfig& config, const Logger& log = {});

/// Verifies every manifest hash, then loads report.json.
Report load_report(const std::filesystem::path& workdir);

/// The embedding configuration the embed stage will use: the grid winner when the grid
/// ran, the configured one otherwise.
EmbedConfig resolved_embed_config(const PipelineConfig& config, const Workdir& wd);

}  // namespace claimvec
