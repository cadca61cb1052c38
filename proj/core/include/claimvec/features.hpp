#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "claimvec/claims.hpp"

namespace claimvec {

struct CodePattern {
    CodeSystem system = CodeSystem::ICD10;
    std::string prefix;

    bool matches(const ClaimRecord& c) const noexcept {
        return c.code_system == system && std::string_view(c.code).starts_with(prefix);
    }
};

struct CharlsonCondition {
    int weight = 1;
    std::vector<CodePattern> codes;
};

/// Named code sets for the condition flags and the Charlson index.
struct CodeSetMap {
    std::map<std::string, std::vector<CodePattern>> concepts;
    std::map<std::string, CharlsonCondition> charlson;
};

/// Concepts the flag features look up, in feature order.
inline constexpr std::array<std::string_view, 10> kFlagConcepts = {
    "chemotherapy", "psychotherapy", "obesity", "cvd", "hypertension",
    "t2dm", "mental", "substance", "lowback", "asthma"};

CodeSetMap parse_code_set_map(std::string_view json_text);
CodeSetMap load_code_set_map(const std::filesystem::path& path);

inline constexpr std::size_t kFeatureCount = 21;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "age", "sex", "zip3_black_pct", "charlson_index",
    "n_inpatient", "n_outpatient", "n_ed", "n_pharmacy", "n_specialty_rx", "n_distinct_drug_classes",
    "chemo_flag", "psychotherapy_flag", "obesity_flag", "cvd_flag", "hypertension_flag",
    "t2dm_flag", "mental_flag", "substance_flag", "lowback_flag", "asthma_flag",
    "base_year_cost"};

enum class Feature : std::size_t {
    Age, Sex, Zip3BlackPct, CharlsonIndex,
    NInpatient, NOutpatient, NEd, NPharmacy, NSpecialtyRx, NDistinctDrugClasses,
    ChemoFlag, PsychotherapyFlag, ObesityFlag, CvdFlag, HypertensionFlag,
    T2dmFlag, MentalFlag, SubstanceFlag, LowbackFlag, AsthmaFlag,
    BaseYearCost
};

struct FeatureRow {
    std::string patient_id;
    std::array<double, kFeatureCount> values{};

    double operator[](Feature f) const noexcept { return values[static_cast<std::size_t>(f)]; }
    double& operator[](Feature f) noexcept { return values[static_cast<std::size_t>(f)]; }
};

/// Drug class of an NDC code: its first five digits, or nullopt when it has fewer.
std::optional<std::string> drug_class(std::string_view ndc);

/// Baseline features from base-year claims. Sex is 1 for female. Throws ConfigError
/// naming the first flag concept missing from `code_map`.
std::vector<FeatureRow> extract_features(const Cohort& cohort, const CodeSetMap& code_map);

struct RiskLabel {
    std::string patient_id;
    double annualized_cost = 0.0;
    double risk_score = 0.0;
};

struct LabelOptions {
    /// Annualized costs above the cap are clipped before rescaling. Off by default.
    std::optional<double> cost_cap;
};

/**
 * Prospective labels: target-year allowed cost annualized by enrolled months
 * (cost * 12 / months), then divided by the cohort mean so that scores average 1.0.
 */
std::vector<RiskLabel> compute_risk_labels(const Cohort& cohort, int target_year, const LabelOptions& opts = {});

struct Split {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

/// Seeded shuffle, then the first floor(fraction * N) ids train and the rest test.
Split split_train_test(std::span<const std::string> ids, double fraction, std::uint64_t seed);

// CSV emitters/readers with stable column order.
void write_features_csv(std::ostream& out, const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_features_csv(std::istream& in, const std::string& source = "<features>");
void write_labels_csv(std::ostream& out, const std::vector<RiskLabel>& labels);
std::vector<RiskLabel> read_labels_csv(std::istream& in, const std::string& source = "<labels>");

}  // namespace claimvec
