#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "claimvec/claims.hpp"
#include "claimvec/demographics.hpp"

namespace claimvec::synth {

struct PoolCode {
    CodeSystem system = CodeSystem::ICD10;
    std::string code;
};

struct LogNormal {
    double mu = 4.5;
    double sigma = 0.8;
};

/// A latent condition planted in the synthetic population.
struct ConditionSpec {
    std::string name;
    double prevalence = 0.1;
    double age_shift = 0.0;  // additive log-odds per decade away from age 40
    std::vector<PoolCode> code_pool;
    double visits_per_year = 4.0;
    LogNormal cost_per_claim;
    bool chronic = true;
    double inpatient_prob = 0.02;  // share of non-drug claims billed as inpatient / ED
    double ed_prob = 0.03;
    bool specialty_rx = false;     // NDC codes of this condition bill as specialty_rx
};

struct PopulationSpec {
    std::int64_t n_patients = 1000;
    std::uint64_t seed = 20150101;
    int base_year = 2015;
    int target_year = 2016;
    std::vector<ConditionSpec> conditions;
    double background_visit_rate = 3.0;
    std::vector<PoolCode> background_code_pool;
    LogNormal background_cost{4.0, 0.7};
    std::array<double, kAgeBandCount> age_distribution{};  // relative weights per band
    double female_fraction = 0.54;
    double churn = 0.1;               // probability that a year is partially enrolled
    double comorbidity_factor = 1.5;  // applied to every claim when >= 2 chronic conditions are active
};

/// Checks the documented invariants; throws ConfigError naming the offending field.
void validate(const PopulationSpec& spec);

PopulationSpec parse_population_spec(std::string_view json_text);
PopulationSpec load_population_spec(const std::filesystem::path& path);
std::string population_spec_to_json(const PopulationSpec& spec);

struct GeneratedCounts {
    std::size_t members = 0;
    std::size_t claims = 0;
};

/**
 * Streams the synthetic population as claims and members CSV.
 *
 * Each patient draws from its own generator seeded from (seed, patient index), so the
 * output bytes depend only on the spec. Patients appear in index order.
 */
GeneratedCounts generate(const PopulationSpec& spec, std::ostream& claims_out, std::ostream& members_out);

/// Writes `claims.csv` and `members.csv` into `out_dir`.
GeneratedCounts generate_files(const PopulationSpec& spec, const std::filesystem::path& out_dir);

struct CodePair {
    std::string a;
    std::string b;
    bool same_condition = false;

    friend bool operator==(const CodePair&, const CodePair&) = default;
};

/**
 * Every unordered pair of distinct codes drawn from the condition pools and the
 * background pool, in first-appearance order. A pair is labelled same-condition when
 * both codes belong to one condition pool.
 */
std::vector<CodePair> planted_pairs(const PopulationSpec& spec);

/// Active conditions of one patient, exposed for tests of the prevalence contract.
struct PatientTruth {
    int age = 0;
    Sex sex = Sex::Female;
    std::vector<bool> base_conditions;
    std::vector<bool> target_conditions;
};
PatientTruth draw_patient_truth(const PopulationSpec& spec, std::uint64_t patient_index);

}  // namespace claimvec::synth
