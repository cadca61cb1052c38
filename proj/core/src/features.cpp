#include "claimvec/features.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "claimvec/error.hpp"
#include "claimvec/io.hpp"
#include "json.hpp"

namespace claimvec {

namespace {

std::vector<CodePattern> parse_patterns(const nlohmann::json& arr, const std::string& where) {
    std::vector<CodePattern> out;
    for (const auto& p : arr) {
        auto sys = parse_code_system(p.at("system").get<std::string>());
        if (!sys) throw ConfigError(where + ": unknown code system " + p.at("system").dump());
        out.push_back(CodePattern{*sys, p.at("prefix").get<std::string>()});
    }
    return out;
}

bool any_match(const std::vector<ClaimRecord>& claims, const std::vector<CodePattern>& patterns) {
    for (const auto& c : claims)
        for (const auto& p : patterns)
            if (p.matches(c)) return true;
    return false;
}

}  // namespace

// {"concepts": {"hypertension": [{"system": "ICD10", "prefix": "I10"}], ...},
//  "charlson": {"chf": {"weight": 1, "codes": [{"system": ..., "prefix": ...}]}, ...}}
CodeSetMap parse_code_set_map(std::string_view json_text) {
    CodeSetMap map;
    try {
        const auto j = nlohmann::json::parse(json_text);
        for (auto& [name, arr] : j.at("concepts").items()) map.concepts[name] = parse_patterns(arr, "concept " + name);
        if (j.contains("charlson")) {
            for (auto& [name, cj] : j.at("charlson").items()) {
                CharlsonCondition cond;
                cond.weight = cj.at("weight").get<int>();
                if (cond.weight < 0) throw ConfigError("charlson " + name + ": weight must be >= 0");
                cond.codes = parse_patterns(cj.at("codes"), "charlson " + name);
                map.charlson[name] = std::move(cond);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("code set map: ") + e.what());
    }
    return map;
}

CodeSetMap load_code_set_map(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("code set map not found: " + path.string());
    return parse_code_set_map(io::read_file(path));
}

std::optional<std::string> drug_class(std::string_view ndc) {
    std::string digits;
    for (char c : ndc) {
        if (c >= '0' && c <= '9') digits.push_back(c);
        if (digits.size() == 5) return digits;
    }
    return std::nullopt;
}

std::vector<FeatureRow> extract_features(const Cohort& cohort, const CodeSetMap& code_map) {
    std::array<const std::vector<CodePattern>*, kFlagConcepts.size()> flags{};
    for (std::size_t i = 0; i < kFlagConcepts.size(); ++i) {
        auto it = code_map.concepts.find(std::string(kFlagConcepts[i]));
        if (it == code_map.concepts.end())
            throw ConfigError("code set map is missing concept '" + std::string(kFlagConcepts[i]) + "'");
        flags[i] = &it->second;
    }

    std::vector<FeatureRow> rows;
    rows.reserve(cohort.documents.size());
    for (const auto& doc : cohort.documents) {
        FeatureRow r;
        r.patient_id = doc.patient_id;
        r[Feature::Age] = double(cohort.base_year - doc.member.birth_year);
        r[Feature::Sex] = doc.member.sex == Sex::Female ? 1.0 : 0.0;
        r[Feature::Zip3BlackPct] = doc.member.zip3_black_pct;

        int charlson = 0;
        for (const auto& [name, cond] : code_map.charlson)
            if (any_match(doc.claims, cond.codes)) charlson += cond.weight;
        r[Feature::CharlsonIndex] = charlson;

        std::set<std::string> classes;
        for (const auto& c : doc.claims) {
            switch (c.setting) {
                case CareSetting::Inpatient: r[Feature::NInpatient] += 1; break;
                case CareSetting::Outpatient: r[Feature::NOutpatient] += 1; break;
                case CareSetting::Ed: r[Feature::NEd] += 1; break;
                case CareSetting::Pharmacy: r[Feature::NPharmacy] += 1; break;
                case CareSetting::SpecialtyRx: r[Feature::NSpecialtyRx] += 1; break;
            }
            if (c.code_system == CodeSystem::NDC)
                if (auto cls = drug_class(c.code)) classes.insert(*cls);
        }
        r[Feature::NDistinctDrugClasses] = double(classes.size());

        for (std::size_t i = 0; i < flags.size(); ++i)
            r.values[std::size_t(Feature::ChemoFlag) + i] = any_match(doc.claims, *flags[i]) ? 1.0 : 0.0;

        r[Feature::BaseYearCost] = doc.cost_in(cohort.base_year).dollars();
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<RiskLabel> compute_risk_labels(const Cohort& cohort, int target_year, const LabelOptions& opts) {
    std::vector<RiskLabel> labels;
    labels.reserve(cohort.documents.size());
    double total = 0.0;
    for (const auto& doc : cohort.documents) {
        const int months = doc.member.months_in(target_year);
        if (months < 1)
            throw Error("patient " + doc.patient_id + " has no enrollment months in " + std::to_string(target_year));
        double annual = doc.cost_in(target_year).dollars() * 12.0 / double(months);
        if (opts.cost_cap) annual = std::min(annual, *opts.cost_cap);
        labels.push_back(RiskLabel{doc.patient_id, annual, 0.0});
        total += annual;
    }
    if (labels.empty()) return labels;
    const double mean = total / double(labels.size());
    if (!(mean > 0.0)) throw Error("cannot rescale risk scores: mean annualized cost is zero");
    for (auto& l : labels) l.risk_score = l.annualized_cost / mean;
    return labels;
}

Split split_train_test(std::span<const std::string> ids, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must be in (0,1)");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    // Floor with a guard against products like 0.7 * 10 = 7.000000000000001.
    const auto n_train = std::size_t(std::floor(fraction * double(ids.size()) + 1e-9));
    Split s;
    s.train.reserve(n_train);
    s.test.reserve(ids.size() - n_train);
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? s.train : s.test).push_back(ids[order[i]]);
    return s;
}

void write_features_csv(std::ostream& out, const std::vector<FeatureRow>& rows) {
    out << "patient_id";
    for (auto name : kFeatureNames) out << ',' << name;
    out << '\n';
    for (const auto& r : rows) {
        out << r.patient_id;
        for (double v : r.values) out << ',' << io::format_double(v);
        out << '\n';
    }
}

std::vector<FeatureRow> read_features_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(source, 1, "header", "missing header");
    auto head = io::split(io::trim(line), ',');
    if (head.size() != kFeatureCount + 1 || head[0] != "patient_id" ||
        !std::equal(kFeatureNames.begin(), kFeatureNames.end(), head.begin() + 1))
        throw ParseError(source, 1, "header", "unexpected feature columns");
    std::vector<FeatureRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        auto view = io::trim(line);
        if (view.empty()) continue;
        auto f = io::split(view, ',');
        if (f.size() != kFeatureCount + 1) throw ParseError(source, lineno, "row", "wrong field count");
        FeatureRow r;
        r.patient_id = std::string(f[0]);
        for (std::size_t i = 0; i < kFeatureCount; ++i)
            if (!io::parse_double(f[i + 1], r.values[i]))
                throw ParseError(source, lineno, std::string(kFeatureNames[i]), "not a number");
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_labels_csv(std::ostream& out, const std::vector<RiskLabel>& labels) {
    out << "patient_id,annualized_cost,risk_score\n";
    for (const auto& l : labels)
        out << l.patient_id << ',' << io::format_double(l.annualized_cost) << ',' << io::format_double(l.risk_score)
            << '\n';
}

std::vector<RiskLabel> read_labels_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line) || io::trim(line) != "patient_id,annualized_cost,risk_score")
        throw ParseError(source, 1, "header", "expected 'patient_id,annualized_cost,risk_score'");
    std::vector<RiskLabel> labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        auto view = io::trim(line);
        if (view.empty()) continue;
        auto f = io::split(view, ',');
        RiskLabel l;
        if (f.size() != 3 || !io::parse_double(f[1], l.annualized_cost) || !io::parse_double(f[2], l.risk_score))
            throw ParseError(source, lineno, "row", "expected patient_id,annualized_cost,risk_score");
        l.patient_id = std::string(f[0]);
        labels.push_back(std::move(l));
    }
    return labels;
}

}  // namespace claimvec
