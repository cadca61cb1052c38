#include "claimvec/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "claimvec/error.hpp"
#include "claimvec/io.hpp"
#include "json.hpp"

namespace claimvec::synth {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::mt19937_64 patient_stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double condition_probability(const ConditionSpec& c, int age) {
    if (c.age_shift == 0.0 || c.prevalence <= 0.0 || c.prevalence >= 1.0) return c.prevalence;
    const double logit = std::log(c.prevalence / (1.0 - c.prevalence));
    return sigmoid(logit + c.age_shift * (age - 40) / 10.0);
}

int draw_age(const PopulationSpec& spec, std::mt19937_64& rng) {
    std::discrete_distribution<std::size_t> band_dist(spec.age_distribution.begin(), spec.age_distribution.end());
    const std::size_t band = band_dist(rng);
    const int lo = band == 0 ? 0 : kAgeBandUpper[band - 1] + 1;
    const int hi = band + 1 == kAgeBandCount ? 94 : kAgeBandUpper[band];
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

int draw_months(const PopulationSpec& spec, std::mt19937_64& rng) {
    if (std::bernoulli_distribution(spec.churn)(rng)) return std::uniform_int_distribution<int>(1, 12)(rng);
    return 12;
}

struct SimulatedPatient {
    PatientTruth truth;
    MemberRecord member;
    std::vector<ClaimRecord> claims;
};

SimulatedPatient simulate(const PopulationSpec& spec, std::uint64_t index, bool with_claims) {
    auto rng = patient_stream(spec.seed, index);
    SimulatedPatient p;
    auto& t = p.truth;
    t.sex = std::bernoulli_distribution(spec.female_fraction)(rng) ? Sex::Female : Sex::Male;
    t.age = draw_age(spec, rng);
    const std::size_t n_cond = spec.conditions.size();
    t.base_conditions.resize(n_cond);
    t.target_conditions.resize(n_cond);
    for (std::size_t c = 0; c < n_cond; ++c) {
        const auto& cond = spec.conditions[c];
        const double prob = condition_probability(cond, t.age);
        t.base_conditions[c] = std::bernoulli_distribution(prob)(rng);
        t.target_conditions[c] = cond.chronic ? bool(t.base_conditions[c]) : std::bernoulli_distribution(prob)(rng);
    }

    auto& m = p.member;
    const int width = std::max<int>(6, int(std::to_string(std::max<std::int64_t>(spec.n_patients, 1)).size()));
    std::string id = std::to_string(index);
    m.patient_id = "P" + std::string(std::size_t(std::max(0, width - int(id.size()))), '0') + id;
    m.sex = t.sex;
    m.birth_year = spec.base_year - t.age;
    {
        std::lognormal_distribution<double> pct(std::log(0.045), 0.6);
        const double v = std::min(1.0, pct(rng));
        m.zip3_black_pct = std::round(v * 1000.0) / 1000.0;
    }
    const int base_months = draw_months(spec, rng);
    const int target_months = draw_months(spec, rng);
    m.enrollment_months[spec.base_year] = base_months;
    m.enrollment_months[spec.target_year] = target_months;
    if (!with_claims) return p;

    auto emit_year = [&](int year, int months, const std::vector<bool>& active) {
        int n_chronic = 0;
        for (std::size_t c = 0; c < n_cond; ++c)
            if (active[c] && spec.conditions[c].chronic) ++n_chronic;
        const double factor = n_chronic >= 2 ? spec.comorbidity_factor : 1.0;
        const double year_fraction = months / 12.0;
        std::uniform_int_distribution<int> month_dist(1, months);
        std::uniform_int_distribution<int> day_dist(1, 28);
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        auto emit = [&](const PoolCode& code, const LogNormal& cost, CareSetting setting) {
            ClaimRecord claim;
            claim.patient_id = m.patient_id;
            claim.service_date = Date{std::chrono::year{year}, std::chrono::month{unsigned(month_dist(rng))},
                                      std::chrono::day{unsigned(day_dist(rng))}};
            claim.code_system = code.system;
            claim.code = code.code;
            const double dollars = std::lognormal_distribution<double>(cost.mu, cost.sigma)(rng) * factor;
            claim.allowed_cost = Money{std::llround(dollars * 100.0)};
            claim.setting = setting;
            p.claims.push_back(std::move(claim));
        };

        for (std::size_t c = 0; c < n_cond; ++c) {
            if (!active[c]) continue;
            const auto& cond = spec.conditions[c];
            const int n = std::poisson_distribution<int>(cond.visits_per_year * year_fraction)(rng);
            std::uniform_int_distribution<std::size_t> pick(0, cond.code_pool.size() - 1);
            for (int k = 0; k < n; ++k) {
                const auto& code = cond.code_pool[pick(rng)];
                CareSetting setting = CareSetting::Outpatient;
                const double u = unit(rng);
                if (code.system == CodeSystem::NDC)
                    setting = cond.specialty_rx ? CareSetting::SpecialtyRx : CareSetting::Pharmacy;
                else if (u < cond.inpatient_prob)
                    setting = CareSetting::Inpatient;
                else if (u < cond.inpatient_prob + cond.ed_prob)
                    setting = CareSetting::Ed;
                emit(code, cond.cost_per_claim, setting);
            }
        }
        if (!spec.background_code_pool.empty()) {
            const int n = std::poisson_distribution<int>(spec.background_visit_rate * year_fraction)(rng);
            std::uniform_int_distribution<std::size_t> pick(0, spec.background_code_pool.size() - 1);
            for (int k = 0; k < n; ++k) {
                const auto& code = spec.background_code_pool[pick(rng)];
                emit(code, spec.background_cost,
                     code.system == CodeSystem::NDC ? CareSetting::Pharmacy : CareSetting::Outpatient);
            }
        }
    };
    emit_year(spec.base_year, base_months, t.base_conditions);
    emit_year(spec.target_year, target_months, t.target_conditions);
    std::stable_sort(p.claims.begin(), p.claims.end(),
                     [](const ClaimRecord& a, const ClaimRecord& b) { return a.service_date < b.service_date; });
    return p;
}

PoolCode parse_pool_code(const std::string& s) {
    auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("pool code '" + s + "' must look like SYSTEM:code");
    auto sys = parse_code_system(std::string_view(s).substr(0, colon));
    if (!sys) throw ConfigError("pool code '" + s + "' has unknown code system");
    return PoolCode{*sys, s.substr(colon + 1)};
}

std::vector<PoolCode> parse_pool(const json& j) {
    std::vector<PoolCode> out;
    for (const auto& item : j) out.push_back(parse_pool_code(item.get<std::string>()));
    return out;
}

ordered_json pool_to_json(const std::vector<PoolCode>& pool) {
    ordered_json arr = ordered_json::array();
    for (const auto& c : pool) arr.push_back(std::string(to_string(c.system)) + ":" + c.code);
    return arr;
}

LogNormal parse_lognormal(const json& j) { return LogNormal{j.at("mu").get<double>(), j.at("sigma").get<double>()}; }

}  // namespace

void validate(const PopulationSpec& spec) {
    if (spec.n_patients < 0) throw ConfigError("n_patients must be >= 0");
    if (!(spec.female_fraction >= 0.0 && spec.female_fraction <= 1.0))
        throw ConfigError("female_fraction must be in [0,1]");
    if (!(spec.churn >= 0.0 && spec.churn <= 1.0)) throw ConfigError("churn must be in [0,1]");
    if (!(spec.background_visit_rate >= 0.0)) throw ConfigError("background_visit_rate must be >= 0");
    if (!(spec.comorbidity_factor > 0.0)) throw ConfigError("comorbidity_factor must be > 0");
    if (spec.base_year == spec.target_year) throw ConfigError("base_year and target_year must differ");
    double total = 0.0;
    for (double w : spec.age_distribution) {
        if (!(w >= 0.0)) throw ConfigError("age_distribution weights must be >= 0");
        total += w;
    }
    if (!(total > 0.0)) throw ConfigError("age_distribution must have positive total weight");
    for (const auto& c : spec.conditions) {
        const std::string where = "condition '" + c.name + "': ";
        if (!(c.prevalence >= 0.0 && c.prevalence <= 1.0)) throw ConfigError(where + "prevalence must be in [0,1]");
        if (!(c.visits_per_year >= 0.0)) throw ConfigError(where + "visits_per_year must be >= 0");
        if (c.code_pool.empty()) throw ConfigError(where + "code_pool must be non-empty");
        if (!(c.cost_per_claim.sigma >= 0.0)) throw ConfigError(where + "cost sigma must be >= 0");
        if (!(c.inpatient_prob >= 0.0 && c.ed_prob >= 0.0 && c.inpatient_prob + c.ed_prob <= 1.0))
            throw ConfigError(where + "inpatient_prob + ed_prob must be within [0,1]");
    }
}

PopulationSpec parse_population_spec(std::string_view json_text) {
    PopulationSpec spec;
    try {
        const auto j = json::parse(json_text);
        spec.n_patients = j.value("n_patients", spec.n_patients);
        spec.seed = j.value("seed", spec.seed);
        spec.base_year = j.value("base_year", spec.base_year);
        spec.target_year = j.value("target_year", spec.target_year);
        spec.female_fraction = j.value("female_fraction", spec.female_fraction);
        spec.churn = j.value("churn", spec.churn);
        spec.comorbidity_factor = j.value("comorbidity_factor", spec.comorbidity_factor);
        spec.background_visit_rate = j.value("background_visit_rate", spec.background_visit_rate);
        if (j.contains("background_cost")) spec.background_cost = parse_lognormal(j.at("background_cost"));
        if (j.contains("background_code_pool")) spec.background_code_pool = parse_pool(j.at("background_code_pool"));
        if (j.contains("age_distribution")) {
            auto w = j.at("age_distribution").get<std::vector<double>>();
            if (w.size() != kAgeBandCount)
                throw ConfigError("age_distribution needs " + std::to_string(kAgeBandCount) + " weights, got " +
                                  std::to_string(w.size()));
            std::copy(w.begin(), w.end(), spec.age_distribution.begin());
        } else {
            spec.age_distribution.fill(1.0);
        }
        for (const auto& cj : j.value("conditions", json::array())) {
            ConditionSpec c;
            c.name = cj.at("name").get<std::string>();
            c.prevalence = cj.at("prevalence").get<double>();
            c.age_shift = cj.value("age_shift", 0.0);
            c.code_pool = parse_pool(cj.at("code_pool"));
            c.visits_per_year = cj.at("visits_per_year").get<double>();
            c.cost_per_claim = parse_lognormal(cj.at("cost_per_claim"));
            c.chronic = cj.value("chronic", true);
            c.inpatient_prob = cj.value("inpatient_prob", c.inpatient_prob);
            c.ed_prob = cj.value("ed_prob", c.ed_prob);
            c.specialty_rx = cj.value("specialty_rx", false);
            spec.conditions.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("population spec: ") + e.what());
    }
    validate(spec);
    return spec;
}

PopulationSpec load_population_spec(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("population spec not found: " + path.string());
    return parse_population_spec(io::read_file(path));
}

std::string population_spec_to_json(const PopulationSpec& spec) {
    ordered_json j;
    j["n_patients"] = spec.n_patients;
    j["seed"] = spec.seed;
    j["base_year"] = spec.base_year;
    j["target_year"] = spec.target_year;
    j["female_fraction"] = spec.female_fraction;
    j["churn"] = spec.churn;
    j["comorbidity_factor"] = spec.comorbidity_factor;
    j["background_visit_rate"] = spec.background_visit_rate;
    j["background_cost"] = {{"mu", spec.background_cost.mu}, {"sigma", spec.background_cost.sigma}};
    j["background_code_pool"] = pool_to_json(spec.background_code_pool);
    j["age_distribution"] = spec.age_distribution;
    ordered_json conds = ordered_json::array();
    for (const auto& c : spec.conditions) {
        ordered_json cj;
        cj["name"] = c.name;
        cj["prevalence"] = c.prevalence;
        cj["age_shift"] = c.age_shift;
        cj["code_pool"] = pool_to_json(c.code_pool);
        cj["visits_per_year"] = c.visits_per_year;
        cj["cost_per_claim"] = {{"mu", c.cost_per_claim.mu}, {"sigma", c.cost_per_claim.sigma}};
        cj["chronic"] = c.chronic;
        cj["inpatient_prob"] = c.inpatient_prob;
        cj["ed_prob"] = c.ed_prob;
        cj["specialty_rx"] = c.specialty_rx;
        conds.push_back(std::move(cj));
    }
    j["conditions"] = std::move(conds);
    return j.dump(2) + "\n";
}

PatientTruth draw_patient_truth(const PopulationSpec& spec, std::uint64_t patient_index) {
    return simulate(spec, patient_index, false).truth;
}

GeneratedCounts generate(const PopulationSpec& spec, std::ostream& claims_out, std::ostream& members_out) {
    validate(spec);
    claims_out << kClaimsHeader << '\n';
    members_out << kMembersHeader << '\n';
    GeneratedCounts counts;
    for (std::int64_t i = 0; i < spec.n_patients; ++i) {
        auto p = simulate(spec, static_cast<std::uint64_t>(i), true);
        write_member_row(members_out, p.member);
        for (const auto& c : p.claims) write_claim_row(claims_out, c);
        ++counts.members;
        counts.claims += p.claims.size();
    }
    return counts;
}

GeneratedCounts generate_files(const PopulationSpec& spec, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ostringstream claims, members;
    auto counts = generate(spec, claims, members);
    io::write_file_atomic(out_dir / "claims.csv", claims.str());
    io::write_file_atomic(out_dir / "members.csv", members.str());
    return counts;
}

std::vector<CodePair> planted_pairs(const PopulationSpec& spec) {
    // code -> set of pool indices it belongs to; background pool has index conditions.size()
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> pools_of;
    auto add = [&](const std::string& code, std::size_t pool) {
        auto [it, inserted] = pools_of.try_emplace(code);
        if (inserted) order.push_back(code);
        if (std::find(it->second.begin(), it->second.end(), pool) == it->second.end()) it->second.push_back(pool);
    };
    const std::size_t n_cond = spec.conditions.size();
    if (n_cond == 0) return {};
    for (std::size_t c = 0; c < n_cond; ++c)
        for (const auto& code : spec.conditions[c].code_pool) add(code.code, c);
    for (const auto& code : spec.background_code_pool) add(code.code, n_cond);

    std::vector<CodePair> out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            const auto& pa = pools_of[order[i]];
            const auto& pb = pools_of[order[j]];
            bool same = false;
            for (auto p : pa)
                if (p < n_cond && std::find(pb.begin(), pb.end(), p) != pb.end()) same = true;
            out.push_back(CodePair{order[i], order[j], same});
        }
    }
    return out;
}

}  // namespace claimvec::synth
