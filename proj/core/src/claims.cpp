#include "claimvec/claims.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "claimvec/error.hpp"
#include "claimvec/io.hpp"
#include "json.hpp"

namespace claimvec {

namespace {

constexpr std::string_view kCodeSystemNames[] = {"ICD9", "ICD10", "CPT", "NDC"};
constexpr std::string_view kSettingNames[] = {"inpatient", "outpatient", "ed", "pharmacy", "specialty_rx"};

bool is_digits(std::string_view s) noexcept {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool has_space(std::string_view s) noexcept {
    return std::any_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; });
}

// Reads data lines after a mandatory header. Blank lines are skipped.
template <class RowFn>
void for_each_row(std::istream& in, const std::string& source, std::string_view header, RowFn&& fn) {
    std::string line;
    std::size_t lineno = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = line;
        if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
        if (!saw_header) {
            if (lineno == 1 && view.size() >= 3 && view.substr(0, 3) == "\xEF\xBB\xBF") view.remove_prefix(3);
            if (view != header)
                throw ParseError(source, lineno, "header", "expected '" + std::string(header) + "'");
            saw_header = true;
            continue;
        }
        if (io::trim(view).empty()) continue;
        fn(view, lineno);
    }
    if (!saw_header) throw ParseError(source, 1, "header", "missing header line");
}

}  // namespace

std::string_view to_string(CodeSystem s) noexcept { return kCodeSystemNames[static_cast<int>(s)]; }
std::string_view to_string(CareSetting s) noexcept { return kSettingNames[static_cast<int>(s)]; }
std::string_view to_string(Sex s) noexcept { return s == Sex::Male ? "M" : "F"; }

std::optional<CodeSystem> parse_code_system(std::string_view s) noexcept {
    for (int i = 0; i < 4; ++i)
        if (s == kCodeSystemNames[i]) return static_cast<CodeSystem>(i);
    return std::nullopt;
}

std::optional<CareSetting> parse_care_setting(std::string_view s) noexcept {
    for (int i = 0; i < 5; ++i)
        if (s == kSettingNames[i]) return static_cast<CareSetting>(i);
    return std::nullopt;
}

std::optional<Sex> parse_sex(std::string_view s) noexcept {
    if (s == "M") return Sex::Male;
    if (s == "F") return Sex::Female;
    return std::nullopt;
}

std::optional<Date> parse_date(std::string_view s) noexcept {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    long long y = 0, m = 0, d = 0;
    if (!is_digits(s.substr(0, 4)) || !is_digits(s.substr(5, 2)) || !is_digits(s.substr(8, 2))) return std::nullopt;
    io::parse_int(s.substr(0, 4), y);
    io::parse_int(s.substr(5, 2), m);
    io::parse_int(s.substr(8, 2), d);
    Date date{std::chrono::year{int(y)}, std::chrono::month{unsigned(m)}, std::chrono::day{unsigned(d)}};
    if (!date.ok()) return std::nullopt;
    return date;
}

std::string format_date(Date d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

std::optional<Money> parse_money(std::string_view s) noexcept {
    auto dot = s.find('.');
    std::string_view whole = s.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
    if (!is_digits(whole) || whole.size() > 15) return std::nullopt;
    if (dot != std::string_view::npos && (frac.empty() || frac.size() > 2 || !is_digits(frac))) return std::nullopt;
    long long w = 0, f = 0;
    io::parse_int(whole, w);
    if (!frac.empty()) {
        io::parse_int(frac, f);
        if (frac.size() == 1) f *= 10;
    }
    return Money{w * 100 + f};
}

std::string format_money(Money m) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%02lld", static_cast<long long>(m.cents / 100),
                  static_cast<long long>(m.cents % 100));
    return buf;
}

std::vector<ClaimRecord> parse_claims(std::istream& in, const std::string& source) {
    std::vector<ClaimRecord> out;
    for_each_row(in, source, kClaimsHeader, [&](std::string_view row, std::size_t lineno) {
        auto f = io::split(row, ',');
        if (f.size() != 6)
            throw ParseError(source, lineno, "row", "expected 6 fields, got " + std::to_string(f.size()));
        ClaimRecord c;
        if (f[0].empty() || has_space(f[0])) throw ParseError(source, lineno, "patient_id", "empty or contains whitespace");
        c.patient_id = std::string(f[0]);
        auto date = parse_date(f[1]);
        if (!date) throw ParseError(source, lineno, "service_date", "expected YYYY-MM-DD, got '" + std::string(f[1]) + "'");
        c.service_date = *date;
        auto sys = parse_code_system(f[2]);
        if (!sys) throw ParseError(source, lineno, "code_system", "unknown code system '" + std::string(f[2]) + "'");
        c.code_system = *sys;
        if (f[3].empty() || has_space(f[3])) throw ParseError(source, lineno, "code", "empty or contains whitespace");
        c.code = std::string(f[3]);
        auto cost = parse_money(f[4]);
        if (!cost)
            throw ParseError(source, lineno, "allowed_cost",
                             "expected non-negative decimal with at most 2 fraction digits, got '" + std::string(f[4]) + "'");
        c.allowed_cost = *cost;
        auto setting = parse_care_setting(f[5]);
        if (!setting) throw ParseError(source, lineno, "setting", "unknown setting '" + std::string(f[5]) + "'");
        c.setting = *setting;
        out.push_back(std::move(c));
    });
    return out;
}

std::vector<ClaimRecord> parse_claims(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open claims file " + path.string());
    return parse_claims(in, path.string());
}

void write_claim_row(std::ostream& out, const ClaimRecord& c) {
    out << c.patient_id << ',' << format_date(c.service_date) << ',' << to_string(c.code_system) << ','
        << c.code << ',' << format_money(c.allowed_cost) << ',' << to_string(c.setting) << '\n';
}

void write_claims(std::ostream& out, const std::vector<ClaimRecord>& claims) {
    out << kClaimsHeader << '\n';
    for (const auto& c : claims) write_claim_row(out, c);
}

std::vector<MemberRecord> parse_members(std::istream& in, const std::string& source) {
    std::vector<MemberRecord> out;
    std::unordered_set<std::string> seen;
    for_each_row(in, source, kMembersHeader, [&](std::string_view row, std::size_t lineno) {
        auto f = io::split(row, ',');
        if (f.size() != 5)
            throw ParseError(source, lineno, "row", "expected 5 fields, got " + std::to_string(f.size()));
        MemberRecord m;
        if (f[0].empty() || has_space(f[0])) throw ParseError(source, lineno, "patient_id", "empty or contains whitespace");
        m.patient_id = std::string(f[0]);
        if (!seen.insert(m.patient_id).second)
            throw ParseError(source, lineno, "patient_id", "duplicate patient_id '" + m.patient_id + "'");
        long long by = 0;
        if (!io::parse_int(f[1], by)) throw ParseError(source, lineno, "birth_year", "not an integer");
        m.birth_year = static_cast<int>(by);
        auto sex = parse_sex(f[2]);
        if (!sex) throw ParseError(source, lineno, "sex", "expected M or F, got '" + std::string(f[2]) + "'");
        m.sex = *sex;
        if (!io::parse_double(f[3], m.zip3_black_pct) || !(m.zip3_black_pct >= 0.0 && m.zip3_black_pct <= 1.0))
            throw ParseError(source, lineno, "zip3_black_pct", "expected a fraction in [0,1]");
        if (!f[4].empty()) {
            for (auto item : io::split(f[4], ';')) {
                auto colon = item.find(':');
                long long year = 0, months = 0;
                if (colon == std::string_view::npos || !io::parse_int(item.substr(0, colon), year) ||
                    !io::parse_int(item.substr(colon + 1), months))
                    throw ParseError(source, lineno, "enrollment", "expected YYYY:MM, got '" + std::string(item) + "'");
                if (months < 0 || months > 12)
                    throw ParseError(source, lineno, "enrollment",
                                     "months " + std::to_string(months) + " outside [0,12] for year " + std::to_string(year));
                if (!m.enrollment_months.emplace(int(year), int(months)).second)
                    throw ParseError(source, lineno, "enrollment", "year " + std::to_string(year) + " listed twice");
            }
        }
        out.push_back(std::move(m));
    });
    return out;
}

std::vector<MemberRecord> parse_members(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open members file " + path.string());
    return parse_members(in, path.string());
}

void write_member_row(std::ostream& out, const MemberRecord& m) {
    out << m.patient_id << ',' << m.birth_year << ',' << to_string(m.sex) << ',' << io::format_double(m.zip3_black_pct)
        << ',';
    bool first = true;
    for (auto [year, months] : m.enrollment_months) {
        if (!first) out << ';';
        out << year << ':' << (months < 10 ? "0" : "") << months;
        first = false;
    }
    out << '\n';
}

void write_members(std::ostream& out, const std::vector<MemberRecord>& members) {
    out << kMembersHeader << '\n';
    for (const auto& m : members) write_member_row(out, m);
}

Cohort build_cohort(const std::vector<ClaimRecord>& claims,
                    const std::vector<MemberRecord>& members,
                    int base_year,
                    int target_year) {
    std::unordered_map<std::string_view, std::size_t> member_index;
    member_index.reserve(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) member_index.emplace(members[i].patient_id, i);

    struct Tally {
        std::vector<std::size_t> base_claims;  // indices into `claims`
        std::map<int, Money> cost_by_year;
        bool has_target = false;
    };
    std::vector<Tally> tally(members.size());
    std::set<std::string> unknown;

    for (std::size_t i = 0; i < claims.size(); ++i) {
        const auto& c = claims[i];
        auto it = member_index.find(c.patient_id);
        if (it == member_index.end()) {
            unknown.insert(c.patient_id);
            continue;
        }
        auto& t = tally[it->second];
        const int year = year_of(c.service_date);
        t.cost_by_year[year] += c.allowed_cost;
        if (year == base_year) t.base_claims.push_back(i);
        if (year == target_year) t.has_target = true;
    }
    if (!unknown.empty()) {
        std::string msg = "claims reference " + std::to_string(unknown.size()) + " unknown patient_id(s):";
        std::size_t shown = 0;
        for (const auto& id : unknown) {
            if (shown++ == 20) {
                msg += " ...";
                break;
            }
            msg += " " + id;
        }
        throw Error(msg);
    }

    Cohort cohort;
    cohort.base_year = base_year;
    cohort.target_year = target_year;
    for (std::size_t m = 0; m < members.size(); ++m) {
        const auto& member = members[m];
        auto& t = tally[m];
        if (member.months_in(base_year) < 1 || member.months_in(target_year) < 1) continue;
        if (t.base_claims.empty() || !t.has_target) continue;

        std::stable_sort(t.base_claims.begin(), t.base_claims.end(), [&](std::size_t a, std::size_t b) {
            const auto& ca = claims[a];
            const auto& cb = claims[b];
            return std::tie(ca.service_date, ca.code_system, ca.code, a) <
                   std::tie(cb.service_date, cb.code_system, cb.code, b);
        });
        PatientDocument doc;
        doc.patient_id = member.patient_id;
        doc.member = member;
        doc.cost_by_year = std::move(t.cost_by_year);
        doc.tokens.reserve(t.base_claims.size());
        doc.claims.reserve(t.base_claims.size());
        for (auto idx : t.base_claims) {
            doc.tokens.push_back(claims[idx].code);
            doc.claims.push_back(claims[idx]);
        }
        cohort.documents.push_back(std::move(doc));
    }
    return cohort;
}

// Cohort JSON-lines layout, one object per patient:
//   {"patient_id", "tokens": [...], "member": {"birth_year", "sex", "zip3_black_pct",
//    "enrollment_months": {"YYYY": n}}, "cost_by_year_cents": {"YYYY": cents},
//    "claims": [[service_date, code_system, code, allowed_cost_cents, setting], ...]}
void write_cohort(std::ostream& out, const Cohort& cohort) {
    using nlohmann::ordered_json;
    for (const auto& doc : cohort.documents) {
        ordered_json j;
        j["patient_id"] = doc.patient_id;
        j["tokens"] = doc.tokens;
        ordered_json member;
        member["birth_year"] = doc.member.birth_year;
        member["sex"] = std::string(to_string(doc.member.sex));
        member["zip3_black_pct"] = doc.member.zip3_black_pct;
        ordered_json months = ordered_json::object();
        for (auto [y, n] : doc.member.enrollment_months) months[std::to_string(y)] = n;
        member["enrollment_months"] = std::move(months);
        j["member"] = std::move(member);
        ordered_json costs = ordered_json::object();
        for (auto [y, c] : doc.cost_by_year) costs[std::to_string(y)] = c.cents;
        j["cost_by_year_cents"] = std::move(costs);
        ordered_json claims = ordered_json::array();
        for (const auto& c : doc.claims)
            claims.push_back({format_date(c.service_date), std::string(to_string(c.code_system)), c.code,
                              c.allowed_cost.cents, std::string(to_string(c.setting))});
        j["claims"] = std::move(claims);
        out << j.dump() << '\n';
    }
}

Cohort read_cohort(std::istream& in, int base_year, int target_year, const std::string& source) {
    Cohort cohort;
    cohort.base_year = base_year;
    cohort.target_year = target_year;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (io::trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            PatientDocument doc;
            doc.patient_id = j.at("patient_id").get<std::string>();
            doc.tokens = j.at("tokens").get<std::vector<std::string>>();
            const auto& m = j.at("member");
            doc.member.patient_id = doc.patient_id;
            doc.member.birth_year = m.at("birth_year").get<int>();
            auto sex = parse_sex(m.at("sex").get<std::string>());
            if (!sex) throw ParseError(source, lineno, "member.sex", "expected M or F");
            doc.member.sex = *sex;
            doc.member.zip3_black_pct = m.at("zip3_black_pct").get<double>();
            for (auto& [y, n] : m.at("enrollment_months").items())
                doc.member.enrollment_months[std::stoi(y)] = n.get<int>();
            for (auto& [y, c] : j.at("cost_by_year_cents").items())
                doc.cost_by_year[std::stoi(y)] = Money{c.get<std::int64_t>()};
            for (const auto& row : j.at("claims")) {
                ClaimRecord c;
                c.patient_id = doc.patient_id;
                auto date = parse_date(row.at(0).get<std::string>());
                auto sys = parse_code_system(row.at(1).get<std::string>());
                auto setting = parse_care_setting(row.at(4).get<std::string>());
                if (!date || !sys || !setting) throw ParseError(source, lineno, "claims", "bad claim tuple");
                c.service_date = *date;
                c.code_system = *sys;
                c.code = row.at(2).get<std::string>();
                c.allowed_cost = Money{row.at(3).get<std::int64_t>()};
                c.setting = *setting;
                doc.claims.push_back(std::move(c));
            }
            if (doc.claims.size() != doc.tokens.size())
                throw ParseError(source, lineno, "claims", "claims and tokens differ in length");
            cohort.documents.push_back(std::move(doc));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(source, lineno, "json", e.what());
        }
    }
    return cohort;
}

}  // namespace claimvec
