#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace claimvec {

enum class CodeSystem : std::uint8_t { ICD9, ICD10, CPT, NDC };
enum class CareSetting : std::uint8_t { Inpatient, Outpatient, Ed, Pharmacy, SpecialtyRx };
enum class Sex : std::uint8_t { Male, Female };

std::string_view to_string(CodeSystem s) noexcept;
std::string_view to_string(CareSetting s) noexcept;
std::string_view to_string(Sex s) noexcept;  // "M" / "F"
std::optional<CodeSystem> parse_code_system(std::string_view s) noexcept;
std::optional<CareSetting> parse_care_setting(std::string_view s) noexcept;
std::optional<Sex> parse_sex(std::string_view s) noexcept;

using Date = std::chrono::year_month_day;

/// Strict YYYY-MM-DD.
std::optional<Date> parse_date(std::string_view s) noexcept;
std::string format_date(Date d);
inline int year_of(Date d) noexcept { return static_cast<int>(d.year()); }

/// Non-negative USD amount held in integer cents so that CSV round trips are exact.
struct Money {
    std::int64_t cents = 0;

    double dollars() const noexcept { return static_cast<double>(cents) / 100.0; }
    friend auto operator<=>(const Money&, const Money&) = default;
    Money& operator+=(Money o) noexcept {
        cents += o.cents;
        return *this;
    }
};

/// Decimal with at most two fraction digits; rejects signs, exponents, and empty input.
std::optional<Money> parse_money(std::string_view s) noexcept;
std::string format_money(Money m);

struct ClaimRecord {
    std::string patient_id;
    Date service_date;
    CodeSystem code_system = CodeSystem::ICD10;
    std::string code;
    Money allowed_cost;
    CareSetting setting = CareSetting::Outpatient;

    friend bool operator==(const ClaimRecord&, const ClaimRecord&) = default;
};

struct MemberRecord {
    std::string patient_id;
    int birth_year = 0;
    Sex sex = Sex::Female;
    double zip3_black_pct = 0.0;
    std::map<int, int> enrollment_months;  // calendar year -> months in [0, 12]

    int months_in(int year) const noexcept {
        auto it = enrollment_months.find(year);
        return it == enrollment_months.end() ? 0 : it->second;
    }
    friend bool operator==(const MemberRecord&, const MemberRecord&) = default;
};

/// One patient's base-year record. `claims` are the base-year claims in token order,
/// so `claims[i].code == tokens[i]`.
struct PatientDocument {
    std::string patient_id;
    std::vector<std::string> tokens;
    MemberRecord member;
    std::map<int, Money> cost_by_year;
    std::vector<ClaimRecord> claims;

    Money cost_in(int year) const noexcept {
        auto it = cost_by_year.find(year);
        return it == cost_by_year.end() ? Money{} : it->second;
    }
    friend bool operator==(const PatientDocument&, const PatientDocument&) = default;
};

struct Cohort {
    int base_year = 2015;
    int target_year = 2016;
    std::vector<PatientDocument> documents;

    std::size_t size() const noexcept { return documents.size(); }
};

inline constexpr std::string_view kClaimsHeader =
    "patient_id,service_date,code_system,code,allowed_cost,setting";
inline constexpr std::string_view kMembersHeader =
    "patient_id,birth_year,sex,zip3_black_pct,enrollment";

// Claims / members CSV. `source` is only used to label parse errors.
std::vector<ClaimRecord> parse_claims(std::istream& in, const std::string& source = "<claims>");
std::vector<ClaimRecord> parse_claims(const std::filesystem::path& path);
void write_claims(std::ostream& out, const std::vector<ClaimRecord>& claims);
void write_claim_row(std::ostream& out, const ClaimRecord& c);

std::vector<MemberRecord> parse_members(std::istream& in, const std::string& source = "<members>");
std::vector<MemberRecord> parse_members(const std::filesystem::path& path);
void write_members(std::ostream& out, const std::vector<MemberRecord>& members);
void write_member_row(std::ostream& out, const MemberRecord& m);

/**
 * Applies the inclusion rules and assembles per-patient documents.
 *
 * A member is kept when it has at least one enrollment month and at least one claim in
 * both `base_year` and `target_year`. Tokens are the base-year claim codes, verbatim,
 * ordered by (service_date, code_system, code, input position). Documents follow the
 * order of `members`.
 *
 * Throws Error listing every claim patient_id that has no member record.
 */
Cohort build_cohort(const std::vector<ClaimRecord>& claims,
                    const std::vector<MemberRecord>& members,
                    int base_year,
                    int target_year);

// Cohort as JSON lines, one PatientDocument per line.
void write_cohort(std::ostream& out, const Cohort& cohort);
Cohort read_cohort(std::istream& in, int base_year, int target_year,
                   const std::string& source = "<cohort>");

}  // namespace claimvec
