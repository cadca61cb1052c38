#include <sstream>

#include "claimvec/claims.hpp"
#include "claimvec/error.hpp"
#include "doctest.h"
#include "unit/helpers.hpp"

using namespace claimvec;
using testutil::claim;
using testutil::member;
using testutil::ymd;

namespace {

std::vector<ClaimRecord> claims_from(const std::string& body) {
    std::istringstream in(std::string(kClaimsHeader) + "\n" + body);
    return parse_claims(in, "claims.csv");
}

std::vector<MemberRecord> members_from(const std::string& body) {
    std::istringstream in(std::string(kMembersHeader) + "\n" + body);
    return parse_members(in, "members.csv");
}

}  // namespace

TEST_CASE("claims file with only a header is empty") { CHECK(claims_from("").empty()); }

TEST_CASE("claim row maps field by field") {
    const auto c = claims_from("P1,2015-03-02,ICD10,E11.9,125.00,outpatient\n");
    REQUIRE(c.size() == 1);
    CHECK(c[0] == claim("P1", ymd(2015, 3, 2), "E11.9", 12500));
}

TEST_CASE("negative cost is rejected at its line") {
    try {
        claims_from("P1,2015-03-02,ICD10,E11.9,125.00,outpatient\nP1,2015-03-03,ICD10,E11.9,-5,outpatient\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("claims.csv:3") != std::string::npos);
        CHECK(msg.find("allowed_cost") != std::string::npos);
    }
}

TEST_CASE("claims parser rejects malformed fields") {
    CHECK_THROWS_AS(claims_from("P1,2015-02-30,ICD10,E11.9,1.00,outpatient\n"), ParseError);
    CHECK_THROWS_AS(claims_from("P1,2015-02-03,LOINC,E11.9,1.00,outpatient\n"), ParseError);
    CHECK_THROWS_AS(claims_from("P1,2015-02-03,ICD10,E11.9,1.001,outpatient\n"), ParseError);
    CHECK_THROWS_AS(claims_from("P1,2015-02-03,ICD10,E11.9,1.00,hospice\n"), ParseError);
    CHECK_THROWS_AS(claims_from("P1,2015-02-03,ICD10,E11.9,1.00\n"), ParseError);
    std::istringstream no_header("P1,2015-03-02,ICD10,E11.9,125.00,outpatient\n");
    CHECK_THROWS_AS(parse_claims(no_header), ParseError);
}

TEST_CASE("money parsing") {
    CHECK(parse_money("125")->cents == 12500);
    CHECK(parse_money("0.5")->cents == 50);
    CHECK(parse_money("19.99")->cents == 1999);
    CHECK_FALSE(parse_money("-5"));
    CHECK_FALSE(parse_money("1e3"));
    CHECK_FALSE(parse_money(""));
    CHECK(format_money(Money{1999}) == "19.99");
}

TEST_CASE("member row maps field by field") {
    const auto m = members_from("P1,1974,F,0.034,2015:12;2016:6\n");
    REQUIRE(m.size() == 1);
    CHECK(m[0].patient_id == "P1");
    CHECK(m[0].birth_year == 1974);
    CHECK(m[0].sex == Sex::Female);
    CHECK(m[0].zip3_black_pct == doctest::Approx(0.034));
    CHECK(m[0].enrollment_months == std::map<int, int>{{2015, 12}, {2016, 6}});
}

TEST_CASE("duplicate member ids and bad months are rejected") {
    CHECK_THROWS_AS(members_from("P1,1974,F,0.034,2015:12\nP1,1975,M,0.01,2015:12\n"), ParseError);
    CHECK_THROWS_AS(members_from("P1,1974,F,0.034,2015:13\n"), ParseError);
}

TEST_CASE("claims and members round-trip through CSV") {
    std::vector<ClaimRecord> claims = {claim("P1", ymd(2015, 1, 5), "A", 100),
                                       claim("P2", ymd(2016, 12, 31), "00093415073", 123456, CodeSystem::NDC,
                                             CareSetting::SpecialtyRx)};
    std::ostringstream out;
    write_claims(out, claims);
    std::istringstream in(out.str());
    CHECK(parse_claims(in) == claims);

    std::vector<MemberRecord> members = {member("P1"), member("P2", 2001, Sex::Male, 3, 0)};
    std::ostringstream mo;
    write_members(mo, members);
    std::istringstream mi(mo.str());
    CHECK(parse_members(mi) == members);
}

TEST_CASE("cohort inclusion rules") {
    const std::vector<MemberRecord> members = {member("KEEP"), member("NO_TARGET_MONTHS", 1980, Sex::Male, 12, 0),
                                               member("TARGET_ONLY")};
    const std::vector<ClaimRecord> claims = {
        claim("KEEP", ymd(2015, 2, 1), "A"),        claim("KEEP", ymd(2016, 2, 1), "B"),
        claim("NO_TARGET_MONTHS", ymd(2015, 2, 1), "A"), claim("NO_TARGET_MONTHS", ymd(2016, 2, 1), "A"),
        claim("TARGET_ONLY", ymd(2016, 5, 1), "A")};
    const auto cohort = build_cohort(claims, members, 2015, 2016);
    REQUIRE(cohort.size() == 1);
    CHECK(cohort.documents[0].patient_id == "KEEP");
    CHECK(cohort.documents[0].tokens == std::vector<std::string>{"A"});
    CHECK(cohort.documents[0].cost_in(2016).cents == 10000);
}

TEST_CASE("tokens follow date order with input-order ties") {
    const std::vector<ClaimRecord> claims = {claim("P", ymd(2015, 3, 2), "X"), claim("P", ymd(2015, 1, 5), "A"),
                                             claim("P", ymd(2015, 1, 5), "B"), claim("P", ymd(2016, 1, 1), "Z")};
    const auto cohort = build_cohort(claims, {member("P")}, 2015, 2016);
    REQUIRE(cohort.size() == 1);
    CHECK(cohort.documents[0].tokens == std::vector<std::string>{"A", "B", "X"});
    REQUIRE(cohort.documents[0].claims.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(cohort.documents[0].claims[i].code == cohort.documents[0].tokens[i]);
}

TEST_CASE("claims for unknown patients are reported") {
    try {
        build_cohort({claim("GHOST", ymd(2015, 1, 1), "A")}, {member("P")}, 2015, 2016);
        FAIL("expected Error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("GHOST") != std::string::npos);
    }
}

TEST_CASE("cohort round-trips through JSON lines") {
    const std::vector<ClaimRecord> claims = {claim("P1", ymd(2015, 3, 2), "X", 250), claim("P1", ymd(2016, 1, 1), "Y"),
                                             claim("P2", ymd(2015, 6, 2), "00093415073", 999, CodeSystem::NDC,
                                                   CareSetting::Pharmacy),
                                             claim("P2", ymd(2016, 6, 2), "Z")};
    const auto cohort = build_cohort(claims, {member("P1"), member("P2", 1950, Sex::Male)}, 2015, 2016);
    std::ostringstream out;
    write_cohort(out, cohort);
    std::istringstream in(out.str());
    const auto back = read_cohort(in, 2015, 2016);
    CHECK(back.documents == cohort.documents);
}
