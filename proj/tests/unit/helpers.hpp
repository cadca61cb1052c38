#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "claimvec/claims.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("claimvec_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

inline claimvec::Date ymd(int y, unsigned m, unsigned d) {
    return claimvec::Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
}

inline claimvec::ClaimRecord claim(std::string id, claimvec::Date date, std::string code,
                                   long long cents = 10000,
                                   claimvec::CodeSystem sys = claimvec::CodeSystem::ICD10,
                                   claimvec::CareSetting setting = claimvec::CareSetting::Outpatient) {
    return claimvec::ClaimRecord{std::move(id), date, sys, std::move(code), claimvec::Money{cents}, setting};
}

inline claimvec::MemberRecord member(std::string id, int birth_year = 1980, claimvec::Sex sex = claimvec::Sex::Female,
                                     int base_months = 12, int target_months = 12) {
    claimvec::MemberRecord m;
    m.patient_id = std::move(id);
    m.birth_year = birth_year;
    m.sex = sex;
    m.zip3_black_pct = 0.05;
    m.enrollment_months = {{2015, base_months}, {2016, target_months}};
    return m;
}

inline std::string source_path(const std::string& rel) { return std::string(CLAIMVEC_SOURCE_DIR) + "/" + rel; }

}  // namespace testutil
