#include <unordered_set>

#include "claimvec/error.hpp"
#include "claimvec/models.hpp"

namespace claimvec {

DesignMatrix::DesignMatrix(std::vector<std::string> col_names, Eigen::MatrixXd values)
    : names_(std::move(col_names)), values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1) throw Error("design matrix needs at least one row and one column");
    if (Eigen::Index(names_.size()) != values_.cols())
        throw Error("design matrix has " + std::to_string(values_.cols()) + " columns but " +
                    std::to_string(names_.size()) + " names");
    std::unordered_set<std::string> seen;
    for (const auto& n : names_)
        if (!seen.insert(n).second) throw Error("duplicate design matrix column '" + n + "'");
    if (!values_.allFinite()) throw Error("design matrix contains NaN or Inf");
}

std::optional<Eigen::Index> DesignMatrix::column(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return Eigen::Index(i);
    return std::nullopt;
}

DesignMatrix DesignMatrix::select_rows(std::span<const Eigen::Index> rows) const {
    Eigen::MatrixXd out(Eigen::Index(rows.size()), values_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = values_.row(rows[i]);
    return DesignMatrix(names_, std::move(out));
}

DesignMatrix DesignMatrix::select_columns(std::span<const std::string> names) const {
    Eigen::MatrixXd out(values_.rows(), Eigen::Index(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        auto c = column(names[j]);
        if (!c) throw Error("design matrix has no column '" + names[j] + "'");
        out.col(Eigen::Index(j)) = values_.col(*c);
    }
    return DesignMatrix(std::vector<std::string>(names.begin(), names.end()), std::move(out));
}

}  // namespace claimvec
