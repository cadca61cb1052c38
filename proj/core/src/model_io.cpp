#include <string>
#include <unordered_map>

#include "claimvec/error.hpp"
#include "claimvec/models.hpp"
#include "json.hpp"

namespace claimvec {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

/// Maps each fit-time column to its position in X, or throws listing the differences.
std::vector<Eigen::Index> align_columns(const std::vector<std::string>& fit_columns, const DesignMatrix& X) {
    std::unordered_map<std::string, Eigen::Index> pos;
    for (std::size_t j = 0; j < X.col_names().size(); ++j) pos.emplace(X.col_names()[j], Eigen::Index(j));
    std::vector<Eigen::Index> out;
    std::vector<std::string> missing;
    for (const auto& name : fit_columns) {
        auto it = pos.find(name);
        if (it == pos.end()) {
            missing.push_back(name);
        } else {
            out.push_back(it->second);
            pos.erase(it);
        }
    }
    if (!missing.empty() || !pos.empty()) {
        std::string msg = "predict: column mismatch;";
        if (!missing.empty()) {
            msg += " missing:";
            for (const auto& m : missing) msg += " " + m;
        }
        if (!pos.empty()) {
            std::vector<std::string> extra;
            for (const auto& [name, _] : pos) extra.push_back(name);
            std::sort(extra.begin(), extra.end());
            msg += " extra:";
            for (const auto& e : extra) msg += " " + e;
        }
        throw Error(msg);
    }
    return out;
}

ordered_json tree_to_json(const RegressionTree& tree, int node, const std::vector<std::string>& cols) {
    const auto& n = tree.nodes[std::size_t(node)];
    if (n.is_leaf()) return ordered_json{{"leaf", n.value}};
    ordered_json j;
    j["feature"] = cols[std::size_t(n.feature)];
    j["threshold"] = n.threshold;
    j["left"] = tree_to_json(tree, n.left, cols);
    j["right"] = tree_to_json(tree, n.right, cols);
    return j;
}

int tree_from_json(const json& j, RegressionTree& tree, const std::unordered_map<std::string, int>& col_index) {
    const int id = int(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("leaf")) {
        tree.nodes[std::size_t(id)].value = j.at("leaf").get<double>();
        return id;
    }
    auto it = col_index.find(j.at("feature").get<std::string>());
    if (it == col_index.end()) throw FormatError("tree references unknown feature " + j.at("feature").dump());
    const double threshold = j.at("threshold").get<double>();
    const int l = tree_from_json(j.at("left"), tree, col_index);
    const int r = tree_from_json(j.at("right"), tree, col_index);
    auto& n = tree.nodes[std::size_t(id)];
    n.feature = it->second;
    n.threshold = threshold;
    n.left = l;
    n.right = r;
    return id;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

}  // namespace

std::vector<double> predict(const RidgeModel& model, const DesignMatrix& X) {
    const auto cols = align_columns(model.input_columns, X);
    const auto& V = X.values();
    std::vector<double> out(std::size_t(X.rows()), model.intercept);
    for (std::size_t c = 0; c < model.kept.size(); ++c) {
        const auto src = cols[std::size_t(model.kept[c])];
        const double beta = model.coefficients(Eigen::Index(c)) / model.scales(Eigen::Index(c));
        const double mean = model.means(Eigen::Index(c));
        for (Eigen::Index i = 0; i < X.rows(); ++i) out[std::size_t(i)] += beta * (V(i, src) - mean);
    }
    return out;
}

std::vector<double> predict(const GbtModel& model, const DesignMatrix& X) {
    const auto cols = align_columns(model.input_columns, X);
    const auto& V = X.values();
    std::vector<double> out(std::size_t(X.rows()));
    std::vector<double> x(cols.size());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (std::size_t c = 0; c < cols.size(); ++c) x[c] = V(i, cols[c]);
        double sum = 0.0;
        for (const auto& t : model.trees) sum += t.predict(x);
        out[std::size_t(i)] = model.base_prediction + model.learning_rate * sum;
    }
    return out;
}

std::vector<double> predict(const FittedModel& model, const DesignMatrix& X) {
    return std::visit([&](const auto& m) { return predict(m, X); }, model);
}

std::string model_to_json(const FittedModel& model) {
    ordered_json j;
    j["format"] = "claimvec-model";
    j["version"] = kModelFormatVersion;
    if (const auto* r = std::get_if<RidgeModel>(&model)) {
        j["kind"] = "ridge";
        j["input_columns"] = r->input_columns;
        j["dropped_columns"] = r->dropped_columns;
        std::vector<std::string> kept;
        for (auto k : r->kept) kept.push_back(r->input_columns[std::size_t(k)]);
        j["kept_columns"] = kept;
        j["means"] = to_std(r->means);
        j["scales"] = to_std(r->scales);
        j["coefficients"] = to_std(r->coefficients);
        j["intercept"] = r->intercept;
        j["lambda"] = r->lambda;
        j["fit_intercept"] = r->options.fit_intercept;
        j["standardize"] = r->options.standardize;
    } else {
        const auto& g = std::get<GbtModel>(model);
        j["kind"] = "gbt";
        j["input_columns"] = g.input_columns;
        j["base_prediction"] = g.base_prediction;
        j["learning_rate"] = g.learning_rate;
        j["params"] = {{"max_depth", g.params.max_depth},
                       {"n_rounds", g.params.n_rounds},
                       {"learning_rate", g.params.learning_rate},
                       {"min_samples_leaf", g.params.min_samples_leaf},
                       {"n_bins", g.params.n_bins}};
        j["train_mse"] = g.train_mse;
        ordered_json trees = ordered_json::array();
        for (const auto& t : g.trees) trees.push_back(tree_to_json(t, 0, g.input_columns));
        j["trees"] = std::move(trees);
    }
    return j.dump();
}

FittedModel model_from_json(std::string_view text) {
    try {
        const auto j = json::parse(text);
        if (j.at("format").get<std::string>() != "claimvec-model") throw FormatError("not a claimvec model file");
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion)
            throw FormatError("model version " + std::to_string(version) + " does not match supported version " +
                              std::to_string(kModelFormatVersion));
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "ridge") {
            RidgeModel r;
            r.input_columns = j.at("input_columns").get<std::vector<std::string>>();
            r.dropped_columns = j.at("dropped_columns").get<std::vector<std::string>>();
            for (const auto& name : j.at("kept_columns").get<std::vector<std::string>>()) {
                auto it = std::find(r.input_columns.begin(), r.input_columns.end(), name);
                if (it == r.input_columns.end()) throw FormatError("kept column " + name + " not among inputs");
                r.kept.push_back(Eigen::Index(it - r.input_columns.begin()));
            }
            r.means = to_eigen(j.at("means").get<std::vector<double>>());
            r.scales = to_eigen(j.at("scales").get<std::vector<double>>());
            r.coefficients = to_eigen(j.at("coefficients").get<std::vector<double>>());
            if (std::size_t(r.means.size()) != r.kept.size() || std::size_t(r.scales.size()) != r.kept.size() ||
                std::size_t(r.coefficients.size()) != r.kept.size())
                throw FormatError("ridge arrays disagree in length");
            r.intercept = j.at("intercept").get<double>();
            r.lambda = j.at("lambda").get<double>();
            r.options.fit_intercept = j.at("fit_intercept").get<bool>();
            r.options.standardize = j.at("standardize").get<bool>();
            return r;
        }
        if (kind == "gbt") {
            GbtModel g;
            g.input_columns = j.at("input_columns").get<std::vector<std::string>>();
            g.base_prediction = j.at("base_prediction").get<double>();
            g.learning_rate = j.at("learning_rate").get<double>();
            const auto& p = j.at("params");
            g.params.max_depth = p.at("max_depth").get<int>();
            g.params.n_rounds = p.at("n_rounds").get<int>();
            g.params.learning_rate = p.at("learning_rate").get<double>();
            g.params.min_samples_leaf = p.at("min_samples_leaf").get<std::size_t>();
            g.params.n_bins = p.at("n_bins").get<std::size_t>();
            g.train_mse = j.at("train_mse").get<std::vector<double>>();
            std::unordered_map<std::string, int> col_index;
            for (std::size_t i = 0; i < g.input_columns.size(); ++i) col_index.emplace(g.input_columns[i], int(i));
            for (const auto& tj : j.at("trees")) {
                RegressionTree t;
                tree_from_json(tj, t, col_index);
                g.trees.push_back(std::move(t));
            }
            return g;
        }
        throw FormatError("unknown model kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw FormatError(std::string("model json: ") + e.what());
    }
}

}  // namespace claimvec
