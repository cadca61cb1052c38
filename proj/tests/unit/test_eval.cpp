#include <algorithm>
#include <random>
#include <sstream>

#include "claimvec/error.hpp"
#include "claimvec/eval.hpp"
#include "claimvec/features.hpp"
#include "claimvec/synthgen.hpp"
#include "doctest.h"
#include "unit/helpers.hpp"

using namespace claimvec;

namespace {

GridEntry entry(ParagraphModel m, std::size_t dim, std::size_t window, std::optional<double> r2) {
    GridEntry e;
    e.point = {m, dim, window};
    e.cv_r2 = r2;
    if (!r2) e.error = "boom";
    return e;
}

EvaluationReport sample_report(std::string rep, std::string learner, double r2) {
    const std::vector<double> y = {1, 2, 0, 0}, p = {1.5, 1.5, 0.5, 0.5};
    const std::vector<Demographic> g = {{Sex::Male, 30}, {Sex::Male, 31}, {Sex::Female, 50}, {Sex::Female, 52}};
    auto r = evaluate_predictions(std::move(rep), std::move(learner), y, p, y, p, g);
    r.r2 = r2;
    return r;
}

}  // namespace

TEST_CASE("perfect predictor scores") {
    const std::vector<double> y = {0.5, 1.0, 1.5, 1.0};
    const std::vector<Demographic> g = {{Sex::Male, 1}, {Sex::Female, 40}, {Sex::Female, 41}, {Sex::Male, 90}};
    const auto r = evaluate_predictions("baseline1", "ridge", y, y, y, y, g, "test");
    CHECK(r.r2 == doctest::Approx(1.0));
    CHECK(r.mae == 0.0);
    CHECK(r.n_test == 4);
    CHECK(r.n_pr == 4);
    CHECK(r.model_name() == "baseline1/ridge");
    REQUIRE(r.predictive_ratios.size() == 3);
    CHECK(kAgeBandLabels[r.predictive_ratios[0].age_band] == "(0, 1]");
    CHECK(kAgeBandLabels[r.predictive_ratios[1].age_band] == "84+");
    for (const auto& c : r.predictive_ratios) CHECK(*c.pr == doctest::Approx(1.0));
    const std::vector<double> none;
    CHECK_THROWS_AS(evaluate_predictions("b", "ridge", none, none, y, y, g), Error);
}

TEST_CASE("grid definition") {
    const auto g = full_grid();
    CHECK(g.size() == 18);
    CHECK(std::is_sorted(g.begin(), g.end()));
    CHECK(std::adjacent_find(g.begin(), g.end()) == g.end());
}

TEST_CASE("best grid entry selection") {
    std::vector<GridEntry> entries = {entry(ParagraphModel::PV_DM, 100, 10, 0.30),
                                      entry(ParagraphModel::PV_DBOW, 200, 15, 0.30),
                                      entry(ParagraphModel::PV_DBOW, 100, 20, 0.10),
                                      entry(ParagraphModel::PV_DBOW, 300, 10, std::nullopt)};
    auto best = select_best(entries);
    REQUIRE(best);
    CHECK(entries[*best].point == GridPoint{ParagraphModel::PV_DBOW, 200, 15});

    std::mt19937_64 rng(1);
    for (int i = 0; i < 10; ++i) {
        std::shuffle(entries.begin(), entries.end(), rng);
        CHECK(entries[*select_best(entries)].point == GridPoint{ParagraphModel::PV_DBOW, 200, 15});
    }

    std::vector<GridEntry> planted;
    for (const auto& p : full_grid()) planted.push_back(entry(p.model, p.dim, p.window, 0.1));
    planted[11].cv_r2 = 0.9;
    CHECK(select_best(planted) == std::optional<std::size_t>(11));

    const std::vector<GridEntry> single = {entry(ParagraphModel::PV_DM, 300, 20, -0.5)};
    CHECK(select_best(single) == std::optional<std::size_t>(0));
    const std::vector<GridEntry> failed = {entry(ParagraphModel::PV_DM, 300, 20, std::nullopt)};
    CHECK_FALSE(select_best(failed));
}

TEST_CASE("grid search on a small cohort") {
    auto spec = synth::load_population_spec(testutil::source_path("specs/default_population.json"));
    spec.n_patients = 400;
    std::ostringstream claims_csv, members_csv;
    synth::generate(spec, claims_csv, members_csv);
    std::istringstream ci(claims_csv.str()), mi(members_csv.str());
    const auto cohort = build_cohort(parse_claims(ci), parse_members(mi), 2015, 2016);
    const auto labels = compute_risk_labels(cohort, 2016);
    std::vector<std::string> ids;
    for (const auto& d : cohort.documents) ids.push_back(d.patient_id);
    const auto split = split_train_test(ids, 0.7, 1);

    GridOptions opts;
    opts.base.epochs = 2;
    opts.vocab.min_count = 2;
    const std::vector<GridPoint> grid = {{ParagraphModel::PV_DBOW, 8, 5}, {ParagraphModel::PV_DM, 8, 5},
                                         {ParagraphModel::PV_DBOW, 0, 5}};
    std::vector<GridPoint> seen;
    opts.on_entry = [&](const GridEntry& e) { seen.push_back(e.point); };
    const auto r = run_grid(cohort, labels, grid, split.train, opts);
    REQUIRE(r.entries.size() == 3);
    CHECK(seen == grid);
    CHECK_FALSE(r.entries[0].failed());
    CHECK_FALSE(r.entries[1].failed());
    CHECK(r.entries[2].failed());
    CHECK_FALSE(r.entries[2].error.empty());
    REQUIRE(r.best);
    CHECK(*r.best < 2);

    opts.concurrency = 2;
    const auto again = run_grid(cohort, labels, grid, split.train, opts);
    CHECK(again.best == r.best);
    CHECK(again.entries[0].cv_r2 == r.entries[0].cv_r2);
}

TEST_CASE("report JSON round-trip and text rendering") {
    Report rep;
    rep.models = {sample_report("baseline1", "ridge", 0.4), sample_report("embedding", "gbt", 0.5)};
    GridResult g;
    g.entries = {entry(ParagraphModel::PV_DBOW, 100, 15, 0.2), entry(ParagraphModel::PV_DM, 100, 15, std::nullopt)};
    g.best = 0;
    rep.grid = g;
    const auto json = report_to_json(rep);
    const auto back = report_from_json(json);
    CHECK(report_to_json(back) == json);
    REQUIRE(back.models.size() == 2);
    CHECK(back.models[1].r2 == 0.5);
    CHECK_FALSE(back.models[0].predictive_ratios[1].pr.has_value());
    CHECK(json.find("null") != std::string::npos);

    const auto text = render_text(back);
    CHECK(text.find("—") != std::string::npos);
    CHECK(text.find("RIDGE") != std::string::npos);
    CHECK(text.find("GBT") != std::string::npos);
    CHECK(text.find("*") != std::string::npos);

    CHECK_THROWS_AS(report_from_json(R"({"format":"claimvec-report","version":2,"models":[]})"), FormatError);
}
