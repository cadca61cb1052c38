// claimvec: command-line driver for the claims-embedding risk pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "claimvec/embedder.hpp"
#include "claimvec/error.hpp"
#include "claimvec/eval.hpp"
#include "claimvec/io.hpp"
#include "claimvec/pipeline.hpp"
#include "claimvec/synthgen.hpp"

namespace fs = std::filesystem;
using namespace claimvec;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string workdir;
};

PipelineConfig load_config(const Globals& g) {
    if (g.config.empty()) throw ConfigError("--config is required for this command");
    auto c = load_pipeline_config(g.config);
    if (g.seed) c.split_seed = c.cv_seed = c.embed_seed = c.infer_seed = *g.seed;
    c.embed.seed = c.embed_seed;
    if (g.workers) c.embed.workers = *g.workers;
    if (!g.workdir.empty()) c.workdir = g.workdir;
    validate(c);
    return c;
}

void log_line(std::string_view msg) { std::cerr << msg << '\n'; }

using StageFn = void (*)(const PipelineConfig&, Workdir&, const Logger&);

void run_stage(const Globals& g, const char* name, StageFn fn) {
    const auto c = load_config(g);
    fs::create_directories(c.workdir);
    Workdir wd(c.workdir);
    try {
        fn(c, wd, log_line);
    } catch (const std::exception& e) {
        throw Error(std::string("stage ") + name + ": " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"claimvec: patient embeddings from claims codes for prospective risk scoring"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "Pipeline config JSON");
    app.add_option("--seed", g.seed, "Override every seed (synth: the population seed)");
    app.add_option("--workers", g.workers, "Embedding training threads")->check(CLI::PositiveNumber);
    app.add_option("--workdir", g.workdir, "Run directory for artifacts and the manifest");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic claims/members population");
    std::string spec_path, out_dir;
    std::optional<std::int64_t> n_patients;
    synth->add_option("--spec", spec_path, "Population spec JSON")->required();
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--patients", n_patients, "Override the patient count")->check(CLI::PositiveNumber);

    auto* cohort = app.add_subcommand("cohort", "Apply inclusion rules and build patient documents");
    auto* label = app.add_subcommand("label", "Compute risk-score labels and the train/test split");
    auto* embed = app.add_subcommand("embed", "Train the paragraph-vector model");
    std::string export_path;
    embed->add_option("--export-vectors", export_path, "Also write vectors in word2vec text format");
    auto* featurize = app.add_subcommand("featurize", "Extract the 21 baseline features");
    auto* fit = app.add_subcommand("fit", "Fit ridge and boosted trees on both representations");
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score the fitted models and write the report");
    auto* grid = app.add_subcommand("grid", "Search model x dim x window by CV ridge R^2");
    auto* run = app.add_subcommand("run", "Run every stage end to end");
    auto* report = app.add_subcommand("report", "Render the report of a completed run");
    std::string format = "text";
    for (auto* sub : {run, report})
        sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "json"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            auto spec = synth::load_population_spec(spec_path);
            if (g.seed) spec.seed = *g.seed;
            if (n_patients) spec.n_patients = *n_patients;
            const auto counts = synth::generate_files(spec, out_dir);
            const fs::path dir(out_dir);
            std::printf("members %lld\nclaims %lld\n", static_cast<long long>(counts.members),
                        static_cast<long long>(counts.claims));
            std::printf("sha256 %s  claims.csv\n", io::sha256_file(dir / "claims.csv").c_str());
            std::printf("sha256 %s  members.csv\n", io::sha256_file(dir / "members.csv").c_str());
        } else if (cohort->parsed()) {
            run_stage(g, "cohort", stage_cohort);
        } else if (label->parsed()) {
            run_stage(g, "label", stage_label);
        } else if (embed->parsed()) {
            run_stage(g, "embed", stage_embed);
            if (!export_path.empty()) {
                const auto c = load_config(g);
                const auto model = load_model(fs::path(c.workdir) / "embedding.bin");
                io::write_file_atomic(export_path, [&](std::ostream& out) { export_vectors(model, out); });
            }
        } else if (featurize->parsed()) {
            run_stage(g, "featurize", stage_featurize);
        } else if (fit->parsed()) {
            run_stage(g, "fit", stage_fit);
        } else if (evaluate_cmd->parsed()) {
            run_stage(g, "evaluate", stage_evaluate);
        } else if (grid->parsed()) {
            run_stage(g, "grid", stage_grid);
        } else if (run->parsed()) {
            const auto r = run_pipeline(load_config(g), log_line);
            std::cout << (format == "json" ? report_to_json(r) : render_text(r));
        } else if (report->parsed()) {
            fs::path dir = g.workdir;
            if (dir.empty() && !g.config.empty()) dir = load_config(g).workdir;
            if (dir.empty()) throw ConfigError("report needs --workdir or --config");
            const auto r = load_report(dir);
            std::cout << (format == "json" ? report_to_json(r) : render_text(r));
        }
    } catch (const std::exception& e) {
        std::cerr << "claimvec: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
