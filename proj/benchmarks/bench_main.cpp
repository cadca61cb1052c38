#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <random>

#include "claimvec/embedder.hpp"
#include "claimvec/models.hpp"
#include "claimvec/vocab.hpp"

using namespace claimvec;

namespace {

Vocabulary zipf_vocab(std::size_t n) {
    std::vector<std::pair<std::string, std::uint64_t>> e;
    for (std::size_t i = 0; i < n; ++i) e.emplace_back("T" + std::to_string(i), 100000 / (i + 1) + 5);
    return Vocabulary(std::move(e), 1, 0.75);
}

std::vector<std::vector<TokenId>> random_docs(std::size_t docs, std::size_t len, std::size_t vocab) {
    std::mt19937_64 rng(1);
    std::vector<std::vector<TokenId>> out(docs);
    for (auto& d : out)
        for (std::size_t i = 0; i < len; ++i) d.push_back(TokenId(rng() % vocab));
    return out;
}

std::vector<std::string> doc_ids(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("D" + std::to_string(i));
    return out;
}

DesignMatrix random_design(Eigen::Index n, Eigen::Index p, std::vector<double>& y) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd X(n, p);
    for (auto& v : X.reshaped()) v = g(rng);
    y.resize(std::size_t(n));
    for (Eigen::Index i = 0; i < n; ++i) y[std::size_t(i)] = X(i, 0) * X(i, 1 % p) + g(rng);
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
    return DesignMatrix(std::move(names), std::move(X));
}

}  // namespace

static void BM_AliasSample(benchmark::State& state) {
    const auto v = zipf_vocab(std::size_t(state.range(0)));
    Rng rng(3);
    for (auto _ : state) benchmark::DoNotOptimize(sample_negative(v, rng));
}
BENCHMARK(BM_AliasSample)->Arg(100)->Arg(100000);

static void BM_NsUpdate(benchmark::State& state) {
    const std::size_t dim = std::size_t(state.range(0));
    BasicMatrix<float> out(1000, dim, 0.01f);
    std::vector<float> center(dim, 0.02f);
    const std::vector<TokenId> negs = {1, 2, 3, 4, 5};
    for (auto _ : state) benchmark::DoNotOptimize(ns_loss_and_grads<float>(center, 0, negs, out));
}
BENCHMARK(BM_NsUpdate)->Arg(100)->Arg(300);

static void BM_DbowEpoch(benchmark::State& state) {
    EmbedConfig c;
    c.dim = 100;
    c.epochs = 1;
    const auto docs = random_docs(1000, 40, 500);
    for (auto _ : state) {
        state.PauseTiming();
        auto m = init_model(c, zipf_vocab(500), doc_ids(docs.size()));
        state.ResumeTiming();
        benchmark::DoNotOptimize(train(m, docs));
    }
    state.SetItemsProcessed(state.iterations() * 1000 * 40);
}
BENCHMARK(BM_DbowEpoch)->Unit(benchmark::kMillisecond);

static void BM_GbtFit(benchmark::State& state) {
    std::vector<double> y;
    const auto X = random_design(state.range(0), 21, y);
    const GbtParams p{4, 50, 0.1, 20, 256};
    for (auto _ : state) benchmark::DoNotOptimize(fit_gbt(X, y, p));
}
BENCHMARK(BM_GbtFit)->Arg(5000)->Unit(benchmark::kMillisecond);

static void BM_RidgeFit(benchmark::State& state) {
    std::vector<double> y;
    const auto X = random_design(state.range(0), 100, y);
    for (auto _ : state) benchmark::DoNotOptimize(fit_ridge(X, y, 1.0));
}
BENCHMARK(BM_RidgeFit)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
