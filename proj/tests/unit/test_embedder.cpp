#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "claimvec/embedder.hpp"
#include "claimvec/io.hpp"
#include "doctest.h"
#include "unit/helpers.hpp"

using namespace claimvec;

namespace {

Vocabulary letters(std::size_t n) {
    std::vector<std::pair<std::string, std::uint64_t>> e;
    for (std::size_t i = 0; i < n; ++i) e.emplace_back(std::string(1, char('a' + i)), 100 - i);
    return Vocabulary(std::move(e), 1, 0.75);
}

// Direct evaluation of the negative-sampling log-loss.
double oracle_loss(const std::vector<double>& c, TokenId target, const std::vector<TokenId>& negs,
                   const BasicMatrix<double>& out) {
    auto dot = [&](TokenId w) {
        double s = 0;
        for (std::size_t i = 0; i < c.size(); ++i) s += out.row(w)[i] * c[i];
        return s;
    };
    double loss = -std::log(1.0 / (1.0 + std::exp(-dot(target))));
    for (auto w : negs) loss -= std::log(1.0 / (1.0 + std::exp(dot(w))));
    return loss;
}

std::vector<std::vector<TokenId>> corpus(std::size_t docs, std::size_t len, std::size_t vocab, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<TokenId>> out(docs);
    for (std::size_t d = 0; d < docs; ++d)
        for (std::size_t i = 0; i < len; ++i) {
            // Each document favours its own half of the vocabulary.
            const std::size_t half = vocab / 2;
            const std::size_t base = (d % 2) * half;
            out[d].push_back(TokenId(base + rng() % half));
        }
    return out;
}

std::vector<std::string> ids(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("D" + std::to_string(i));
    return out;
}

EmbedConfig small_config(ParagraphModel m) {
    EmbedConfig c;
    c.model = m;
    c.dim = 8;
    c.window = 3;
    c.epochs = 10;
    c.seed = 42;
    return c;
}

}  // namespace

TEST_CASE("initialization bounds and zero output vectors") {
    EmbedConfig c;
    c.dim = 100;
    const auto m = init_model(c, letters(10), ids(50));
    for (float v : m.doc_vectors.storage()) CHECK(std::abs(v) <= 0.005f);
    for (float v : m.word_in.storage()) CHECK(std::abs(v) <= 0.005f);
    for (float v : m.word_out.storage()) CHECK(v == 0.0f);
    CHECK(init_model(c, letters(10), ids(50)) == m);
}

TEST_CASE("loss at zero vectors is (k+1) ln 2 with zero gradient") {
    BasicMatrix<double> out(6, 4, 0.0);
    const std::vector<double> c(4, 0.0);
    const std::vector<TokenId> negs = {1, 2, 3, 4, 5};
    const auto r = ns_loss_and_grads<double>(c, 0, negs, out);
    CHECK(r.loss == doctest::Approx(6.0 * std::numbers::ln2).epsilon(1e-12));
    CHECK(r.loss == doctest::Approx(4.158883).epsilon(1e-6));
    for (double g : r.grad_center) CHECK(g == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double h = 1e-5;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t dim = 1 + rng() % 16, V = 8;
        BasicMatrix<double> out(V, dim);
        for (auto& v : out.storage()) v = u(rng);
        std::vector<double> c(dim);
        for (auto& v : c) v = u(rng);
        const TokenId target = TokenId(rng() % V);
        std::vector<TokenId> negs;
        while (negs.size() < 5) {
            const TokenId w = TokenId(rng() % V);
            if (w != target) negs.push_back(w);
        }
        const auto r = ns_loss_and_grads<double>(c, target, negs, out);
        CHECK(r.loss == doctest::Approx(oracle_loss(c, target, negs, out)).epsilon(1e-12));
        for (std::size_t i = 0; i < dim; ++i) {
            auto cp = c, cm = c;
            cp[i] += h;
            cm[i] -= h;
            const double fd = (oracle_loss(cp, target, negs, out) - oracle_loss(cm, target, negs, out)) / (2 * h);
            CHECK(std::abs(fd - r.grad_center[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
        // Output-row gradients, summed over repeated ids.
        std::vector<TokenId> rows = {target};
        rows.insert(rows.end(), negs.begin(), negs.end());
        for (TokenId w = 0; w < V; ++w) {
            std::vector<double> analytic(dim, 0.0);
            for (std::size_t k = 0; k < rows.size(); ++k)
                if (rows[k] == w)
                    for (std::size_t i = 0; i < dim; ++i) analytic[i] += r.grad_out_rows[k][i];
            for (std::size_t i = 0; i < dim; ++i) {
                auto op = out, om = out;
                op.row(w)[i] += h;
                om.row(w)[i] -= h;
                const double fd = (oracle_loss(c, target, negs, op) - oracle_loss(c, target, negs, om)) / (2 * h);
                CHECK(std::abs(fd - analytic[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
            }
        }
    }
}

TEST_CASE("target among negatives is rejected") {
    BasicMatrix<double> out(3, 2, 0.0);
    const std::vector<double> c(2, 0.0);
    const std::vector<TokenId> negs = {0};
    CHECK_THROWS(ns_loss_and_grads<double>(c, 0, negs, out));
}

TEST_CASE("zero epochs leaves the initialization untouched") {
    auto c = small_config(ParagraphModel::PV_DBOW);
    c.epochs = 0;
    const auto init = init_model(c, letters(10), ids(2));
    auto m = init;
    train(m, corpus(2, 20, 10, 1));
    CHECK(m == init);
}

TEST_CASE("loss decreases on a tiny corpus") {
    for (auto model : {ParagraphModel::PV_DBOW, ParagraphModel::PV_DM}) {
        CAPTURE(to_string(model));
        auto m = init_model(small_config(model), letters(10), ids(2));
        const auto stats = train(m, corpus(2, 20, 10, 3));
        REQUIRE(stats.epoch_mean_loss.size() == 10);
        CHECK(stats.epoch_mean_loss.back() < stats.epoch_mean_loss.front());
        CHECK(all_finite(m));
    }
}

TEST_CASE("loss decreases on a 200-token corpus for both models") {
    for (auto model : {ParagraphModel::PV_DBOW, ParagraphModel::PV_DM}) {
        CAPTURE(to_string(model));
        auto c = small_config(model);
        c.dim = 16;
        c.joint_word_training = true;
        auto m = init_model(c, letters(12), ids(10));
        const auto stats = train(m, corpus(10, 20, 12, 4));
        CHECK(stats.epoch_mean_loss.back() < stats.epoch_mean_loss.front());
        CHECK(all_finite(m));
    }
}

TEST_CASE("single-worker training is deterministic") {
    for (auto model : {ParagraphModel::PV_DBOW, ParagraphModel::PV_DM}) {
        auto a = init_model(small_config(model), letters(10), ids(6));
        auto b = a;
        const auto docs = corpus(6, 30, 10, 5);
        train(a, docs);
        train(b, docs);
        CHECK(a == b);
    }
}

TEST_CASE("multi-worker training stays finite") {
    auto c = small_config(ParagraphModel::PV_DBOW);
    c.workers = 4;
    c.joint_word_training = true;
    auto m = init_model(c, letters(10), ids(40));
    const auto stats = train(m, corpus(40, 30, 10, 6));
    CHECK(all_finite(m));
    CHECK(stats.epoch_mean_loss.back() < stats.epoch_mean_loss.front());
}

TEST_CASE("documents separate by their vocabulary half") {
    auto c = small_config(ParagraphModel::PV_DBOW);
    c.epochs = 30;
    auto m = init_model(c, letters(10), ids(8));
    train(m, corpus(8, 40, 10, 7));
    double same = 0, cross = 0;
    int ns = 0, nc = 0;
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = i + 1; j < 8; ++j) {
            const double cs = cosine_similarity<float>(m.doc_vectors.row(i), m.doc_vectors.row(j));
            if (i % 2 == j % 2) same += cs, ++ns;
            else cross += cs, ++nc;
        }
    CHECK(same / ns > cross / nc + 0.2);
}

TEST_CASE("reference configuration is expressible") {
    EmbedConfig c;
    c.model = ParagraphModel::PV_DBOW;
    c.dim = 100;
    c.window = 15;
    CHECK_NOTHROW(validate(c));
    const auto back = embed_config_from_json(embed_config_to_json(c));
    CHECK(back == c);
    CHECK_THROWS_AS(embed_config_from_json(R"({"model":"CBOW"})"), ConfigError);
    CHECK_THROWS_AS(embed_config_from_json(R"({"dim":0})"), ConfigError);
}

TEST_CASE("inference") {
    auto c = small_config(ParagraphModel::PV_DBOW);
    auto m = init_model(c, letters(10), ids(4));
    const auto docs = corpus(4, 30, 10, 8);
    train(m, docs);
    std::vector<std::string> tokens;
    for (auto id : docs[0]) tokens.push_back(m.vocab.token(id));

    SUBCASE("zero epochs returns the seeded start") {
        const auto a = infer_doc_vector(m, tokens, {0, 0.025, 9});
        const auto b = infer_doc_vector(m, tokens, {0, 0.025, 9});
        CHECK(a == b);
        for (float v : a) CHECK(std::abs(v) <= 0.5f / float(c.dim));
    }
    SUBCASE("objective does not increase and repeats exactly") {
        const auto start = infer_doc_vector(m, tokens, {0, 0.025, 9});
        const auto fitted = infer_doc_vector(m, tokens, {20, 0.025, 9});
        CHECK(document_objective(m, docs[0], fitted, 77) <= document_objective(m, docs[0], start, 77));
        CHECK(infer_doc_vector(m, tokens, {20, 0.025, 9}) == fitted);
    }
    SUBCASE("works for PV-DM too") {
        auto dm = init_model(small_config(ParagraphModel::PV_DM), letters(10), ids(4));
        train(dm, docs);
        const auto start = infer_doc_vector(dm, tokens, {0, 0.025, 3});
        const auto fitted = infer_doc_vector(dm, tokens, {20, 0.025, 3});
        CHECK(document_objective(dm, docs[0], fitted, 5) <= document_objective(dm, docs[0], start, 5));
    }
}

TEST_CASE("model file round-trip") {
    testutil::TempDir dir("model");
    auto m = init_model(small_config(ParagraphModel::PV_DM), letters(10), ids(3));
    train(m, corpus(3, 20, 10, 9));
    save_model(m, dir.path() / "a.bin");
    const auto back = load_model(dir.path() / "a.bin");
    CHECK(back == m);
    CHECK(back.find_doc("D2") == std::optional<std::size_t>(2));
    CHECK(std::vector<float>(back.doc_vectors.row(2).begin(), back.doc_vectors.row(2).end()) ==
          std::vector<float>(m.doc_vectors.row(2).begin(), m.doc_vectors.row(2).end()));
    save_model(back, dir.path() / "b.bin");
    CHECK(io::read_file(dir.path() / "a.bin") == io::read_file(dir.path() / "b.bin"));

    const auto bytes = io::read_file(dir.path() / "a.bin");
    std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_model(truncated), FormatError);
    std::istringstream trailing(bytes + "x");
    CHECK_THROWS_AS(load_model(trailing), FormatError);
    std::istringstream garbage("not a model");
    CHECK_THROWS_AS(load_model(garbage), FormatError);
}

TEST_CASE("vector export layout") {
    auto c = small_config(ParagraphModel::PV_DBOW);
    c.dim = 3;
    const auto m = init_model(c, letters(2), {"P1"});
    std::ostringstream out;
    export_vectors(m, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "3 3");
    std::getline(in, line);
    CHECK(line.starts_with("doc:P1 "));
    std::getline(in, line);
    CHECK(line.starts_with("word:a "));
    CHECK(io::split(line, ' ').size() == 4);
}

TEST_CASE("cosine similarity") {
    const std::vector<double> x = {0.3, -1.2, 4.0};
    const std::vector<double> nx = {-0.3, 1.2, -4.0};
    CHECK(cosine_similarity<double>(x, x) == doctest::Approx(1.0));
    CHECK(cosine_similarity<double>(x, nx) == doctest::Approx(-1.0));
    const std::vector<double> a = {1, 0}, b = {1, 1};
    CHECK(cosine_similarity<double>(a, b) == doctest::Approx(1.0 / std::sqrt(2.0)));
    const std::vector<double> z = {0, 0};
    CHECK_THROWS(cosine_similarity<double>(a, z));
}
