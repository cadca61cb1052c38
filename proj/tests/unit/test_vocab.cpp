#include <cmath>
#include <sstream>

#include "claimvec/error.hpp"
#include "claimvec/vocab.hpp"
#include "doctest.h"

using namespace claimvec;

namespace {

std::vector<std::vector<std::string>> docs_with_counts(std::initializer_list<std::pair<const char*, int>> counts) {
    std::vector<std::string> doc;
    for (const auto& [tok, n] : counts)
        for (int i = 0; i < n; ++i) doc.emplace_back(tok);
    return {doc};
}

}  // namespace

TEST_CASE("single token at the threshold is kept") {
    const auto v = build_vocab(docs_with_counts({{"A", 5}}), {5, 0.75});
    REQUIRE(v.size() == 1);
    CHECK(v.token(0) == "A");
    CHECK(v.count(0) == 5);
}

TEST_CASE("tokens under min_count are dropped") {
    const auto v = build_vocab(docs_with_counts({{"A", 4}, {"B", 1}}), {2, 0.75});
    REQUIRE(v.size() == 1);
    CHECK(v.token(0) == "A");
    CHECK_FALSE(v.find("B"));
}

TEST_CASE("noise distribution follows count^alpha") {
    const auto v = build_vocab(docs_with_counts({{"A", 16}, {"B", 1}}), {1, 0.75});
    CHECK(v.noise_probability(*v.find("A")) == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
    CHECK(v.noise_probability(*v.find("B")) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("ids by descending count then lexicographic") {
    const auto v = build_vocab(docs_with_counts({{"c", 2}, {"b", 3}, {"a", 2}, {"d", 3}}), {1, 0.75});
    REQUIRE(v.size() == 4);
    CHECK(v.token(0) == "b");
    CHECK(v.token(1) == "d");
    CHECK(v.token(2) == "a");
    CHECK(v.token(3) == "c");
}

TEST_CASE("all tokens under the threshold is an error") {
    CHECK_THROWS_AS(build_vocab(docs_with_counts({{"A", 1}}), {5, 0.75}), Error);
}

TEST_CASE("encode drops unknown tokens") {
    const auto v = build_vocab(docs_with_counts({{"A", 3}, {"B", 3}}), {1, 0.75});
    const std::vector<std::string> doc = {"A", "Q", "B", "A"};
    CHECK(v.encode(doc) == std::vector<TokenId>{*v.find("A"), *v.find("B"), *v.find("A")});
}

TEST_CASE("one-token vocabulary always samples id 0") {
    const auto v = build_vocab(docs_with_counts({{"A", 5}}), {1, 0.75});
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) CHECK(sample_negative(v, rng) == 0);
    CHECK_THROWS_AS(sample_negative(v, rng, TokenId{0}), Error);
}

TEST_CASE("Monte Carlo frequency matches the closed form") {
    const auto v = build_vocab(docs_with_counts({{"A", 16}, {"B", 1}}), {1, 0.75});
    Rng rng(11);
    const auto a = *v.find("A");
    int hits = 0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) hits += sample_negative(v, rng) == a;
    CHECK(std::abs(double(hits) / n - 8.0 / 9.0) < 0.005);
}

TEST_CASE("exclusion forces the other token") {
    const auto v = build_vocab(docs_with_counts({{"A", 16}, {"B", 1}}), {1, 0.75});
    Rng rng(5);
    const auto a = *v.find("A"), b = *v.find("B");
    for (int i = 0; i < 1000; ++i) CHECK(sample_negative(v, rng, a) == b);
}

TEST_CASE("alias table reproduces arbitrary weights") {
    const std::vector<double> w = {0.0, 1.0, 2.0, 3.0, 10.0};
    AliasTable t(w);
    Rng rng(17);
    std::vector<int> hits(w.size());
    const int n = 500'000;
    for (int i = 0; i < n; ++i) hits[t.sample(rng)]++;
    CHECK(hits[0] == 0);
    for (std::size_t i = 1; i < w.size(); ++i) CHECK(std::abs(double(hits[i]) / n - w[i] / 16.0) < 0.003);
}

TEST_CASE("vocabulary text round-trip") {
    const auto v = build_vocab(docs_with_counts({{"A", 16}, {"B", 2}, {"C", 7}}), {2, 0.75});
    std::ostringstream out;
    write_vocab(out, v);
    std::istringstream in(out.str());
    CHECK(read_vocab(in) == v);
    std::istringstream bad("2 1 0.75\nA\t3\n");
    CHECK_THROWS(read_vocab(bad));
}
