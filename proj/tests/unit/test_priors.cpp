// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "dpid/error.hpp"
#include "dpid/priors.hpp"

using namespace dpid;

TEST_SUITE("priors") {
  TEST_CASE("table lookups") {
    const auto t = TablePriorProvider::from_json(nlohmann::json::parse(R"({
      "unconditional": {"cat": 0.25, "dog": 1.0},
      "conditional": [{"phrase": "cat", "context": "a photo of a", "p": 0.5}]
    })"));
    CHECK(t.lookup("cat").log_prob == doctest::Approx(std::log(0.25)).epsilon(1e-15));
    CHECK(t.lookup("cat").neg_log_prob() == doctest::Approx(std::log(4.0)));
    CHECK(t.lookup("dog").log_prob == 0.0);
    CHECK(t.lookup("cat", std::string("")).log_prob == t.lookup("cat").log_prob);
    CHECK(t.lookup("cat", std::string("a photo of a")).log_prob == doctest::Approx(std::log(0.5)));
    CHECK_THROWS_AS(t.lookup("cow"), PreconditionError);
    CHECK_THROWS_AS(t.lookup("dog", std::string("a photo of a")), PreconditionError);
    TablePriorProvider m;
    CHECK_THROWS_AS(m.set("x", std::nullopt, 0.0), DomainError);
    CHECK_THROWS_AS(m.set("x", std::nullopt, 1.5), DomainError);
    CHECK_THROWS_AS(TablePriorProvider::load(DPID_FIXTURES "/missing.json"), IoError);
  }

  TEST_CASE("mixture masses") {
    const GmmModel two = GmmModel::load(DPID_FIXTURES "/two_comp.json");
    const GmmPriorProvider p(two);
    CHECK(p.lookup("c0").log_prob == doctest::Approx(std::log(0.5)));
    CHECK(p.lookup("c0", std::string("")).log_prob == p.lookup("c0").log_prob);

    const GmmModel bias = GmmModel::load(DPID_FIXTURES "/bias.json");
    const GmmPriorProvider b(bias);
    CHECK(b.lookup("doctor").log_prob == doctest::Approx(std::log(0.5)));
    CHECK(b.lookup("doctor", std::string("male")).log_prob == doctest::Approx(std::log(0.5)));
    CHECK_THROWS_AS(b.lookup("pilot"), UnsupportedConditionError);
  }

  TEST_CASE("validation") {
    CHECK_NOTHROW(validate(PhraseLogProb{"a", std::nullopt, 0.0}));
    CHECK_THROWS_AS(validate(PhraseLogProb{"a", std::nullopt, 0.1}), DomainError);
    CHECK_THROWS_AS(validate(PhraseLogProb{"a", std::nullopt, -INFINITY}), DomainError);
    CHECK_THROWS_AS(validate(PhraseLogProb{"a", std::nullopt, NAN}), DomainError);
  }
}
