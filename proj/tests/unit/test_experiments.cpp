// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "dpid/error.hpp"
#include "dpid/experiments.hpp"
#include "dpid/gmm.hpp"

using namespace dpid;

namespace {

const BiasRow* find_row(const BiasTable& t, const std::string& occ, const std::string& attr) {
  for (const auto& r : t.rows) {
    if (r.occupation == occ && r.attribute == attr) return &r;
  }
  return nullptr;
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("bias toy ordering") {
    const GmmDenoiser d(GmmModel::load(DPID_FIXTURES "/bias.json"));
    const GmmPriorProvider priors(d.model());
    const GmmCaseResolver resolver(d.model(), priors);
    EstimatorConfig cfg;
    cfg.n_alpha = 1000;
    cfg.form = EstimatorForm::kStandard;
    const BiasTable t = run_bias_audit(load_cases(DPID_FIXTURES "/cases_bias.json"), Engine{d, resolver, cfg});
    REQUIRE(t.rows.size() == 4);
    const BiasRow* dm = find_row(t, "doctor", "male");
    const BiasRow* df = find_row(t, "doctor", "female");
    REQUIRE(dm != nullptr);
    REQUIRE(df != nullptr);
    REQUIRE(dm->raw.has_value());
    REQUIRE(df->raw.has_value());
    CHECK(*dm->raw > *df->raw);
    CHECK(*dm->normalized > *df->normalized);
    CHECK(t.occupations == std::vector<std::string>{"doctor", "nurse"});
    CHECK(t.attributes == std::vector<std::string>{"male", "female"});
    std::ostringstream csv;
    write_bias_csv(csv, t);
    CHECK(csv.str().rfind("occupation,attribute,raw_redundancy,normalized_redundancy,error\n", 0) == 0);
  }

  TEST_CASE("bias table normalization") {
    const BiasTable one = make_bias_table({BiasRow{"doctor", "male", 0.4, std::nullopt, ""}});
    CHECK(*one.rows[0].normalized == 0.0);
    const BiasTable t = make_bias_table({BiasRow{"a", "m", 0.3, std::nullopt, ""},
                                         BiasRow{"a", "f", 0.9, std::nullopt, ""},
                                         BiasRow{"b", "m", std::nullopt, std::nullopt, "failed"},
                                         BiasRow{"b", "f", 0.5, std::nullopt, ""}});
    CHECK(*t.rows[0].normalized == 0.0);
    CHECK(*t.rows[1].normalized == 1.0);
    CHECK(*t.rows[3].normalized == doctest::Approx(1.0 / 3.0));
    CHECK_FALSE(t.rows[2].normalized.has_value());
    CHECK(t.attribute_average.at("m") == 0.0);
    CHECK(t.attribute_average.at("f") == doctest::Approx((1.0 + 1.0 / 3.0) / 2.0));
    std::ostringstream out;
    write_bias_table(out, t);
    CHECK(out.str().find("b,,0.333") != std::string::npos);
  }

  TEST_CASE("normalization keeps the order") {
    const std::vector<double> v{0.2, -1.0, 3.5, 0.7};
    const auto n = normalize_dataset(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (std::size_t j = 0; j < v.size(); ++j) CHECK((v[i] < v[j]) == (n[i] < n[j]));
    }
    CHECK(normalize_dataset({2.0, 2.0}) == std::vector<double>{0.0, 0.0});
  }

  TEST_CASE("case validation") {
    PromptCase c;
    c.id = "x";
    c.prompt = "a tall doctor";
    c.phrase1.condition = "doctor";
    CHECK_THROWS_AS(validate(c), PreconditionError);
    c.phrase2.tokens = {1};
    c.phrase1 = PhraseSelection{"", {1, 2}};
    CHECK_THROWS_AS(validate(c), PreconditionError);
    c.phrase1 = PhraseSelection{"", {0}};
    CHECK_NOTHROW(validate(c));
    const auto cases = load_cases(DPID_FIXTURES "/cases_toy.json");
    REQUIRE(cases.size() == 2);
    CHECK(cases[0].tag == "synonym");
    CHECK(selection_text(cases[1], cases[1].phrase2) == "lamp");
    CHECK_THROWS_AS(load_cases(DPID_FIXTURES "/missing.json"), IoError);
  }

  TEST_CASE("curated prompt lists load and select their words") {
    const auto bias = load_cases(DPID_FIXTURES "/prompts/bias_gender.json");
    CHECK(bias.size() == 20);
    CHECK(selection_text(bias[0], bias[0].phrase1) == "doctor");
    CHECK(selection_text(bias[0], bias[0].phrase2) == "male");
    for (const char* name : {"homonym", "synonym", "cohyponym"}) {
      const auto cases = load_cases(std::string(DPID_FIXTURES "/prompts/") + name + ".json");
      CHECK(cases.size() == 5);
      for (const auto& c : cases) {
        CHECK(c.tag == name);
        CHECK_NOTHROW(validate(c));
      }
    }
  }

  TEST_CASE("pid case writes maps and scalars") {
    const GmmDenoiser d(GmmModel::load(DPID_FIXTURES "/synonym.json"));
    const GmmPriorProvider priors(d.model());
    const GmmCaseResolver resolver(d.model(), priors);
    EstimatorConfig cfg;
    cfg.n_alpha = 40;
    const auto dir = std::filesystem::temp_directory_path() / "dpid_unit_case";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto cases = load_cases(DPID_FIXTURES "/cases_toy.json");
    const PidCaseResult r = run_pid_case(cases[1], Engine{d, resolver, cfg}, dir.string());
    for (const char* stem : {"r_chair_lamp", "u1_chair_lamp", "u2_chair_lamp", "s_chair_lamp"}) {
      CHECK(std::filesystem::exists(dir / (std::string(stem) + ".pfm")));
      CHECK(std::filesystem::exists(dir / (std::string(stem) + ".pgm")));
    }
    CHECK(std::filesystem::exists(dir / "scalars_chair_lamp.json"));
    const PidAtoms& a = r.maps.image_atoms;
    CHECK(a.total() == doctest::Approx(r.maps.mi_joint.image_level).epsilon(1e-12));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("intervention") {
    const GmmDenoiser d(GmmModel::load(DPID_FIXTURES "/intervention.json"));
    const auto& m = d.model();
    RandomStream rng(3, StreamTag::kData);
    const LatentField x = m.sample(m.named("cat"), rng);

    const InterventionResult clean = prompt_intervention(x, m.named("cat"), m.named("cat"), 12.0, 1, d, 1);
    CHECK(clean.mse <= 1e-3);

    const InterventionResult same = prompt_intervention(x, m.named("cat"), m.named("cat"), -2.0, 20, d, 5);
    CHECK(same.edited == same.baseline);
    CHECK(same.correlation == same.baseline_correlation);
    CHECK(same.alpha_grid.size() == 21);
    CHECK(same.alpha_grid.front() == -2.0);
    CHECK(same.alpha_grid.back() == 12.0);

    const InterventionResult swap = prompt_intervention(x, m.named("cat"), m.named("dog"), -2.0, 20, d, 5);
    CHECK(swap.correlation < same.correlation);
    CHECK(swap.mse > same.mse);
  }

  TEST_CASE("field statistics") {
    const LatentField a(Shape{1, 1, 3}, std::vector<double>{1.0, 2.0, 3.0});
    const LatentField b(Shape{1, 1, 3}, std::vector<double>{2.0, 4.0, 6.0});
    CHECK(pearson_correlation(a, b) == doctest::Approx(1.0));
    CHECK(mean_squared_difference(a, b) == doctest::Approx(14.0 / 3.0));
    CHECK_THROWS_AS(mean_squared_difference(a, LatentField(Shape{1, 1, 2})), ShapeError);
  }
}
