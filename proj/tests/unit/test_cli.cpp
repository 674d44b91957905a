// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dpid/cli.hpp"
#include "fixture_server.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "dpid");
  std::ostringstream out, err;
  const int code = dpid::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::string kFix = DPID_FIXTURES;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("oracle gate output") {
    const Run r = run({"oracle-pid", "--gate", "xor"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("s").get<double>() == doctest::Approx(0.6931471805599453));
    CHECK(j.at("r").get<double>() == 0.0);
    CHECK(j.at("source") == "xor");
    const Run joint = run({"oracle-pid", "--joint", kFix + "/and_gate_joint.json"});
    REQUIRE(joint.code == 0);
    const auto ja = nlohmann::json::parse(joint.out);
    CHECK(ja.at("mi_joint").get<double>() == doctest::Approx(0.5623351446188083));
    CHECK(ja.at("mi1").get<double>() == doctest::Approx(ja.at("mi2").get<double>()));
  }

  TEST_CASE("estimate-mi is reproducible and thread invariant") {
    const std::vector<std::string> base{"estimate-mi", "--gmm", kFix + "/synonym.json", "--cond", "chair",
                                        "--n-alpha", "30", "--x-seed", "3", "--seed", "5"};
    const Run a = run(base);
    const Run b = run(base);
    auto threaded = base;
    threaded.insert(threaded.end(), {"--threads", "3"});
    const Run t = run(threaded);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const auto ja = nlohmann::json::parse(a.out), jt = nlohmann::json::parse(t.out);
    CHECK(ja.at("map") == jt.at("map"));
    CHECK(ja.at("estimate") == jt.at("estimate"));
    CHECK(ja.at("term") == "mi");
    const Run cmi = run({"estimate-mi", "--gmm", kFix + "/synonym.json", "--cond", "chair&lamp", "--base", "lamp",
                         "--n-alpha", "5"});
    REQUIRE(cmi.code == 0);
    CHECK(nlohmann::json::parse(cmi.out).at("term") == "cmi");
  }

  TEST_CASE("estimate-pid writes maps and additive scalars") {
    TempDir dir("dpid_unit_cli_pid");
    const Run r = run({"estimate-pid", "--gmm", kFix + "/synonym.json", "--cases", kFix + "/cases_toy.json",
                       "--case", "synonym-couch-sofa", "--n-alpha", "20", "--out", dir.path.string()});
    REQUIRE(r.code == 0);
    for (const char* t : {"r", "u1", "u2", "s"}) {
      CHECK(fs::exists(dir.path / (std::string(t) + "_couch_sofa.pfm")));
      CHECK(fs::exists(dir.path / (std::string(t) + "_couch_sofa.pgm")));
    }
    std::ifstream in(dir.path / "scalars_couch_sofa.json");
    const auto s = nlohmann::json::parse(in);
    const auto& atoms = s.at("image_level");
    const double total = atoms.at("redundancy").get<double>() + atoms.at("unique1").get<double>() +
                         atoms.at("unique2").get<double>() + atoms.at("synergy").get<double>();
    CHECK(total == doctest::Approx(s.at("mi_joint").at("image_level").get<double>()).epsilon(1e-12));
  }

  TEST_CASE("manifest reruns reproduce outputs bit for bit") {
    TempDir a("dpid_unit_cli_m1"), b("dpid_unit_cli_m2");
    const Run first = run({"estimate-pid", "--gmm", kFix + "/synonym.json", "--cases", kFix + "/cases_toy.json",
                           "--case", "cohyponym-chair-lamp", "--n-alpha", "15", "--seed", "4", "--out",
                           a.path.string()});
    REQUIRE(first.code == 0);
    const Run again =
        run({"--config", (a.path / "manifest.json").string(), "estimate-pid", "--out", b.path.string()});
    REQUIRE(again.code == 0);
    for (const char* f : {"r_chair_lamp.pfm", "u1_chair_lamp.pfm", "s_chair_lamp.pfm", "scalars_chair_lamp.json"}) {
      CHECK(slurp(a.path / f) == slurp(b.path / f));
    }
  }

  TEST_CASE("command line overrides the config file") {
    TempDir dir("dpid_unit_cli_cfg");
    const auto cfg = dir.path / "cfg.json";
    std::ofstream(cfg) << R"({"estimate-mi": {"gmm": ")" << kFix
                       << R"(/synonym.json", "cond": "chair", "n-alpha": 7, "x": "0.5"}})";
    const Run from_file = run({"--config", cfg.string(), "estimate-mi"});
    REQUIRE(from_file.code == 0);
    CHECK(nlohmann::json::parse(from_file.out).at("estimator").at("n_alpha") == 7);
    const Run override = run({"--config", cfg.string(), "estimate-mi", "--n-alpha", "9"});
    REQUIRE(override.code == 0);
    CHECK(nlohmann::json::parse(override.out).at("estimator").at("n_alpha") == 9);
  }

  TEST_CASE("exit codes") {
    CHECK(run({}).code == dpid::kExitUsage);
    CHECK(run({"no-such-command"}).code == dpid::kExitUsage);
    CHECK(run({"estimate-mi", "--gmm", kFix + "/synonym.json"}).code == dpid::kExitUsage);
    CHECK(run({"estimate-mi", "--gmm", kFix + "/synonym.json", "--cond", "chair", "--n-alpha", "many"}).code ==
          dpid::kExitInput);
    const Run missing = run({"estimate-mi", "--gmm", kFix + "/nope.json", "--cond", "chair"});
    CHECK(missing.code == dpid::kExitInput);
    CHECK(nlohmann::json::parse(missing.err).at("error").at("code") == 3);
    CHECK(run({"estimate-mi", "--gmm", kFix + "/synonym.json", "--cond", "pilot"}).code == dpid::kExitEstimation);
    CHECK(run({"estimate-mi", "--gmm", kFix + "/synonym.json", "--cond", "chair", "--n-alpha", "0"}).code ==
          dpid::kExitEstimation);
    CHECK(run({"estimate-mi", "--bridge", "http://127.0.0.1:1", "--cond", "a cat", "--timeout", "1"}).code ==
          dpid::kExitTransport);
    CHECK(run({"--version"}).code == dpid::kExitOk);
  }

  TEST_CASE("bridged estimate against the echo server") {
    fixture::Server server;
    fixture::install_echo(server, {1, 2, 2});
    const std::string url = server.start();
    const Run r = run({"estimate-mi", "--bridge", url, "--cond", "a cat", "--x", "0.5", "--n-alpha", "4"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("estimate").at("image_level").get<double>() == 0.0);
    CHECK(j.at("denoiser").get<std::string>().find(url) != std::string::npos);
  }
}
