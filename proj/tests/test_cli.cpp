#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "carnot/cli_runner.hpp"

using namespace carnot;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("carnot_test_" + std::to_string(splitmix64((std::uint64_t)
                std::chrono::steady_clock::now().time_since_epoch().count())));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig make_cfg(const TempDir& dir,
                          std::vector<std::string> overrides) {
  overrides.push_back("out_dir=" + (dir.path / "artifacts").string());
  overrides.push_back("cache_dir=" + (dir.path / "cache").string());
  overrides.push_back("threads=1");
  return ExperimentConfig::parse("", overrides);
}

int run(const std::string& verb, const ExperimentConfig& cfg) {
  std::ostringstream log;
  const int rc = cli::run_verb(verb, cfg, log);
  INFO(log.str());
  return rc;
}

}  // namespace

TEST_CASE("config parsing and hashing") {
  auto cfg =
      ExperimentConfig::parse("", {"alpha=1.5", "name=torus2", "flag=true"});
  CHECK(cfg.get_double("alpha", 0.0, 0.0, 10.0) == 1.5);
  CHECK(cfg.get_string("name", "") == "torus2");
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_int("missing", 7, 0, 100) == 7);

  SECTION("range violations are config errors") {
    CHECK_THROWS_AS(cfg.get_double("alpha", 0.0, 2.0, 10.0), ConfigError);
    CHECK_THROWS_AS(cfg.get_int("alpha", 0, 0, 10), ConfigError);
  }
  SECTION("unknown keys rejected") {
    CHECK_THROWS_AS(cfg.require_known({"alpha", "name"}), ConfigError);
    CHECK_NOTHROW(cfg.require_known({"alpha", "name", "flag"}));
  }
  SECTION("hash is order-independent and value-sensitive") {
    auto a = ExperimentConfig::parse("", {"x=1", "y=2"});
    auto b = ExperimentConfig::parse("", {"y=2", "x=1"});
    auto c = ExperimentConfig::parse("", {"x=1", "y=3"});
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != c.hash());
    CHECK(a.hash().size() == 16);
  }
  SECTION("config file with comments and overrides") {
    TempDir dir;
    const auto path = dir.path / "exp.cfg";
    std::ofstream(path) << "# experiment\nmodel = torus2\nn_target = 5000\n";
    auto fc =
        ExperimentConfig::parse(path.string(), {"n_target=9000"});
    CHECK(fc.get_string("model", "") == "torus2");
    CHECK(fc.get_int("n_target", 0, 0, 1000000) == 9000);
    CHECK_THROWS_AS(ExperimentConfig::parse((dir.path / "nope.cfg").string(),
                                            {}),
                    ConfigError);
  }
  SECTION("list parsing") {
    auto lc = ExperimentConfig::parse("", {"lambdas=2, 4,10"});
    auto xs = lc.get_list("lambdas", {});
    REQUIRE(xs.size() == 3);
    CHECK(xs[2] == 10.0);
  }
}

TEST_CASE("verb smoke runs") {
  TempDir dir;

  SECTION("algebra-check passes on presets, fails on a broken file") {
    CHECK(run("algebra-check", make_cfg(dir, {"samples=30"})) == 0);
    const auto bad = dir.path / "bad.alg";
    std::ofstream(bad) << "dim 3\nweights 1 1 1\n1 2 3 1\n";  // grading broken
    CHECK(run("algebra-check",
              make_cfg(dir, {"algebra=file:" + bad.string()})) == 1);
  }

  SECTION("local-trace, cocycle-residue, pole-residue") {
    CHECK(run("local-trace", make_cfg(dir, {"samples=50"})) == 0);
    CHECK(run("cocycle-residue", make_cfg(dir, {})) == 0);
    CHECK(run("pole-residue", make_cfg(dir, {})) == 0);
    // doubling the slope still matches the normative value
    CHECK(run("pole-residue", make_cfg(dir, {"mu_slope=-2"})) == 0);
  }

  SECTION("weyl and dixmier on the 2-torus") {
    auto cfg = make_cfg(dir, {"model=torus2", "lambda_max=12800"});
    CHECK(run("weyl", cfg) == 0);
    CHECK(fs::exists(dir.path / "artifacts" / "weyl.csv"));
    CHECK(run("dixmier", make_cfg(dir, {"model=torus2", "n_target=100000"})) ==
          0);
    // cache now covers the dixmier request; the replay must agree
    CHECK(run("dixmier", make_cfg(dir, {"model=torus2", "n_target=100000"})) ==
          0);
  }

  SECTION("zeta-residue with an expectation") {
    CHECK(run("zeta-residue",
              make_cfg(dir, {"model=torus2", "expect=3.14159265358979"})) ==
          0);
    CHECK(run("zeta-residue",
              make_cfg(dir, {"model=torus2", "expect=5.0"})) == 1);
  }

  SECTION("non-stabilizing residue exits with code 3") {
    CHECK(run("zeta-residue",
              make_cfg(dir, {"model=torus2", "max_escalations=1"})) == 3);
  }

  SECTION("connes-check at reduced scale") {
    CHECK(run("connes-check",
              make_cfg(dir, {"d=2", "n_target=200000", "grid_x=8",
                             "grid_sphere=8"})) == 0);
  }

  SECTION("unknown keys and bad values exit via ConfigError") {
    CHECK(run("weyl", make_cfg(dir, {"model=torus2", "bogus=1"})) == 2);
    CHECK(run("weyl", make_cfg(dir, {"model=nosuch"})) == 2);
    CHECK(run("connes-check", make_cfg(dir, {"d=9"})) == 2);
  }
}

TEST_CASE("heisenberg gating through the cli") {
  TempDir dir;
  // without a validation artifact the verb refuses
  CHECK(run("weyl", make_cfg(dir, {"model=heisenberg"})) == 2);
  // override lifts the gate
  CHECK(run("weyl", make_cfg(dir, {"model=heisenberg",
                                   "heisenberg_override=true"})) == 0);
  // a real (small) validation opens it properly
  CHECK(run("heisenberg-validate",
            make_cfg(dir, {"count=12", "resolution=16"})) == 0);
  CHECK(run("weyl", make_cfg(dir, {"model=heisenberg"})) == 0);
}

TEST_CASE("report aggregates one hash and refuses mixtures") {
  TempDir dir;
  auto cfg = make_cfg(dir, {"samples=30"});
  REQUIRE(run("algebra-check", cfg) == 0);
  REQUIRE(run("local-trace", cfg) == 0);
  CHECK(run("report", cfg) == 0);
  const auto report = dir.path / "artifacts" / "report.json";
  REQUIRE(fs::exists(report));
  std::ifstream is(report);
  auto j = nlohmann::json::parse(is);
  CHECK(j["all_pass"] == true);
  CHECK(j["artifacts"].size() == 2);

  // inject an artifact with a different hash
  std::ofstream(dir.path / "artifacts" / "alien.json")
      << R"({"verb":"alien","config_hash":"deadbeefdeadbeef","pass":true})";
  CHECK(run("report", cfg) == 2);
}

TEST_CASE("csv artifacts are bit-identical across runs") {
  TempDir dir;
  auto cfg = make_cfg(dir, {"model=torus2", "lambda_max=12800"});
  REQUIRE(run("weyl", cfg) == 0);
  std::ifstream a(dir.path / "artifacts" / "weyl.csv");
  std::stringstream sa;
  sa << a.rdbuf();
  REQUIRE(run("weyl", cfg) == 0);
  std::ifstream b(dir.path / "artifacts" / "weyl.csv");
  std::stringstream sb;
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("# config_hash=", 0) == 0);
}
