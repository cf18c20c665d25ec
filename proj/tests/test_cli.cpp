// End-to-end checks of the command-line front end: exit codes, validation
// output, experiment artifacts, and draw export.  The binary under test is
// injected via the SIVI_CLI_PATH compile definition.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sivi/io.hpp"
#include "sivi/posterior.hpp"
#include "sivi/rng.hpp"

#ifndef SIVI_CLI_PATH
#define SIVI_CLI_PATH "build/sivi_cli"
#endif

using namespace sivi;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out << text;
}

CliResult run_cli(const std::string& args) {
  const std::string stdout_path = "build/test_cli_stdout.txt";
  const std::string cmd = std::string(SIVI_CLI_PATH) + " " + args + " > " +
                          stdout_path + " 2> build/test_cli_stderr.txt";
  const int status = std::system(cmd.c_str());
  CliResult r;
  if (status != -1 && WIFEXITED(status)) r.code = WEXITSTATUS(status);
  r.out = slurp(stdout_path);
  return r;
}

const char* kToyConfig =
    "{\"version\":1,\"experiment\":\"toy\",\"seed\":5,"
    "\"out_dir\":\"build/test_cli_out/toy_a\","
    "\"sivi\":{\"iterations\":25,\"K\":4,\"J\":4,\"hidden\":[4],"
    "\"noise_dim\":2,\"export_draws\":60},"
    "\"model\":{\"variant\":\"std_normal\"}}";

}  // namespace

TEST_CASE("validate: accepts good configs, rejects bad ones, flags I/O") {
  std::filesystem::create_directories("build/test_cli_out");
  spit("build/test_cli_toy.json", kToyConfig);
  {
    const auto r = run_cli("validate --config build/test_cli_toy.json");
    CHECK(r.code == 0);
    CHECK(r.out == "[]\n");
  }
  {
    spit("build/test_cli_bad.json",
         "{\"version\":1,\"experiment\":\"toy\",\"sivi\":{\"K\":-3}}");
    const auto r = run_cli("validate --config build/test_cli_bad.json");
    CHECK(r.code == 1);
    const auto errs = nlohmann::json::parse(r.out);
    REQUIRE(errs.is_array());
    REQUIRE(!errs.empty());
    CHECK(errs[0].contains("field"));
    CHECK(errs[0].contains("message"));
    bool saw = false;
    for (const auto& e : errs) saw = saw || e["field"] == "sivi.K";
    CHECK(saw);
  }
  {
    const auto r = run_cli("validate --config build/no_such_config.json");
    CHECK(r.code == 4);
  }
  {
    // Missing required --config flag is a usage error (CLI11 exit code).
    const auto r = run_cli("validate");
    CHECK(r.code != 0);
  }
}

TEST_CASE("run: produces the documented artifacts for a small experiment") {
  std::filesystem::remove_all("build/test_cli_out/toy_a");
  spit("build/test_cli_toy.json", kToyConfig);
  const auto r = run_cli("run --config build/test_cli_toy.json");
  REQUIRE(r.code == 0);
  CHECK(r.out == "build/test_cli_out/toy_a/report.json\n");

  const std::string dir = "build/test_cli_out/toy_a/";
  for (const char* name :
       {"report.json", "resolved_config.json", "posterior.json", "trace.csv",
        "draws_sivi.csv", "draws_target.csv", "hist_z_0_sivi.csv",
        "hist_z_0_target.csv"}) {
    INFO("missing artifact: " << name);
    CHECK(std::filesystem::exists(dir + name));
  }

  const auto report = nlohmann::json::parse(slurp(dir + "report.json"));
  CHECK(report["experiment"] == "toy");
  CHECK(report["seed"] == 5);
  CHECK(report.contains("files"));
  CHECK(report.contains("moments"));
  CHECK(report.contains("timing_seconds"));

  const auto resolved =
      nlohmann::json::parse(slurp(dir + "resolved_config.json"));
  CHECK(resolved["sivi"]["K"] == 4);
  CHECK(resolved["sivi"]["noise_dim"] == 2);

  const CsvData draws = read_csv(dir + "draws_sivi.csv");
  CHECK(draws.header == std::vector<std::string>{"z_0"});
  CHECK(draws.values.rows() == 60);
  const CsvData trace = read_csv(dir + "trace.csv");
  CHECK(trace.values.rows() == 25);
  CHECK(trace.header ==
        std::vector<std::string>{"iteration", "lower_bound"});

  // An invalid config makes `run` fail fast with the validation exit code.
  const auto bad = run_cli("run --config build/test_cli_bad.json");
  CHECK(bad.code == 1);
}

TEST_CASE("run: repeat runs are byte-identical; the seed flag changes them") {
  spit("build/test_cli_toy.json", kToyConfig);
  std::filesystem::remove_all("build/test_cli_out/toy_b");
  std::filesystem::remove_all("build/test_cli_out/toy_c");
  REQUIRE(run_cli("run --config build/test_cli_toy.json "
                  "--out build/test_cli_out/toy_b")
              .code == 0);
  REQUIRE(run_cli("run --config build/test_cli_toy.json "
                  "--out build/test_cli_out/toy_c --seed 99")
              .code == 0);

  const std::string a = "build/test_cli_out/toy_a/";
  const std::string b = "build/test_cli_out/toy_b/";
  const std::string c = "build/test_cli_out/toy_c/";
  for (const char* name : {"draws_sivi.csv", "trace.csv", "posterior.json"}) {
    INFO("artifact: " << name);
    CHECK(slurp(a + name) == slurp(b + name));
  }
  CHECK(slurp(a + "draws_sivi.csv") != slurp(c + "draws_sivi.csv"));
  const auto rc = nlohmann::json::parse(slurp(c + "resolved_config.json"));
  CHECK(rc["seed"] == 99);
}

TEST_CASE("draws: samples a serialized posterior with the right columns") {
  // Toy posterior produced by the run above.
  const std::string post_path = "build/test_cli_out/toy_a/posterior.json";
  REQUIRE(std::filesystem::exists(post_path));
  const std::string out1 = "build/test_cli_out/draws_z1.csv";
  const std::string out2 = "build/test_cli_out/draws_z2.csv";
  const std::string out3 = "build/test_cli_out/draws_z3.csv";
  {
    const auto r = run_cli("draws --posterior " + post_path + " --count 40 " +
                           "--seed 3 --out " + out1);
    REQUIRE(r.code == 0);
    CHECK(r.out == out1 + "\n");
  }
  REQUIRE(run_cli("draws --posterior " + post_path + " --count 40 --seed 3 " +
                  "--out " + out2)
              .code == 0);
  REQUIRE(run_cli("draws --posterior " + post_path + " --count 40 --seed 4 " +
                  "--out " + out3)
              .code == 0);
  CHECK(slurp(out1) == slurp(out2));
  CHECK(slurp(out1) != slurp(out3));
  const CsvData csv = read_csv(out1);
  CHECK(csv.header == std::vector<std::string>{"z_0"});
  CHECK(csv.values.rows() == 40);

  // A hand-built count-model posterior exports named parameter columns.
  ImplicitMixer mixer;
  mixer.mlp = Mlp{{3, 4}};
  ExplicitConditional cond;
  cond.kind = CondKind::GammaBeta;
  cond.zdim = 2;
  SemiImplicitPosterior post(mixer, cond);
  RngStream rng(11);
  post.init_params(rng);
  spit("build/test_cli_out/posterior_gb.json", posterior_to_json(post));
  const std::string outg = "build/test_cli_out/draws_gb.csv";
  REQUIRE(run_cli("draws --posterior build/test_cli_out/posterior_gb.json "
                  "--count 25 --out " +
                  outg)
              .code == 0);
  const CsvData gb = read_csv(outg);
  CHECK(gb.header == std::vector<std::string>{"r", "p"});
  REQUIRE(gb.values.rows() == 25);
  for (std::size_t i = 0; i < gb.values.rows(); ++i) {
    CHECK(gb.values.row(i)[0] > 0.0);
    CHECK(gb.values.row(i)[1] > 0.0);
    CHECK(gb.values.row(i)[1] < 1.0);
  }

  // Corrupted posteriors are an I/O failure, not a crash.
  spit("build/test_cli_out/posterior_bad.json", "{\"version\": 99}");
  CHECK(run_cli("draws --posterior build/test_cli_out/posterior_bad.json")
            .code == 4);
}
