#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "detox_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the command-line driver with stdout/stderr captured. `env` is a
// space-separated VAR=value prefix for the shell.
RunResult run_cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const auto dir = fs::temp_directory_path() / "detox_cli_test" / "io";
  fs::create_directories(dir);
  const auto out_file = dir / ("out" + std::to_string(counter) + ".txt");
  const auto err_file = dir / ("err" + std::to_string(counter) + ".txt");
  ++counter;

  std::string cmd;
  if (!env.empty()) cmd += env + " ";
  cmd += std::string(DETOX_BIN) + " " + args + " > " + out_file.string() +
         " 2> " + err_file.string();
  const int status = std::system(cmd.c_str());

  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

std::size_t count_lines(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(static_cast<bool>(in));
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

// Small but learnable settings shared by the end-to-end cases.
std::string tiny_sets() {
  return "--set run.seed=7 --set encoder.vocab_size=512 "
         "--set encoder.dim=16 --set encoder.max_length=12 "
         "--set pretrain.epochs=2 --set train.max_epochs=3 "
         "--set train.learning_rate=3e-3 --set train.folds=3";
}

}  // namespace

TEST_CASE("help requests succeed") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("pipeline --help").exit_code == 0);
  const auto r = run_cli("--help");
  CHECK(r.out.find("synth") != std::string::npos);
  CHECK(r.out.find("pipeline") != std::string::npos);
}

TEST_CASE("usage problems exit with code 1") {
  SUBCASE("no subcommand") { CHECK(run_cli("").exit_code == 1); }
  SUBCASE("unknown subcommand") {
    CHECK(run_cli("transmogrify").exit_code == 1);
  }
  SUBCASE("unknown flag") {
    CHECK(run_cli("synth --frobnicate").exit_code == 1);
  }
  SUBCASE("override without an assignment") {
    const auto r = run_cli("synth --size 5 --set run.seed");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("usage error") != std::string::npos);
  }
  SUBCASE("unknown config key") {
    const auto dir = fresh_dir("badkey");
    const auto r = run_cli("synth --size 5 --corpus-out " +
                           (dir / "c.jsonl").string() + " --truth-out " +
                           (dir / "t.jsonl").string() + " --set wat.ever=1");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("wat.ever") != std::string::npos);
  }
  SUBCASE("bad log level") {
    CHECK(run_cli("synth --size 5 --log loud").exit_code == 1);
  }
}

TEST_CASE("data problems exit with code 2") {
  const auto dir = fresh_dir("data");
  SUBCASE("absent corpus file") {
    const auto r = run_cli("detect --corpus " + (dir / "nope.jsonl").string() +
                           " --out " + (dir / "run").string());
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("data error") != std::string::npos);
  }
  SUBCASE("malformed corpus line") {
    const auto bad = dir / "bad.jsonl";
    std::ofstream(bad) << "{\"id\": \"a\", \"text\": \"ok\", \"label\": 0}\n"
                       << "not json at all\n";
    const auto r = run_cli("detect --corpus " + bad.string() + " --out " +
                           (dir / "run2").string());
    CHECK(r.exit_code == 2);
  }
  SUBCASE("evaluate with nothing to evaluate") {
    const auto empty = fresh_dir("data/empty_run");
    const auto r = run_cli("evaluate --out " + empty.string());
    CHECK(r.exit_code == 2);
  }
}

TEST_CASE("synth writes the requested corpus") {
  const auto dir = fresh_dir("synth");
  const auto corpus = dir / "c.jsonl";
  const auto truth = dir / "t.jsonl";
  const auto r = run_cli("synth --size 40 --trigger-rate 0.5 --corpus-out " +
                         corpus.string() + " --truth-out " + truth.string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("wrote 40 comments (20 hate)") != std::string::npos);
  CHECK(count_lines(corpus) == 40);
  CHECK(count_lines(truth) == 40);
}

TEST_CASE("pipeline, resume, and evaluate compose through the run directory") {
  const auto dir = fresh_dir("e2e");
  const auto corpus = dir / "c.jsonl";
  const auto truth = dir / "t.jsonl";
  REQUIRE(run_cli("synth --size 60 --trigger-rate 0.5 --corpus-out " +
                  corpus.string() + " --truth-out " + truth.string())
              .exit_code == 0);

  const auto out = dir / "run";
  const auto pipe_args = "pipeline --corpus " + corpus.string() + " --out " +
                         out.string() + " " + tiny_sets();
  const auto first = run_cli(pipe_args);
  CHECK(first.exit_code == 0);
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "manifest.json"));

  SUBCASE("a resumed run skips every completed stage") {
    const auto second = run_cli(pipe_args);
    CHECK(second.exit_code == 0);
    CHECK(second.out.find("skipped (already complete): 7") !=
          std::string::npos);
  }

  SUBCASE("a changed setting is refused, a fresh directory accepted") {
    const auto refused = run_cli("pipeline --corpus " + corpus.string() +
                                 " --out " + out.string() + " " +
                                 tiny_sets() + " --set reduce.candidates=5");
    CHECK(refused.exit_code == 1);
    CHECK(refused.err.find("different configuration") != std::string::npos);
  }

  SUBCASE("evaluate reads the dumps and writes evaluation.json") {
    const auto ev = run_cli("evaluate --out " + out.string() + " --truth " +
                            truth.string());
    CHECK(ev.exit_code == 0);
    CHECK(ev.out.find("detection:") != std::string::npos);
    CHECK(ev.out.find("Jaccard") != std::string::npos);
    const auto parsed = json::parse(slurp(out / "evaluation.json"));
    CHECK(parsed.contains("detection"));
    CHECK(parsed.contains("jaccard_truth"));
  }

  SUBCASE("detect reuses supplied artifacts against a new corpus") {
    const auto corpus2 = dir / "c2.jsonl";
    REQUIRE(run_cli("synth --size 20 --trigger-rate 0.5 --set run.seed=14" +
                    std::string(" --corpus-out ") + corpus2.string() +
                    " --truth-out " + (dir / "t2.jsonl").string())
                .exit_code == 0);
    const auto scan = dir / "scan";
    const auto r = run_cli("detect --corpus " + corpus2.string() + " --out " +
                           scan.string() + " --encoder " +
                           (out / "encoder").string() + " --detector " +
                           (out / "detector").string() + " " + tiny_sets());
    CHECK(r.exit_code == 0);
    CHECK(count_lines(scan / "detect.jsonl") == 20);
  }
}

TEST_CASE("environment variables set the run directory and log level") {
  const auto dir = fresh_dir("env");
  const auto corpus = dir / "c.jsonl";
  REQUIRE(run_cli("synth --size 24 --trigger-rate 0.5 --corpus-out " +
                  corpus.string() + " --truth-out " + (dir / "t.jsonl").string())
              .exit_code == 0);

  SUBCASE("the default output directory comes from the environment") {
    const auto out = dir / "env_run";
    const auto r = run_cli("pipeline --corpus " + corpus.string() + " " +
                               tiny_sets(),
                           "DETOX_OUT=" + out.string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(out / "summary.json"));
  }

  SUBCASE("an explicit flag outranks the environment") {
    const auto flag_out = dir / "flag_run";
    const auto env_out = dir / "ignored_run";
    const auto r = run_cli("pipeline --corpus " + corpus.string() + " --out " +
                               flag_out.string() + " " + tiny_sets(),
                           "DETOX_OUT=" + env_out.string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(flag_out / "summary.json"));
    CHECK(!fs::exists(env_out));
  }

  SUBCASE("quiet logging silences progress lines") {
    const auto out = dir / "quiet_run";
    const auto r = run_cli("pipeline --corpus " + corpus.string() + " --out " +
                               out.string() + " " + tiny_sets(),
                           "DETOX_LOG=quiet");
    CHECK(r.exit_code == 0);
    CHECK(r.err.empty());
  }

  SUBCASE("an invalid log level in the environment is a usage error") {
    const auto r = run_cli("synth --size 5", "DETOX_LOG=shout");
    CHECK(r.exit_code == 1);
  }
}
