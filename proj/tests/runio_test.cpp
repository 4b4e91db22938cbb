#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "detox/errors.hpp"
#include "detox/runio.hpp"

namespace rio = detox::runio;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "detox_runio_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("log level parsing") {
  CHECK(rio::parse_log_level("quiet") == rio::LogLevel::Quiet);
  CHECK(rio::parse_log_level("info") == rio::LogLevel::Info);
  CHECK(rio::parse_log_level("debug") == rio::LogLevel::Debug);
  CHECK_THROWS_WITH_AS(rio::parse_log_level("loud"),
                       "unknown log level `loud` (expected quiet, info, or "
                       "debug)",
                       detox::UsageError);

  rio::set_log_level(rio::LogLevel::Debug);
  CHECK(rio::log_level() == rio::LogLevel::Debug);
  rio::set_log_level(rio::LogLevel::Info);
  CHECK(rio::log_level() == rio::LogLevel::Info);
}

TEST_CASE("sha256 of strings matches published vectors") {
  CHECK(rio::sha256_string("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(rio::sha256_string("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(rio::sha256_string(
            "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("sha256 of files streams the whole content") {
  const auto dir = fresh_dir("sha");
  const auto small = dir / "small.txt";
  std::ofstream(small) << "abc";
  CHECK(rio::sha256_file(small) == rio::sha256_string("abc"));

  // Bigger than one read buffer, to exercise the chunked path.
  std::string big(300000, 'q');
  const auto big_path = dir / "big.txt";
  std::ofstream(big_path) << big;
  CHECK(rio::sha256_file(big_path) == rio::sha256_string(big));

  CHECK_THROWS_AS(rio::sha256_file(dir / "absent.txt"), detox::DataError);
}

TEST_CASE("JsonlWriter writes one record per line") {
  const auto dir = fresh_dir("jsonl");
  const auto path = dir / "dump.jsonl";
  {
    rio::JsonlWriter w(path);
    w.write(R"({"id":"a"})");
    w.write(R"({"id":"b"})");
    CHECK(w.lines() == 2);
    w.close();
  }
  CHECK(slurp(path) == "{\"id\":\"a\"}\n{\"id\":\"b\"}\n");

  const auto lines = rio::read_lines(path);
  REQUIRE(lines.size() == 2);
  CHECK(json::parse(lines[0])["id"] == "a");
  CHECK(json::parse(lines[1])["id"] == "b");
}

TEST_CASE("JsonlWriter truncates stale content") {
  const auto dir = fresh_dir("jsonl_trunc");
  const auto path = dir / "dump.jsonl";
  std::ofstream(path) << "old line 1\nold line 2\nold line 3\n";
  {
    rio::JsonlWriter w(path);
    w.write("fresh");
    w.close();
  }
  CHECK(slurp(path) == "fresh\n");
}

TEST_CASE("JsonlWriter cannot open unwritable paths") {
  const auto dir = fresh_dir("jsonl_bad");
  CHECK_THROWS_AS(rio::JsonlWriter(dir / "no_such_dir" / "x.jsonl"),
                  detox::DataError);
}

TEST_CASE("read_lines skips empties and reports missing files") {
  const auto dir = fresh_dir("lines");
  const auto path = dir / "mixed.txt";
  std::ofstream(path) << "one\n\ntwo\n\n\nthree\n";
  const auto lines = rio::read_lines(path);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "one");
  CHECK(lines[1] == "two");
  CHECK(lines[2] == "three");

  CHECK_THROWS_AS(rio::read_lines(dir / "missing.txt"), detox::DataError);
}

TEST_CASE("stage markers flip exactly once") {
  const auto dir = fresh_dir("stages");
  CHECK_FALSE(rio::stage_done(dir, "train"));
  rio::mark_stage_done(dir, "train");
  CHECK(rio::stage_done(dir, "train"));
  CHECK_FALSE(rio::stage_done(dir, "detect"));
  // Marking twice is harmless.
  CHECK_NOTHROW(rio::mark_stage_done(dir, "train"));
  CHECK(rio::stage_done(dir, "train"));
  CHECK(fs::exists(dir / "stages" / "train.done"));
}

TEST_CASE("manifest lists sorted files with checksums") {
  const auto dir = fresh_dir("manifest");
  std::ofstream(dir / "b.jsonl") << "bravo\n";
  std::ofstream(dir / "a.jsonl") << "alpha\n";

  rio::write_manifest(dir, {"b.jsonl", "a.jsonl"});
  const auto j = json::parse(slurp(dir / "manifest.json"));
  REQUIRE(j.contains("files"));
  CHECK(j["files"].size() == 2);
  CHECK(j["files"]["a.jsonl"] == rio::sha256_string("alpha\n"));
  CHECK(j["files"]["b.jsonl"] == rio::sha256_string("bravo\n"));

  // Input order must not leak into the document.
  const auto first = slurp(dir / "manifest.json");
  rio::write_manifest(dir, {"a.jsonl", "b.jsonl"});
  CHECK(slurp(dir / "manifest.json") == first);

  CHECK_THROWS_AS(rio::write_manifest(dir, {"ghost.jsonl"}),
                  detox::DataError);
}

TEST_CASE("manifests of identical outputs are byte-identical") {
  const auto da = fresh_dir("manifest_a");
  const auto db = fresh_dir("manifest_b");
  for (const auto& d : {da, db}) {
    std::ofstream(d / "detect.jsonl") << "{\"id\":\"x\"}\n";
    std::ofstream(d / "summary.json") << "{\"n\":1}\n";
    rio::write_manifest(d, {"detect.jsonl", "summary.json"});
  }
  CHECK(slurp(da / "manifest.json") == slurp(db / "manifest.json"));
}
