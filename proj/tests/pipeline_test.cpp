#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "detox/config.hpp"
#include "detox/detector.hpp"
#include "detox/encoder.hpp"
#include "detox/errors.hpp"
#include "detox/pipeline.hpp"
#include "detox/reducer.hpp"
#include "detox/synth.hpp"

namespace fs = std::filesystem;
namespace pl = detox::pipeline;
namespace syn = detox::synth;
using json = nlohmann::json;
using detox::DataError;
using detox::UsageError;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "detox_pipeline_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::string> lines_of(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(static_cast<bool>(in));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

// A corpus small enough that a full pipeline run takes a fraction of a
// second but large enough that the detector reliably flags hate comments.
fs::path synth_corpus(const fs::path& dir, int size, double rate,
                      std::uint64_t seed = 13) {
  syn::SynthConfig sc;
  sc.size = size;
  sc.trigger_rate = rate;
  sc.seed = seed;
  const auto generated = syn::generate(sc);
  const auto corpus_file = dir / "corpus.jsonl";
  syn::write(generated, corpus_file, dir / "truth.jsonl");
  return corpus_file;
}

pl::RunConfig tiny_run(const fs::path& corpus_file, const fs::path& out) {
  pl::RunConfig rc;
  rc.corpus_file = corpus_file;
  rc.out_dir = out;
  rc.seed = 7;
  rc.folds = 3;
  rc.encoder.vocab_size = 512;
  rc.encoder.dim = 16;
  rc.encoder.max_length = 12;
  rc.encoder.seed = 7;
  rc.pretrain.epochs = 2;
  rc.pretrain.seed = 7;
  rc.training.max_epochs = 3;
  rc.training.learning_rate = 3e-3;
  rc.training.seed = 7;
  return rc;
}

}  // namespace

TEST_CASE("stage names come in execution order") {
  const auto& names = pl::stage_names();
  const std::vector<std::string> expected = {
      "corpus", "mlm", "train", "detect", "attribute", "reduce", "report"};
  CHECK(names == expected);
}

TEST_CASE("run config round-trips through the flat form") {
  pl::RunConfig rc;
  rc.corpus_file = "/data/in.jsonl";
  rc.corpus_format = "hasoc";
  rc.out_dir = "/runs/x";
  rc.encoder_dir = "/runs/base/encoder";
  rc.detector_dir = "/runs/base/detector";
  rc.seed = 99;
  rc.folds = 4;
  rc.encoder.vocab_size = 777;
  rc.encoder.dim = 24;
  rc.encoder.layers = 1;
  rc.encoder.heads = 3;
  rc.encoder.max_length = 20;
  rc.pretrain.epochs = 4;
  rc.pretrain.batch_size = 8;
  rc.pretrain.learning_rate = 2e-4;
  rc.pretrain.weight_decay = 0.02;
  rc.pretrain.mask_fraction = 0.2;
  rc.pretrain.warmup_fraction = 0.05;
  rc.training.learning_rate = 5e-4;
  rc.training.weight_decay = 0.03;
  rc.training.warmup_fraction = 0.2;
  rc.training.max_epochs = 7;
  rc.training.early_stop_patience = 2;
  rc.training.batch_size = 4;
  rc.reduction.ig.steps = 31;
  rc.reduction.ig.quadrature = detox::attribution::Quadrature::LeftRiemann;
  rc.reduction.ig.k = 4;
  rc.reduction.mask_fraction = 0.75;
  rc.reduction.candidates = 6;

  const auto flat = pl::to_flat_config(rc);

  SUBCASE("the output directory never enters the snapshot surface") {
    CHECK(!flat.has("io.out"));
    CHECK(flat.get_string("io.corpus") == "/data/in.jsonl");
  }

  SUBCASE("every emitted key is a known key") {
    CHECK_NOTHROW(detox::config::require_known_keys(flat, pl::known_keys()));
  }

  SUBCASE("parsing the flat form reproduces the run config") {
    auto flat2 = flat;
    flat2.set("io.out", "/runs/x");
    const auto back = pl::run_config_from(flat2);
    CHECK(back.corpus_file == rc.corpus_file);
    CHECK(back.corpus_format == rc.corpus_format);
    CHECK(back.out_dir == rc.out_dir);
    CHECK(back.encoder_dir == rc.encoder_dir);
    CHECK(back.detector_dir == rc.detector_dir);
    CHECK(back.seed == rc.seed);
    CHECK(back.folds == rc.folds);
    CHECK(back.encoder.vocab_size == rc.encoder.vocab_size);
    CHECK(back.encoder.dim == rc.encoder.dim);
    CHECK(back.encoder.layers == rc.encoder.layers);
    CHECK(back.encoder.heads == rc.encoder.heads);
    CHECK(back.encoder.max_length == rc.encoder.max_length);
    CHECK(back.pretrain.epochs == rc.pretrain.epochs);
    CHECK(back.pretrain.batch_size == rc.pretrain.batch_size);
    CHECK(back.pretrain.learning_rate ==
          doctest::Approx(rc.pretrain.learning_rate));
    CHECK(back.pretrain.weight_decay ==
          doctest::Approx(rc.pretrain.weight_decay));
    CHECK(back.pretrain.mask_fraction ==
          doctest::Approx(rc.pretrain.mask_fraction));
    CHECK(back.training.learning_rate ==
          doctest::Approx(rc.training.learning_rate));
    CHECK(back.training.max_epochs == rc.training.max_epochs);
    CHECK(back.training.early_stop_patience ==
          rc.training.early_stop_patience);
    CHECK(back.training.batch_size == rc.training.batch_size);
    CHECK(back.reduction.ig.steps == rc.reduction.ig.steps);
    CHECK(back.reduction.ig.quadrature == rc.reduction.ig.quadrature);
    CHECK(back.reduction.ig.k == rc.reduction.ig.k);
    CHECK(back.reduction.mask_fraction ==
          doctest::Approx(rc.reduction.mask_fraction));
    CHECK(back.reduction.candidates == rc.reduction.candidates);
    // the derived seeds follow the run seed
    CHECK(back.encoder.seed == rc.seed);
    CHECK(back.pretrain.seed == rc.seed);
    CHECK(back.training.seed == rc.seed);
  }
}

TEST_CASE("validation refuses incomplete or inconsistent settings") {
  const auto dir = fresh_dir("validate");
  const auto corpus_file = synth_corpus(dir, 20, 0.5);

  auto rc = tiny_run(corpus_file, dir / "run");
  CHECK_NOTHROW(rc.validate());

  SUBCASE("missing output directory") {
    rc.out_dir.clear();
    CHECK_THROWS_AS(rc.validate(), UsageError);
  }
  SUBCASE("missing corpus path") {
    rc.corpus_file.clear();
    CHECK_THROWS_AS(rc.validate(), UsageError);
  }
  SUBCASE("absent corpus file is a data error") {
    rc.corpus_file = dir / "nope.jsonl";
    CHECK_THROWS_AS(rc.validate(), DataError);
  }
  SUBCASE("fold count below two") {
    rc.folds = 1;
    CHECK_THROWS_AS(rc.validate(), UsageError);
  }
  SUBCASE("unknown encoder kind") {
    rc.encoder_kind = "frontier";
    CHECK_THROWS_AS(rc.validate(), UsageError);
  }
  SUBCASE("external encoder needs a directory") {
    rc.encoder_kind = "external";
    rc.external_encoder_dir.clear();
    CHECK_THROWS_AS(rc.validate(), UsageError);
  }
  SUBCASE("unknown stage name is a usage error") {
    CHECK_THROWS_AS(pl::run_stages(rc, {"polish"}), UsageError);
  }
}

TEST_CASE("a fixed configuration reproduces the run manifest byte for byte") {
  const auto dir = fresh_dir("determinism");
  const auto corpus_file = synth_corpus(dir, 60, 0.5);

  const auto rec_a = pl::run_pipeline(tiny_run(corpus_file, dir / "a"));
  const auto rec_b = pl::run_pipeline(tiny_run(corpus_file, dir / "b"));
  CHECK(rec_a.stages_run.size() == 7);
  CHECK(rec_b.stages_run.size() == 7);

  const auto manifest_a = slurp(dir / "a" / "manifest.json");
  const auto manifest_b = slurp(dir / "b" / "manifest.json");
  CHECK(manifest_a == manifest_b);

  // the manifest indexes data artifacts only
  const auto parsed = json::parse(manifest_a);
  const auto& files = parsed.at("files");
  CHECK(files.contains("config.snapshot"));
  CHECK(files.contains("summary.json"));
  CHECK(files.contains("detect.jsonl"));
  CHECK(!files.contains("manifest.json"));
  CHECK(!files.contains("timings.json"));
  for (const auto& [rel, digest] : files.items()) {
    CHECK(rel.rfind("stages/", 0) != 0);
    CHECK(digest.get<std::string>().size() == 64);
  }
}

TEST_CASE("resume skips completed stages and never rewrites their outputs") {
  const auto dir = fresh_dir("resume");
  const auto corpus_file = synth_corpus(dir, 60, 0.5);
  const auto out = dir / "run";
  const auto rc = tiny_run(corpus_file, out);

  const auto first = pl::run_pipeline(rc);
  CHECK(first.stages_run.size() == 7);
  CHECK(first.stages_skipped.empty());

  // plant a marker inside a completed stage output: a resumed run must
  // leave the file exactly as it found it
  const auto reduce_file = out / "reduce.jsonl";
  auto reduce_lines = lines_of(reduce_file);
  REQUIRE(!reduce_lines.empty());
  const auto sentinel = reduce_lines.front();
  {
    std::ofstream app(reduce_file, std::ios::app);
    app << sentinel << "\n";
  }
  const auto tampered = slurp(reduce_file);

  const auto second = pl::run_pipeline(rc);
  CHECK(second.stages_run.empty());
  CHECK(second.stages_skipped.size() == 7);
  CHECK(slurp(reduce_file) == tampered);

  // clearing one completion marker re-runs exactly that stage; upstream
  // outputs stay untouched
  fs::remove(out / "stages" / "report.done");
  const auto third = pl::run_pipeline(rc);
  CHECK(third.stages_run == std::vector<std::string>{"report"});
  CHECK(third.stages_skipped.size() == 6);
  CHECK(slurp(reduce_file) == tampered);
}

TEST_CASE("a run directory refuses a different configuration") {
  const auto dir = fresh_dir("snapshot");
  const auto corpus_file = synth_corpus(dir, 40, 0.5);
  const auto out = dir / "run";

  pl::run_pipeline(tiny_run(corpus_file, out));

  auto changed = tiny_run(corpus_file, out);
  changed.seed = 8;
  try {
    pl::run_pipeline(changed);
    FAIL("expected a usage error");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("different configuration") !=
          std::string::npos);
  }
}

TEST_CASE("supplied artifacts skip their build stages") {
  const auto dir = fresh_dir("supplied");
  const auto corpus_file = synth_corpus(dir, 60, 0.5);
  const auto base = dir / "base";
  pl::run_pipeline(tiny_run(corpus_file, base));

  // a second run over a benign corpus, reusing the trained artifacts; keep
  // only comments the supplied detector already clears so the scan run has
  // no hate predictions by construction
  const auto benign_dir = dir / "benign";
  fs::create_directories(benign_dir);
  const auto benign_file = synth_corpus(benign_dir, 60, 0.0, 14);
  const auto det =
      detox::detector::TrainedDetector::load(base / "detector");
  auto benign = detox::corpus::load_jsonl(benign_file, "synth",
                                          detox::corpus::Split::All);
  std::erase_if(benign.comments, [&](const auto& c) {
    return det.classify(c.text).label != 0;
  });
  REQUIRE(benign.comments.size() >= 10);
  const auto cleared_file = benign_dir / "cleared.jsonl";
  detox::corpus::save_jsonl(benign, cleared_file);

  auto rc = tiny_run(cleared_file, dir / "scan");
  rc.encoder_dir = base / "encoder";
  rc.detector_dir = base / "detector";
  const auto rec = pl::run_pipeline(rc);
  CHECK(rec.stages_run.size() == 7);
  CHECK(!fs::exists(dir / "scan" / "encoder"));
  CHECK(!fs::exists(dir / "scan" / "detector"));

  // nothing is predicted hate, so the explanation and rewrite dumps are
  // empty and the report says no reduction was attempted
  CHECK(lines_of(dir / "scan" / "attribute.jsonl").empty());
  CHECK(lines_of(dir / "scan" / "reduce.jsonl").empty());
  const auto summary = json::parse(slurp(dir / "scan" / "summary.json"));
  CHECK(summary.at("reduction").at("attempted").get<int>() == 0);
  CHECK(summary.at("detection").at("hate_detected").get<int>() == 0);
}

TEST_CASE("stage prerequisites are enforced") {
  const auto dir = fresh_dir("prereq");
  const auto corpus_file = synth_corpus(dir, 20, 0.5);
  const auto rc = tiny_run(corpus_file, dir / "run");

  SUBCASE("reduce without attribution") {
    CHECK_THROWS_AS(pl::run_stages(rc, {"reduce"}), DataError);
  }
  SUBCASE("detect without the corpus snapshot") {
    CHECK_THROWS_AS(pl::run_stages(rc, {"detect"}), DataError);
  }
}

TEST_CASE("the reduce stage reproduces in-memory reductions exactly") {
  const auto dir = fresh_dir("roundtrip");
  const auto corpus_file = synth_corpus(dir, 120, 0.5);
  const auto out = dir / "run";
  const auto rc = tiny_run(corpus_file, out);
  pl::run_pipeline(rc);

  const auto attr_lines = lines_of(out / "attribute.jsonl");
  const auto reduce_lines = lines_of(out / "reduce.jsonl");
  REQUIRE(attr_lines.size() >= 5);
  REQUIRE(attr_lines.size() == reduce_lines.size());

  const auto det = detox::detector::TrainedDetector::load(out / "detector");
  const auto mlm = detox::encoder::BuiltinEncoder::load(out / "encoder");
  const auto corpus = detox::corpus::load_jsonl(
      out / "corpus.jsonl", "synth", detox::corpus::Split::All);
  std::unordered_map<std::string, std::string> text_by_id;
  for (const auto& c : corpus.comments) text_by_id.emplace(c.id, c.text);

  for (std::size_t i = 0; i < 5; ++i) {
    const auto id = json::parse(attr_lines[i]).at("id").get<std::string>();
    const auto res = detox::reducer::reduce_comment(
        det, *mlm, text_by_id.at(id), rc.reduction);
    CHECK(detox::reducer::to_json_record(res, id) == reduce_lines[i]);
  }
}

TEST_CASE("cross-validation follows the completion-marker contract") {
  const auto dir = fresh_dir("cv");
  const auto corpus_file = synth_corpus(dir, 60, 0.5);
  const auto rc = tiny_run(corpus_file, dir / "run");
  pl::run_pipeline(rc);

  const auto first = pl::run_cross_validation(rc);
  CHECK(first.ran);
  CHECK(first.report.folds.size() == 3);
  CHECK(fs::exists(dir / "run" / "cv_report.json"));
  CHECK(fs::exists(dir / "run" / "stages" / "cv.done"));

  const auto second = pl::run_cross_validation(rc);
  CHECK(!second.ran);
}
