#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "detox/config.hpp"
#include "detox/detector.hpp"
#include "detox/encoder.hpp"
#include "detox/evaluation.hpp"
#include "detox/reducer.hpp"

namespace detox::pipeline {

// Effective settings of one run: the flat config with every default filled
// in. A single seed feeds every stochastic component (vocabulary/weight
// initialization, masking, fold assignment, batch order).
struct RunConfig {
  std::filesystem::path corpus_file;
  std::string corpus_format = "jsonl";  // jsonl | hasoc | macd | bdshs
  std::filesystem::path out_dir;

  // Read-side overrides for runs that consume another run's artifacts.
  // Empty means "this run's own out_dir / encoder|detector".
  std::filesystem::path encoder_dir;
  std::filesystem::path detector_dir;

  std::string encoder_kind = "builtin";        // builtin | external
  std::filesystem::path external_encoder_dir;  // encoder.kind = external

  encoder::EncoderConfig encoder;
  encoder::PretrainConfig pretrain;
  detector::TrainingConfig training;
  int folds = 5;  // stratified folds; fold 0 is the train/val holdout
  reducer::ReductionConfig reduction;
  std::uint64_t seed = 1;

  std::filesystem::path mlm_source() const;      // masked-fill encoder
  std::filesystem::path detector_source() const; // trained detector

  void validate() const;  // throws UsageError; corpus file must exist
};

// Flat-config plumbing shared with the command-line driver.
const std::set<std::string>& known_keys();
RunConfig run_config_from(const config::Config& flat);
config::Config to_flat_config(const RunConfig& rc);  // snapshot source

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunRecord {
  std::filesystem::path out_dir;
  std::vector<std::string> stages_run;
  std::vector<std::string> stages_skipped;  // complete before this run
  std::vector<StageTiming> timings;         // stages run by this invocation
  std::size_t comments = 0;                 // corpus size (0 until loaded)
  std::size_t failures = 0;                 // per-comment failures this run
};

// Stage names in execution order: corpus, mlm, train, detect, attribute,
// reduce, report.
const std::vector<std::string>& stage_names();

// Runs the requested stages (any order given; executed in canonical order)
// against rc.out_dir. A stage whose completion marker exists is skipped and
// its outputs are left untouched. Finishes by writing timings.json and
// manifest.json (sha256 of every data artifact; timings and markers stay
// out, so runs with equal configs produce equal manifests).
RunRecord run_stages(const RunConfig& rc,
                     const std::vector<std::string>& stages);

// The end-to-end procedure over all stages. The effective config is
// snapshotted to config.snapshot first; a run directory created under a
// different config is refused. Per-comment failures are recorded in
// <stage>.failures.jsonl and the run continues; stage-level failures throw.
RunRecord run_pipeline(const RunConfig& rc);

// Stratified k-fold cross-validation over the run's corpus snapshot, each
// fold trained from the saved encoder. Writes cv_report.json and follows
// the marker contract (a completed report is never recomputed; `ran` is
// false and `report` empty on a skip).
struct CrossValidationOutcome {
  bool ran = false;
  detector::CrossValidationReport report;
};
CrossValidationOutcome run_cross_validation(const RunConfig& rc);

// Recomputes manifest.json over the directory's data artifacts (timings,
// markers, and the manifest itself excluded).
void refresh_manifest(const std::filesystem::path& out_dir);

// JSON views shared by the report stage, cross-validation reports, and the
// evaluate subcommand.
nlohmann::ordered_json metrics_to_json(const evaluation::MetricsReport& m);
nlohmann::ordered_json fold_summary_to_json(const evaluation::FoldSummary& s);

}  // namespace detox::pipeline
