#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace detox::evaluation {

// Binary classification metrics. Macro variants average per-class values
// with equal class weight; micro variants are computed from global counts
// (for single-label binary classification micro precision, recall, F1, and
// accuracy all coincide). Zero-denominator cells are defined as 0.
struct MetricsReport {
  double accuracy = 0.0;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1_macro = 0.0;
  double precision_micro = 0.0;
  double recall_micro = 0.0;
  double f1_micro = 0.0;
  // per-class detail, index = class label
  std::array<double, 2> precision_per_class{0.0, 0.0};
  std::array<double, 2> recall_per_class{0.0, 0.0};
  std::array<double, 2> f1_per_class{0.0, 0.0};
  std::array<std::int64_t, 2> support{0, 0};
};

// Mean and sample standard deviation of one metric across folds.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  // Display form "0.84 ± 0.010" (two decimals, plus-minus, three decimals).
  std::string formatted() const;
};

struct FoldSummary {
  MeanStd accuracy;
  MeanStd precision_macro;
  MeanStd recall_macro;
  MeanStd f1_macro;
  MeanStd precision_micro;
  MeanStd recall_micro;
  MeanStd f1_micro;
};

// One row of a human-evaluation file: either a 1..5 Likert rating or a
// hate-word set, per comment and annotator.
struct HumanEvalRecord {
  std::string comment_id;
  std::string annotator_id;
  bool has_rating = false;
  int rating = 0;                   // valid iff has_rating
  std::vector<std::string> words;   // valid iff !has_rating
};

struct PairwiseAgreement {
  std::string annotator_a;
  std::string annotator_b;
  double r = 0.0;
  std::size_t common_items = 0;
};

struct AgreementReport {
  std::vector<std::string> annotators;        // sorted ids
  std::vector<double> mean_rating;            // aligned with annotators
  std::vector<PairwiseAgreement> pairwise;    // all unordered pairs
  double pooled_r = 0.0;                      // mean of pairwise r values
};

// Confusion-matrix metrics for aligned binary label sequences.
// Errors: length mismatch, empty input, or labels outside {0, 1}.
MetricsReport classification_metrics(const std::vector<int>& predictions,
                                     const std::vector<int>& golds);

// Mean and sample (n-1) standard deviation per metric. Requires >= 2 reports.
FoldSummary aggregate_folds(const std::vector<MetricsReport>& reports);

// |A n B| / |A u B| treating the inputs as sets; both empty -> 1.
double jaccard(const std::vector<std::string>& a,
               const std::vector<std::string>& b);

// Product-moment correlation. Errors: length mismatch, fewer than two
// samples, or a constant sequence (correlation undefined).
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Reads a delimited human-evaluation file. Header must be
// `comment_id, annotator_id, rating` (Likert rows, ratings in 1..5) or
// `comment_id, annotator_id, words` (hate-word rows, words separated by `|`).
// Invalid rows are rejected with their row ids.
std::vector<HumanEvalRecord> ingest_human_eval(
    const std::filesystem::path& path);

// Same, but requires the rating schema.
std::vector<HumanEvalRecord> likert_ingest(const std::filesystem::path& path);

// Per-annotator means, pairwise Pearson r over jointly rated comments, and
// the pooled (mean pairwise) r. Requires rating records from >= 2 annotators.
AgreementReport rating_agreement(const std::vector<HumanEvalRecord>& records);

}  // namespace detox::evaluation
