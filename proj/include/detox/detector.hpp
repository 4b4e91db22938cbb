#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "detox/corpus.hpp"
#include "detox/encoder.hpp"
#include "detox/evaluation.hpp"

namespace detox::detector {

// Linear head mapping the pooled encoder vector to two class scores.
// Weight layout: w[j * 2 + c] is the contribution of pooled[j] to class c.
struct ClassifierHead {
  int dim = 0;
  std::vector<double> w;  // dim x 2, row-major over pooled components
  std::vector<double> b;  // 2
};

struct Prediction {
  std::array<double, 2> probs{0.5, 0.5};
  int label = 0;               // argmax, ties broken toward 0 (non-hate)
  bool degenerate = false;     // input empty after preprocessing
  std::vector<double> pooled;  // audit copy of the pooled vector (empty when
                               // degenerate)
};

struct TrainingConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double weight_decay = 0.01;
  double warmup_fraction = 0.10;
  int max_epochs = 10;
  int early_stop_patience = 3;
  int batch_size = 16;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;            // 1-based
  double train_loss = 0.0;  // mean cross-entropy per example
  double val_macro_f1 = 0.0;
  bool is_best = false;
};

// A trained classifier: encoder (fine-tuned when trainable), linear head,
// and the per-epoch training history. classify is read-only and
// concurrent-safe.
class TrainedDetector {
 public:
  TrainedDetector(std::unique_ptr<encoder::TextEncoder> enc,
                  ClassifierHead head, std::vector<EpochRecord> history,
                  TrainingConfig config);

  const encoder::TextEncoder& text_encoder() const { return *encoder_; }
  const ClassifierHead& head() const { return head_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  const TrainingConfig& config() const { return config_; }

  Prediction classify(const std::string& text) const;
  Prediction classify_tokens(const encoder::TokenizedText& t) const;

  // Class probability computed from an already-encoded output (pooled row).
  double class_prob(const encoder::EncoderOutput& out, int cls) const;
  // Cotangent of class_prob with respect to the contextual output
  // (len*dim, zero outside the pooled row). Composes softmax and head
  // jacobians: dp_c/dz_j = p_c * (delta_cj - p_j), then dz -> dpooled via w.
  std::vector<double> class_prob_cotangent(const encoder::EncoderOutput& out,
                                           int cls) const;

  void save(const std::filesystem::path& dir) const;
  static TrainedDetector load(const std::filesystem::path& dir);

 private:
  std::unique_ptr<encoder::TextEncoder> encoder_;
  ClassifierHead head_;
  std::vector<EpochRecord> history_;
  TrainingConfig config_;
};

// Fine-tunes the encoder (when it is trainable; external adapters stay
// frozen and only the head learns) with cross-entropy, AdamW-style updates,
// a linear warmup/decay schedule, and early stopping on validation macro-F1
// (best-epoch parameters are returned). Deterministic under a fixed seed.
// Errors: a split missing a class, or a non-finite loss.
TrainedDetector train(std::unique_ptr<encoder::TextEncoder> enc,
                      const corpus::Corpus& train_split,
                      const corpus::Corpus& val_split,
                      const TrainingConfig& config);

struct CrossValidationReport {
  std::vector<evaluation::MetricsReport> folds;
  evaluation::FoldSummary summary;
};

// Stratified k-fold cross-validation: each fold trains a fresh copy of
// `base` on the fold's train ids and is scored on its validation ids.
CrossValidationReport cross_validate(const encoder::TextEncoder& base,
                                     const corpus::Corpus& corpus, int k,
                                     const TrainingConfig& config);

}  // namespace detox::detector
