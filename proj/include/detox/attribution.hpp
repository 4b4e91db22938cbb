#pragma once

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "detox/detector.hpp"
#include "detox/encoder.hpp"

namespace detox::attribution {

enum class Quadrature { LeftRiemann, Midpoint };
enum class TokenReduce { Sum, Mean, L2Norm };

Quadrature parse_quadrature(const std::string& name);
std::string quadrature_name(Quadrature q);
TokenReduce parse_token_reduce(const std::string& name);
std::string token_reduce_name(TokenReduce r);

struct IGConfig {
  int steps = 50;
  Quadrature quadrature = Quadrature::Midpoint;
  int k = 5;
  // How per-dimension attributions collapse to one scalar per subword.
  // Sum preserves the completeness axiom and is the default.
  TokenReduce token_reduce = TokenReduce::Sum;

  void validate() const;  // steps >= 1, k >= 1
};

struct TopWord {
  std::string word;
  int position = 0;  // index into the source word sequence
  double score = 0.0;
};

struct AttributionResult {
  encoder::TokenizedText tokens;
  std::vector<std::string> words;     // source words, by position
  bool degenerate = false;            // input empty after preprocessing
  int predicted_label = 0;
  int target_class = 0;
  std::array<double, 2> probs{0.5, 0.5};
  std::vector<std::vector<double>> attribution;  // [subword][dim]
  std::vector<double> subword_scores;            // one scalar per subword
  std::vector<double> word_scores;               // one scalar per word
  double special_score = 0.0;  // total attributed to start/separator markers
  double completeness_residual = 0.0;
  std::vector<TopWord> top_words;
  IGConfig config;
};

// Baseline: padding tokens everywhere, start/separator markers preserved at
// their original positions; same length as the input.
encoder::TokenizedText make_pad_baseline(const encoder::TokenizedText& t,
                                         const encoder::EncoderConfig& cfg);

// Scalar path function: returns F(e) and dF/de (length len*dim).
using PathFunction = std::function<std::pair<double, std::vector<double>>(
    const encoder::EmbeddingSequence&)>;

// Integrated gradients of an arbitrary scalar function along the straight
// path from `baseline` to `input`:
//   attribution[i][j] = (input - baseline)[i][j]
//                       * (1/n) * sum over quadrature alphas of dF/de[i][j].
// Errors: steps < 1 or shape mismatch between input and baseline.
std::vector<std::vector<double>> integrated_gradients_fn(
    const PathFunction& fn, const encoder::EmbeddingSequence& input,
    const encoder::EmbeddingSequence& baseline, const IGConfig& config);

// The detector path function: F = target-class probability of the encoder
// output under the detector head (post-softmax).
PathFunction detector_path_function(const detector::TrainedDetector& det,
                                    int target_class);

// Integrated gradients for tokenized text against its pad baseline.
std::vector<std::vector<double>> integrated_gradients(
    const detector::TrainedDetector& det, const encoder::TokenizedText& t,
    int target_class, const IGConfig& config);

// |sum of all attribution entries - (F(input) - F(baseline))|.
double completeness_residual(const detector::TrainedDetector& det,
                             const encoder::TokenizedText& t, int target_class,
                             const std::vector<std::vector<double>>& attribution);

// Collapses per-dimension attributions to one scalar per subword.
std::vector<double> reduce_tokens(
    const std::vector<std::vector<double>>& attribution, TokenReduce reduce);

// Sums subword scalars into word scores following the alignment; special
// markers are totalled separately and never assigned to words.
// Errors: score/alignment length mismatch.
struct WordAggregate {
  std::vector<double> word_scores;
  double special_score = 0.0;
};
WordAggregate aggregate_to_words(const std::vector<double>& subword_scores,
                                 const encoder::TokenizedText& t);

// Positive-score words, descending, ties broken by earlier position,
// truncated to k; punctuation-only words excluded. Errors when the
// prediction is not hate (the reduction path is gated on label 1).
std::vector<TopWord> top_k_hate_words(const std::vector<double>& word_scores,
                                      const std::vector<std::string>& words,
                                      int predicted_label, int k);

// Full pipeline for one text: classify, explain the predicted class, reduce,
// aggregate, and (for hate predictions) rank the top words.
AttributionResult attribute(const detector::TrainedDetector& det,
                            const std::string& text, const IGConfig& config);

// One JSON record (single line, no trailing newline) with the comment id,
// prediction, per-word scores, top words, residual, and config snapshot.
std::string to_json_record(const AttributionResult& r,
                           const std::string& comment_id);

}  // namespace detox::attribution
