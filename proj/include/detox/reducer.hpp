#pragma once

#include <string>
#include <vector>

#include "detox/attribution.hpp"
#include "detox/detector.hpp"
#include "detox/encoder.hpp"

namespace detox::reducer {

// Which words of a comment get masked before infilling.
struct MaskPlan {
  std::string source_text;              // preprocessed source
  std::vector<std::string> words;       // source words by position
  std::vector<int> masked_positions;    // ascending word positions
  std::vector<int> subword_counts;      // aligned with masked_positions
  std::string masked_text;              // each masked word as one "[MASK]"
                                        // marker per subword
};

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// One vocabulary fill for one mask marker. Rank 0 is the most probable
// fill; every fill of a candidate shares the candidate's rank.
struct FillChoice {
  std::string token;  // raw vocabulary item ("##" continuations included)
  int rank = 0;
};

struct CandidateRewrite {
  std::string text;                // no mask markers remain
  std::vector<FillChoice> fills;   // one per mask marker, sequence order
  BertScore score;                 // against the source text
};

struct RewriteSelection {
  CandidateRewrite chosen;
  int chosen_index = 0;
  std::vector<CandidateRewrite> all_candidates;  // audit copy
  std::string selection_reason;
};

struct ResidualHateReport {
  detector::Prediction prediction;  // of the chosen rewrite
  bool still_hate = false;
  std::vector<std::string> tags;    // failure taxonomy, set when still_hate
};

struct ReductionConfig {
  attribution::IGConfig ig;
  double mask_fraction = 0.5;  // share of ranked hate words to mask
  int candidates = 10;

  void validate() const;  // fraction in (0, 1], candidates >= 1
};

// The full record for one comment. `reduced` is false when the stage was
// skipped (empty input, non-hate prediction, or no positively attributed
// words); `skip_reason` names why.
struct ReductionResult {
  attribution::AttributionResult attribution;
  bool reduced = false;
  std::string skip_reason;
  MaskPlan plan;
  RewriteSelection selection;
  ResidualHateReport residual;
};

// Chooses ceil(fraction * |hate_words|) of the highest-ranked hate words and
// renders the masked text. `hate_words` must be rank-ordered
// (highest-attributed first) as produced by the attribution stage; subword
// counts come from `enc`'s tokenizer so fill arity stays well defined.
// Errors: empty hate_words, fraction outside (0, 1], a position outside the
// text, or a hate word dropped entirely by tokenization.
MaskPlan plan_masks(const std::string& text,
                    const std::vector<attribution::TopWord>& hate_words,
                    double fraction, const encoder::TextEncoder& enc);

// Rank-aligned candidate assembly: candidate i fills every mask marker with
// that marker's rank-i prediction from `mlm`'s masked-language head, then
// detokenizes back to plain text. Exactly n candidates; scores are left for
// the caller. Errors: n < 1 or n beyond the usable vocabulary.
std::vector<CandidateRewrite> generate_candidates(
    const MaskPlan& plan, const encoder::TextEncoder& mlm, int n);

// Greedy-matching similarity over the scorer's final contextual layer,
// special markers excluded: precision = mean over candidate tokens of the
// best cosine against any reference token, recall the transpose, f1 the
// harmonic mean when both are positive and 0 otherwise (which covers
// p + r = 0 and keeps every component inside [-1, 1]). No frequency
// weighting, no rescaling. Errors: either text empty after tokenization.
BertScore bertscore(const std::string& candidate, const std::string& reference,
                    const encoder::TextEncoder& scorer);

// Argmax over f1; ties resolve to the lowest candidate index.
// Errors: empty candidate list.
RewriteSelection select_rewrite(std::vector<CandidateRewrite> candidates);

// Classifies the chosen rewrite. When the label is still hate, attaches the
// failure-pattern tags the source exhibited: "leading_hate_word" (a hate
// word opened the comment) and "adjacent_hate_words" (two hate words were
// neighbors).
ResidualHateReport residual_hate_check(
    const RewriteSelection& selection,
    const std::vector<attribution::TopWord>& hate_words,
    const detector::TrainedDetector& det);

// The reduction stage for one already-attributed comment: gate on a hate
// prediction with positively attributed words, mask, fill with `mlm`, score
// each candidate against the source with `scorer` (the detector's own
// encoder when null), select, and run the residual check. The source text is
// recovered from the attribution's word sequence, so a dumped attribution
// record round-trips to the same reduction as an in-memory one.
ReductionResult reduce_from_attribution(
    const detector::TrainedDetector& det, const encoder::TextEncoder& mlm,
    const attribution::AttributionResult& attr, const ReductionConfig& cfg,
    const encoder::TextEncoder* scorer = nullptr);

// One comment end to end: attribute, then reduce_from_attribution.
ReductionResult reduce_comment(const detector::TrainedDetector& det,
                               const encoder::TextEncoder& mlm,
                               const std::string& text,
                               const ReductionConfig& cfg,
                               const encoder::TextEncoder* scorer = nullptr);

// One JSON record (single line) with the id, source, mask plan, every
// candidate with its score triple, the chosen rewrite, and the residual
// flag and tags.
std::string to_json_record(const ReductionResult& r, const std::string& id);

}  // namespace detox::reducer
