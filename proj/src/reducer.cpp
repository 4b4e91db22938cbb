#include "detox/reducer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "detox/errors.hpp"
#include "detox/kernels.hpp"
#include "detox/text.hpp"

namespace detox::reducer {

using json = nlohmann::ordered_json;

void ReductionConfig::validate() const {
  ig.validate();
  if (!(mask_fraction > 0.0 && mask_fraction <= 1.0))
    throw UsageError("reducer: mask fraction must lie in (0, 1]");
  if (candidates < 1) throw UsageError("reducer: need at least one candidate");
}

MaskPlan plan_masks(const std::string& text,
                    const std::vector<attribution::TopWord>& hate_words,
                    double fraction, const encoder::TextEncoder& enc) {
  if (hate_words.empty())
    throw UsageError("plan_masks: no hate words to mask (stage is gated on "
                     "a hate prediction with positive attributions)");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw UsageError("plan_masks: mask fraction must lie in (0, 1]");

  MaskPlan plan;
  plan.source_text = corpus::preprocess(text);
  plan.words = text::split_words(plan.source_text);

  const auto t = enc.tokenize(plan.source_text);
  std::vector<int> counts(plan.words.size(), 0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const int w = t.word_index[i];
    if (w != encoder::kSpecialWord) ++counts[static_cast<std::size_t>(w)];
  }

  const auto m = static_cast<std::size_t>(std::ceil(
      fraction * static_cast<double>(hate_words.size())));
  std::set<int> chosen;
  for (std::size_t i = 0; i < m; ++i) {
    const int pos = hate_words[i].position;
    if (pos < 0 || static_cast<std::size_t>(pos) >= plan.words.size())
      throw UsageError("plan_masks: hate word position " +
                       std::to_string(pos) + " outside the text");
    if (counts[static_cast<std::size_t>(pos)] == 0)
      throw UsageError("plan_masks: hate word at position " +
                       std::to_string(pos) +
                       " was dropped by tokenization and cannot be masked");
    chosen.insert(pos);
  }

  std::vector<std::string> rendered;
  for (const int pos : chosen) {
    plan.masked_positions.push_back(pos);
    plan.subword_counts.push_back(counts[static_cast<std::size_t>(pos)]);
  }
  for (std::size_t i = 0; i < plan.words.size(); ++i) {
    if (chosen.count(static_cast<int>(i))) {
      for (int s = 0; s < counts[i]; ++s) rendered.push_back("[MASK]");
    } else {
      rendered.push_back(plan.words[i]);
    }
  }
  plan.masked_text = text::join_words(rendered);
  return plan;
}

std::vector<CandidateRewrite> generate_candidates(
    const MaskPlan& plan, const encoder::TextEncoder& mlm, int n) {
  if (n < 1) throw UsageError("generate_candidates: need n >= 1");
  if (plan.masked_positions.empty())
    throw UsageError("generate_candidates: the mask plan is empty");

  auto t = mlm.tokenize(plan.source_text);
  const std::set<int> masked(plan.masked_positions.begin(),
                             plan.masked_positions.end());
  std::vector<int> slot_words;  // word position of each mask, sequence order
  for (std::size_t i = 0; i < t.size(); ++i) {
    const int w = t.word_index[i];
    if (w == encoder::kSpecialWord || !masked.count(w)) continue;
    t.subword_ids[i] = mlm.config().mask_token_id;
    t.surface[i] = "[MASK]";
    slot_words.push_back(w);
  }
  if (slot_words.empty())
    throw UsageError("generate_candidates: no mask position survives "
                     "tokenization");

  const auto fills = mlm.mlm_predict(t, n);
  if (fills.size() != slot_words.size())
    throw StageError("generate_candidates: fill count does not match the "
                     "mask count");

  std::vector<CandidateRewrite> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int rank = 0; rank < n; ++rank) {
    CandidateRewrite c;
    std::map<int, std::string> assembled;  // word position -> fill text
    for (std::size_t slot = 0; slot < slot_words.size(); ++slot) {
      const auto& fill = fills[slot][static_cast<std::size_t>(rank)];
      c.fills.push_back({fill.token, rank});
      std::string frag = fill.token;
      if (frag.rfind("##", 0) == 0) frag = frag.substr(2);
      assembled[slot_words[slot]] += frag;
    }
    std::vector<std::string> words = plan.words;
    for (const auto& [pos, word] : assembled)
      words[static_cast<std::size_t>(pos)] = word;
    c.text = text::join_words(words);
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

// rows of the final contextual layer for non-marker tokens
std::vector<std::vector<double>> content_rows(
    const std::string& text, const encoder::TextEncoder& scorer) {
  const auto t = scorer.tokenize(text);
  const auto out = scorer.encode(scorer.embed(t));
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.word_index[i] == encoder::kSpecialWord) continue;
    rows.emplace_back(out.row(i), out.row(i) + out.dim);
  }
  return rows;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const double num = kernels::dot(a.data(), b.data(), a.size());
  const double na = kernels::dot(a.data(), a.data(), a.size());
  const double nb = kernels::dot(b.data(), b.data(), b.size());
  const double denom = std::sqrt(na * nb);
  return denom == 0.0 ? 0.0 : num / denom;
}

}  // namespace

BertScore bertscore(const std::string& candidate, const std::string& reference,
                    const encoder::TextEncoder& scorer) {
  const auto cand = content_rows(candidate, scorer);
  const auto ref = content_rows(reference, scorer);
  if (cand.empty() || ref.empty())
    throw UsageError("bertscore: both texts must be non-empty after "
                     "tokenization");

  double p = 0.0;
  for (const auto& c : cand) {
    double best = -1.0;
    for (const auto& r : ref) best = std::max(best, cosine(c, r));
    p += best;
  }
  p /= static_cast<double>(cand.size());

  double r = 0.0;
  for (const auto& rr : ref) {
    double best = -1.0;
    for (const auto& c : cand) best = std::max(best, cosine(rr, c));
    r += best;
  }
  r /= static_cast<double>(ref.size());

  BertScore s;
  s.precision = p;
  s.recall = r;
  // The harmonic mean is only meaningful for positive means: with mixed
  // signs it escapes [-1, 1] as p + r approaches zero. Non-positive
  // similarity on either side reads as "no useful overlap".
  s.f1 = (p > 0.0 && r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
  return s;
}

RewriteSelection select_rewrite(std::vector<CandidateRewrite> candidates) {
  if (candidates.empty())
    throw UsageError("select_rewrite: no candidates to choose from");

  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i].score.f1 > candidates[best].score.f1) best = i;

  std::size_t ties = 0;
  for (const auto& c : candidates)
    if (c.score.f1 == candidates[best].score.f1) ++ties;

  RewriteSelection sel;
  sel.chosen = candidates[best];
  sel.chosen_index = static_cast<int>(best);
  sel.selection_reason =
      ties > 1 ? "max-f1; tie resolved to lowest index" : "max-f1";
  sel.all_candidates = std::move(candidates);
  return sel;
}

ResidualHateReport residual_hate_check(
    const RewriteSelection& selection,
    const std::vector<attribution::TopWord>& hate_words,
    const detector::TrainedDetector& det) {
  ResidualHateReport report;
  report.prediction = det.classify(selection.chosen.text);
  report.still_hate = report.prediction.label == 1;
  if (!report.still_hate) return report;

  bool leading = false, adjacent = false;
  for (const auto& w : hate_words) {
    if (w.position == 0) leading = true;
    for (const auto& v : hate_words)
      if (std::abs(w.position - v.position) == 1) adjacent = true;
  }
  if (leading) report.tags.push_back("leading_hate_word");
  if (adjacent) report.tags.push_back("adjacent_hate_words");
  return report;
}

ReductionResult reduce_from_attribution(
    const detector::TrainedDetector& det, const encoder::TextEncoder& mlm,
    const attribution::AttributionResult& attr, const ReductionConfig& cfg,
    const encoder::TextEncoder* scorer) {
  cfg.validate();
  const encoder::TextEncoder& score_enc =
      scorer ? *scorer : det.text_encoder();

  ReductionResult r;
  r.attribution = attr;
  if (r.attribution.degenerate) {
    r.skip_reason = "degenerate-input";
    return r;
  }
  if (r.attribution.predicted_label != 1) {
    r.skip_reason = "not-hate";
    return r;
  }
  if (r.attribution.top_words.empty()) {
    r.skip_reason = "no-positive-words";
    return r;
  }

  const auto text = text::join_words(r.attribution.words);
  r.plan = plan_masks(text, r.attribution.top_words, cfg.mask_fraction, mlm);
  auto candidates = generate_candidates(r.plan, mlm, cfg.candidates);
  for (auto& c : candidates)
    c.score = bertscore(c.text, r.plan.source_text, score_enc);
  r.selection = select_rewrite(std::move(candidates));
  r.residual = residual_hate_check(r.selection, r.attribution.top_words, det);
  r.reduced = true;
  return r;
}

ReductionResult reduce_comment(const detector::TrainedDetector& det,
                               const encoder::TextEncoder& mlm,
                               const std::string& text,
                               const ReductionConfig& cfg,
                               const encoder::TextEncoder* scorer) {
  cfg.validate();
  return reduce_from_attribution(
      det, mlm, attribution::attribute(det, text, cfg.ig), cfg, scorer);
}

std::string to_json_record(const ReductionResult& r, const std::string& id) {
  json j;
  j["id"] = id;
  j["source"] = r.attribution.degenerate
                    ? ""
                    : (r.reduced ? r.plan.source_text
                                 : text::join_words(r.attribution.words));
  j["predicted_label"] = r.attribution.predicted_label;
  j["reduced"] = r.reduced;
  j["skip_reason"] = r.skip_reason;
  if (r.reduced) {
    j["plan"] = {{"masked_positions", r.plan.masked_positions},
                 {"subword_counts", r.plan.subword_counts},
                 {"masked_text", r.plan.masked_text}};
    json cands = json::array();
    for (const auto& c : r.selection.all_candidates) {
      json fills = json::array();
      for (const auto& f : c.fills)
        fills.push_back({{"token", f.token}, {"rank", f.rank}});
      cands.push_back({{"text", c.text},
                       {"fills", std::move(fills)},
                       {"precision", c.score.precision},
                       {"recall", c.score.recall},
                       {"f1", c.score.f1}});
    }
    j["candidates"] = std::move(cands);
    j["chosen_index"] = r.selection.chosen_index;
    j["chosen_text"] = r.selection.chosen.text;
    j["chosen_f1"] = r.selection.chosen.score.f1;
    j["selection_reason"] = r.selection.selection_reason;
    j["still_hate"] = r.residual.still_hate;
    j["residual_tags"] = r.residual.tags;
  }
  return j.dump();
}

}  // namespace detox::reducer
