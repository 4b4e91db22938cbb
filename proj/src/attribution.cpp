#include "detox/attribution.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "detox/errors.hpp"
#include "detox/text.hpp"

namespace detox::attribution {

using json = nlohmann::ordered_json;

Quadrature parse_quadrature(const std::string& name) {
  if (name == "midpoint") return Quadrature::Midpoint;
  if (name == "left-riemann") return Quadrature::LeftRiemann;
  throw UsageError("unknown quadrature `" + name +
                   "` (expected midpoint or left-riemann)");
}

std::string quadrature_name(Quadrature q) {
  return q == Quadrature::Midpoint ? "midpoint" : "left-riemann";
}

TokenReduce parse_token_reduce(const std::string& name) {
  if (name == "sum") return TokenReduce::Sum;
  if (name == "mean") return TokenReduce::Mean;
  if (name == "l2norm") return TokenReduce::L2Norm;
  throw UsageError("unknown token reduce `" + name +
                   "` (expected sum, mean, or l2norm)");
}

std::string token_reduce_name(TokenReduce r) {
  switch (r) {
    case TokenReduce::Sum: return "sum";
    case TokenReduce::Mean: return "mean";
    case TokenReduce::L2Norm: return "l2norm";
  }
  return "sum";
}

void IGConfig::validate() const {
  if (steps < 1) throw UsageError("attribution: steps must be >= 1");
  if (k < 1) throw UsageError("attribution: k must be >= 1");
}

encoder::TokenizedText make_pad_baseline(const encoder::TokenizedText& t,
                                         const encoder::EncoderConfig& cfg) {
  encoder::TokenizedText b = t;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const int id = b.subword_ids[i];
    if (id == encoder::kClsId || id == encoder::kSepId) continue;
    b.subword_ids[i] = cfg.pad_token_id;
    b.surface[i] = "[PAD]";
  }
  return b;
}

std::vector<std::vector<double>> integrated_gradients_fn(
    const PathFunction& fn, const encoder::EmbeddingSequence& input,
    const encoder::EmbeddingSequence& baseline, const IGConfig& config) {
  config.validate();
  if (input.length != baseline.length || input.dim != baseline.dim)
    throw UsageError(
        "attribution: baseline shape (" + std::to_string(baseline.length) +
        "x" + std::to_string(baseline.dim) + ") does not match input (" +
        std::to_string(input.length) + "x" + std::to_string(input.dim) + ")");

  const std::size_t total = input.length * input.dim;
  std::vector<double> delta(total);
  for (std::size_t i = 0; i < total; ++i)
    delta[i] = input.data[i] - baseline.data[i];

  std::vector<double> grad_sum(total, 0.0);
  encoder::EmbeddingSequence point(input.length, input.dim);
  const auto n = static_cast<double>(config.steps);
  for (int s = 0; s < config.steps; ++s) {
    const double alpha = config.quadrature == Quadrature::Midpoint
                             ? (static_cast<double>(s) + 0.5) / n
                             : static_cast<double>(s) / n;
    for (std::size_t i = 0; i < total; ++i)
      point.data[i] = baseline.data[i] + alpha * delta[i];
    const auto [value, grad] = fn(point);
    (void)value;
    if (grad.size() != total)
      throw UsageError("attribution: path function returned a gradient of "
                       "the wrong size");
    for (std::size_t i = 0; i < total; ++i) grad_sum[i] += grad[i];
  }

  std::vector<std::vector<double>> attribution(
      input.length, std::vector<double>(input.dim, 0.0));
  for (std::size_t i = 0; i < input.length; ++i)
    for (std::size_t j = 0; j < input.dim; ++j) {
      const std::size_t idx = i * input.dim + j;
      attribution[i][j] = delta[idx] * grad_sum[idx] / n;
    }
  return attribution;
}

PathFunction detector_path_function(const detector::TrainedDetector& det,
                                    int target_class) {
  if (target_class != 0 && target_class != 1)
    throw UsageError("attribution: target class must be 0 or 1");
  return [&det, target_class](const encoder::EmbeddingSequence& e) {
    double value = 0.0;
    const auto [out, de] = det.text_encoder().encode_with_vjp(
        e, [&](const encoder::EncoderOutput& o) {
          value = det.class_prob(o, target_class);
          return det.class_prob_cotangent(o, target_class);
        });
    (void)out;
    return std::make_pair(value, de.data);
  };
}

std::vector<std::vector<double>> integrated_gradients(
    const detector::TrainedDetector& det, const encoder::TokenizedText& t,
    int target_class, const IGConfig& config) {
  const auto& enc = det.text_encoder();
  const auto input = enc.embed(t);
  const auto baseline = enc.embed(make_pad_baseline(t, enc.config()));
  return integrated_gradients_fn(detector_path_function(det, target_class),
                                 input, baseline, config);
}

double completeness_residual(
    const detector::TrainedDetector& det, const encoder::TokenizedText& t,
    int target_class, const std::vector<std::vector<double>>& attribution) {
  const auto& enc = det.text_encoder();
  const auto f_input =
      det.class_prob(enc.encode(enc.embed(t)), target_class);
  const auto baseline = make_pad_baseline(t, enc.config());
  const auto f_baseline =
      det.class_prob(enc.encode(enc.embed(baseline)), target_class);
  double total = 0.0;
  for (const auto& row : attribution)
    for (const double a : row) total += a;
  return std::abs(total - (f_input - f_baseline));
}

std::vector<double> reduce_tokens(
    const std::vector<std::vector<double>>& attribution, TokenReduce reduce) {
  std::vector<double> scores;
  scores.reserve(attribution.size());
  for (const auto& row : attribution) {
    double s = 0.0;
    switch (reduce) {
      case TokenReduce::Sum:
        for (const double a : row) s += a;
        break;
      case TokenReduce::Mean:
        for (const double a : row) s += a;
        if (!row.empty()) s /= static_cast<double>(row.size());
        break;
      case TokenReduce::L2Norm:
        for (const double a : row) s += a * a;
        s = std::sqrt(s);
        break;
    }
    scores.push_back(s);
  }
  return scores;
}

WordAggregate aggregate_to_words(const std::vector<double>& subword_scores,
                                 const encoder::TokenizedText& t) {
  if (subword_scores.size() != t.size())
    throw UsageError("attribution: " + std::to_string(subword_scores.size()) +
                     " subword scores do not align with " +
                     std::to_string(t.size()) + " subwords");
  int max_word = -1;
  for (const int w : t.word_index) max_word = std::max(max_word, w);

  WordAggregate agg;
  agg.word_scores.assign(static_cast<std::size_t>(max_word + 1), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const int w = t.word_index[i];
    if (w == encoder::kSpecialWord)
      agg.special_score += subword_scores[i];
    else
      agg.word_scores[static_cast<std::size_t>(w)] += subword_scores[i];
  }
  return agg;
}

namespace {

bool punctuation_only(const std::string& word) {
  const auto cps = text::decode_utf8(word);
  if (cps.empty()) return false;
  return std::all_of(cps.begin(), cps.end(),
                     [](char32_t c) { return text::is_punctuation(c); });
}

}  // namespace

std::vector<TopWord> top_k_hate_words(const std::vector<double>& word_scores,
                                      const std::vector<std::string>& words,
                                      int predicted_label, int k) {
  if (predicted_label != 1)
    throw UsageError(
        "top_k_hate_words: hate-word selection requires a hate prediction "
        "(label 1), got label " + std::to_string(predicted_label));
  if (k < 1) throw UsageError("top_k_hate_words: k must be >= 1");
  if (word_scores.size() != words.size())
    throw UsageError("top_k_hate_words: score/word length mismatch");

  std::vector<TopWord> ranked;
  for (std::size_t i = 0; i < word_scores.size(); ++i) {
    if (word_scores[i] <= 0.0) continue;
    if (punctuation_only(words[i])) continue;
    ranked.push_back({words[i], static_cast<int>(i), word_scores[i]});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const TopWord& a, const TopWord& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.position < b.position;
                   });
  if (ranked.size() > static_cast<std::size_t>(k))
    ranked.resize(static_cast<std::size_t>(k));
  return ranked;
}

AttributionResult attribute(const detector::TrainedDetector& det,
                            const std::string& text, const IGConfig& config) {
  config.validate();
  AttributionResult r;
  r.config = config;

  const std::string clean = corpus::preprocess(text);
  r.words = text::split_words(clean);
  if (r.words.empty()) {
    r.degenerate = true;  // label 0; nothing to attribute
    return r;
  }

  r.tokens = det.text_encoder().tokenize(clean);
  const auto pred = det.classify_tokens(r.tokens);
  r.predicted_label = pred.label;
  r.target_class = pred.label;
  r.probs = pred.probs;

  r.attribution =
      integrated_gradients(det, r.tokens, r.target_class, config);
  r.completeness_residual =
      completeness_residual(det, r.tokens, r.target_class, r.attribution);
  r.subword_scores = reduce_tokens(r.attribution, config.token_reduce);
  auto agg = aggregate_to_words(r.subword_scores, r.tokens);
  // truncation can drop trailing words; missing words carry zero attribution
  agg.word_scores.resize(r.words.size(), 0.0);
  r.word_scores = std::move(agg.word_scores);
  r.special_score = agg.special_score;
  if (r.predicted_label == 1)
    r.top_words = top_k_hate_words(r.word_scores, r.words, r.predicted_label,
                                   config.k);
  return r;
}

std::string to_json_record(const AttributionResult& r,
                           const std::string& comment_id) {
  json j;
  j["id"] = comment_id;
  j["degenerate"] = r.degenerate;
  j["predicted_label"] = r.predicted_label;
  j["target_class"] = r.target_class;
  j["probs"] = {r.probs[0], r.probs[1]};
  json words = json::array();
  for (std::size_t i = 0; i < r.words.size(); ++i) {
    json w;
    w["word"] = r.words[i];
    w["position"] = i;
    w["score"] = i < r.word_scores.size() ? r.word_scores[i] : 0.0;
    words.push_back(std::move(w));
  }
  j["word_scores"] = std::move(words);
  j["special_score"] = r.special_score;
  json top = json::array();
  for (const auto& t : r.top_words) {
    json w;
    w["word"] = t.word;
    w["position"] = t.position;
    w["score"] = t.score;
    top.push_back(std::move(w));
  }
  j["top_words"] = std::move(top);
  j["completeness_residual"] = r.completeness_residual;
  j["config"] = {{"steps", r.config.steps},
                 {"quadrature", quadrature_name(r.config.quadrature)},
                 {"k", r.config.k},
                 {"token_reduce", token_reduce_name(r.config.token_reduce)}};
  return j.dump();
}

}  // namespace detox::attribution
