#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "detox/corpus.hpp"

namespace detox::synth {

// Generator for the synthetic trigger-lexicon corpus the acceptance suite
// runs on. Hate comments carry one to three planted trigger words at random
// positions inside otherwise benign template text; benign comments never
// contain a trigger. The ground truth records exactly which words were
// planted where, giving the attribution stage an exact oracle.
struct SynthConfig {
  int size = 2000;
  double trigger_rate = 0.5;  // share of comments that are hate
  std::uint64_t seed = 13;
  int min_words = 6;
  int max_words = 12;

  void validate() const;
};

struct GroundTruth {
  std::string comment_id;
  std::vector<std::string> hate_words;  // distinct planted triggers
  std::vector<int> positions;           // their word positions, ascending
};

struct SynthCorpus {
  corpus::Corpus corpus;
  std::vector<GroundTruth> truth;  // one entry per comment, same order
};

// The benign template vocabulary (28 words) and the planted trigger
// lexicon (8 invented words). Disjoint; triggers are rare enough in the
// generated text that masked-language fills prefer template words.
const std::vector<std::string>& safe_lexicon();
const std::vector<std::string>& trigger_lexicon();

// Deterministic generation: round(size * trigger_rate) hate comments, the
// per-comment trigger count drawn as 1 (p = 0.60), 2 (p = 0.25), or
// 3 (p = 0.15), capped by the comment length; comment order shuffled.
SynthCorpus generate(const SynthConfig& cfg);

// Corpus snapshot (id/text/label JSONL) plus the ground-truth sidecar
// (id/hate_words/positions JSONL).
void write(const SynthCorpus& sc, const std::filesystem::path& corpus_file,
           const std::filesystem::path& truth_file);

std::vector<GroundTruth> read_truth(const std::filesystem::path& truth_file);

}  // namespace detox::synth
