#include "detox/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "detox/errors.hpp"
#include "detox/rng.hpp"
#include "detox/text.hpp"

namespace detox::synth {

using json = nlohmann::ordered_json;

void SynthConfig::validate() const {
  if (size < 1) throw UsageError("synth: size must be >= 1");
  if (!(trigger_rate >= 0.0 && trigger_rate <= 1.0))
    throw UsageError("synth: trigger rate must lie in [0, 1]");
  if (min_words < 1 || max_words < min_words)
    throw UsageError("synth: need 1 <= min words <= max words");
}

const std::vector<std::string>& safe_lexicon() {
  static const std::vector<std::string> words = {
      "paani",  "roti",    "ghar",    "acha",   "subah",   "dost",
      "kitab",  "sadak",   "phool",   "nadi",   "pahad",   "baadal",
      "chand",  "suraj",   "hawa",    "mitti",  "patta",   "darya",
      "safar",  "raasta",  "khidki",  "darwaza", "bagicha", "mausam",
      "savera", "tara",    "jheel",   "megha"};
  return words;
}

const std::vector<std::string>& trigger_lexicon() {
  static const std::vector<std::string> words = {
      "zorvak", "braxil", "grundel", "vexmor",
      "klazik", "drubon", "smarkel", "trivok"};
  return words;
}

namespace {

template <typename T>
T pick(const std::vector<T>& pool, Rng& rng) {
  return pool[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
}

std::vector<std::size_t> distinct_indices(std::size_t n, std::size_t count,
                                          Rng& rng) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  rng.shuffle(all);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

SynthCorpus generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  const auto n_hate = static_cast<std::size_t>(
      std::llround(cfg.trigger_rate * static_cast<double>(cfg.size)));
  const auto total = static_cast<std::size_t>(cfg.size);

  struct Draft {
    std::vector<std::string> words;
    std::vector<std::string> triggers;
    std::vector<int> positions;
    int label = 0;
  };
  std::vector<Draft> drafts;
  drafts.reserve(total);

  for (std::size_t i = 0; i < total; ++i) {
    Draft d;
    d.label = i < n_hate ? 1 : 0;
    const auto len = static_cast<std::size_t>(
        rng.uniform_int(cfg.min_words, cfg.max_words));
    for (std::size_t w = 0; w < len; ++w)
      d.words.push_back(pick(safe_lexicon(), rng));

    if (d.label == 1) {
      // Mostly two or three triggers per hate comment: the top-k
      // identification check compares the attribution list against the
      // planted set, and near-singleton sets make the Jaccard index
      // insensitive to how well the attributions actually rank the
      // triggers. A couple of planted words per comment keeps the
      // comparison informative while masking half of them still
      // neutralizes the comment.
      const double u = rng.uniform();
      std::size_t count = u < 0.15 ? 1 : (u < 0.50 ? 2 : 3);
      count = std::min(count, len);

      const auto slots = distinct_indices(len, count, rng);
      std::vector<std::string> lex = trigger_lexicon();
      rng.shuffle(lex);
      for (std::size_t t = 0; t < count; ++t) {
        d.words[slots[t]] = lex[t];
        d.triggers.push_back(lex[t]);
        d.positions.push_back(static_cast<int>(slots[t]));
      }
    }
    drafts.push_back(std::move(d));
  }
  rng.shuffle(drafts);

  SynthCorpus sc;
  sc.corpus.name = "synth";
  sc.corpus.split = corpus::Split::All;
  char id[32];
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    std::snprintf(id, sizeof id, "synth-%06zu", i);
    corpus::LabeledComment c;
    c.id = id;
    c.text = text::join_words(drafts[i].words);
    c.label = drafts[i].label;
    c.words = drafts[i].words;

    GroundTruth gt;
    gt.comment_id = c.id;
    gt.hate_words = drafts[i].triggers;
    gt.positions = drafts[i].positions;

    sc.corpus.comments.push_back(std::move(c));
    sc.truth.push_back(std::move(gt));
  }
  return sc;
}

void write(const SynthCorpus& sc, const std::filesystem::path& corpus_file,
           const std::filesystem::path& truth_file) {
  corpus::save_jsonl(sc.corpus, corpus_file);

  std::ofstream out(truth_file);
  if (!out)
    throw DataError("cannot write ground truth file " + truth_file.string());
  for (const auto& gt : sc.truth) {
    json j;
    j["id"] = gt.comment_id;
    j["hate_words"] = gt.hate_words;
    j["positions"] = gt.positions;
    out << j.dump() << '\n';
  }
  if (!out.flush())
    throw DataError("short write to ground truth file " +
                    truth_file.string());
}

std::vector<GroundTruth> read_truth(const std::filesystem::path& truth_file) {
  std::ifstream in(truth_file);
  if (!in)
    throw DataError("cannot read ground truth file " + truth_file.string());
  std::vector<GroundTruth> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      GroundTruth gt;
      gt.comment_id = j.at("id").get<std::string>();
      gt.hate_words = j.at("hate_words").get<std::vector<std::string>>();
      gt.positions = j.at("positions").get<std::vector<int>>();
      out.push_back(std::move(gt));
    } catch (const json::exception& e) {
      throw DataError("ground truth file " + truth_file.string() + " line " +
                      std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace detox::synth
