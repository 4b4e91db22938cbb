#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace detox::corpus {

// One preprocessed comment with a normalized binary label (1 = hate).
struct LabeledComment {
  std::string id;
  std::string text;   // preprocessed; join(words) == text
  int label = 0;      // 1 = hate, 0 = non-hate
  std::vector<std::string> words;
};

enum class Split { Train, Val, Test, All };

std::string split_name(Split s);
Split parse_split(const std::string& name);

struct Corpus {
  std::string name;
  Split split = Split::All;
  std::vector<LabeledComment> comments;

  std::size_t size() const { return comments.size(); }
};

struct ClassDistribution {
  std::size_t hate = 0;
  std::size_t non_hate = 0;
};

struct FoldSplit {
  int fold_index = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

enum class Format { Hasoc, Macd, Bdshs };

std::string format_name(Format f);
Format parse_format(const std::string& name);

// Normalizes raw text: strips links/mentions, removes punctuation except
// {. , ? and the Devanagari danda}, collapses whitespace. Idempotent.
std::string preprocess(const std::string& text);

// Loads a delimiter-separated file (header row required) and produces a
// corpus of preprocessed, label-normalized comments. Column names are mapped
// through a per-format alias table. Rows whose text is empty after
// preprocessing are kept (the comment text is empty; downstream flags them).
Corpus load_corpus(const std::filesystem::path& path, Format format,
                   Split split);

ClassDistribution class_distribution(const Corpus& corpus);

// Stratified k-fold assignment, deterministic for a fixed seed. Validation
// sets partition the corpus; sizes differ by at most one; per-fold class
// counts are within one of the proportional share.
std::vector<FoldSplit> make_folds(const Corpus& corpus, int k,
                                  std::uint64_t seed);

// Snapshot IO: one JSON record per line with fields id, text, label.
void save_jsonl(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_jsonl(const std::filesystem::path& path, const std::string& name,
                  Split split);

// Parsed delimiter-separated content: header plus rows of equal arity.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Reads a comma- or tab-separated file with quoted-field support. The
// delimiter is sniffed from the header row; a UTF-8 BOM is stripped.
Table read_delimited(const std::filesystem::path& path);

}  // namespace detox::corpus
