#include "detox/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "detox/errors.hpp"
#include "detox/rng.hpp"
#include "detox/text.hpp"

namespace detox::corpus {
namespace {

using detox::text::append_utf8;
using detox::text::decode_utf8;
using detox::text::is_punctuation;

constexpr char32_t kDanda = 0x0964;  // Devanagari danda

bool keep_punct(char32_t cp) {
  return cp == U'.' || cp == U',' || cp == U'?' || cp == kDanda;
}

bool starts_with(const std::string& s, const char* prefix) {
  return s.rfind(prefix, 0) == 0;
}

bool is_dropped_token(const std::string& word) {
  return starts_with(word, "www") || starts_with(word, "http://") ||
         starts_with(word, "https://") || starts_with(word, "@");
}

std::string strip_punctuation(const std::string& word) {
  std::string out;
  for (const char32_t cp : decode_utf8(word)) {
    if (is_punctuation(cp) && !keep_punct(cp)) continue;
    append_utf8(out, cp);
  }
  return out;
}

struct ColumnSpec {
  std::vector<std::string> id_aliases;
  std::vector<std::string> text_aliases;
  std::vector<std::string> label_aliases;
};

const ColumnSpec& column_spec(Format f) {
  static const ColumnSpec hasoc{{"text_id", "id"}, {"text"},
                                {"task_1", "task1", "label"}};
  static const ColumnSpec macd{{"id", "uid"}, {"text", "commentText", "comment"},
                               {"label"}};
  static const ColumnSpec bdshs{{"id"}, {"sentence", "text"}, {"hate", "label"}};
  switch (f) {
    case Format::Hasoc: return hasoc;
    case Format::Macd: return macd;
    case Format::Bdshs: return bdshs;
  }
  throw UsageError("unknown corpus format");
}

std::size_t find_column(const std::vector<std::string>& header,
                        const std::vector<std::string>& aliases,
                        const char* role) {
  for (const auto& alias : aliases) {
    const auto it = std::find(header.begin(), header.end(), alias);
    if (it != header.end())
      return static_cast<std::size_t>(it - header.begin());
  }
  std::string msg = "missing required column for '";
  msg += role;
  msg += "' (accepted names:";
  for (const auto& alias : aliases) {
    msg += ' ';
    msg += alias;
  }
  msg += ")";
  throw DataError(msg);
}

int normalize_label(Format f, const std::string& raw, const std::string& id) {
  std::string token = raw;
  // trim surrounding ASCII whitespace
  const auto b = token.find_first_not_of(" \t\r\n");
  const auto e = token.find_last_not_of(" \t\r\n");
  token = (b == std::string::npos) ? std::string() : token.substr(b, e - b + 1);
  switch (f) {
    case Format::Hasoc:
      if (token == "HOF") return 1;
      if (token == "NOT") return 0;
      break;
    case Format::Macd:
      // source convention: 0 = abusive, 1 = non-abusive
      if (token == "0") return 1;
      if (token == "1") return 0;
      break;
    case Format::Bdshs:
      if (token == "1") return 1;
      if (token == "0") return 0;
      break;
  }
  throw DataError("row '" + id + "': unmappable label token '" + raw + "'");
}

}  // namespace

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::All: return "all";
  }
  return "all";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  if (name == "all") return Split::All;
  throw UsageError("unknown split '" + name + "' (expected train/val/test/all)");
}

std::string format_name(Format f) {
  switch (f) {
    case Format::Hasoc: return "hasoc";
    case Format::Macd: return "macd";
    case Format::Bdshs: return "bdshs";
  }
  return "hasoc";
}

Format parse_format(const std::string& name) {
  if (name == "hasoc") return Format::Hasoc;
  if (name == "macd") return Format::Macd;
  if (name == "bdshs") return Format::Bdshs;
  throw UsageError("unknown corpus format '" + name +
                   "' (expected hasoc/macd/bdshs)");
}

std::string preprocess(const std::string& text) {
  // Newlines become spaces implicitly: split_words treats them as whitespace.
  std::vector<std::string> kept;
  for (const auto& word : detox::text::split_words(text)) {
    if (is_dropped_token(word)) continue;
    std::string stripped = strip_punctuation(word);
    if (stripped.empty()) continue;
    // Stripping punctuation can expose a www prefix (e.g. "/www.x" -> "wwwx"),
    // so the link rule is re-applied to keep the transform idempotent.
    if (starts_with(stripped, "www")) continue;
    kept.push_back(std::move(stripped));
  }
  return detox::text::join_words(kept);
}

Table read_delimited(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  // strip UTF-8 BOM
  if (content.size() >= 3 && content.compare(0, 3, "\xEF\xBB\xBF") == 0)
    content.erase(0, 3);

  // Sniff the delimiter from the header row: tab wins if present outside
  // quotes, else comma.
  char delim = ',';
  {
    bool quoted = false;
    for (const char c : content) {
      if (c == '"') quoted = !quoted;
      if (!quoted && c == '\n') break;
      if (!quoted && c == '\t') {
        delim = '\t';
        break;
      }
    }
  }

  Table table;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any_field = false;
  const auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    any_field = false;
  };
  const auto end_row = [&] {
    end_field();
    if (row.size() == 1 && row[0].empty()) {
      // blank line
      row.clear();
      return;
    }
    if (table.header.empty()) {
      table.header = std::move(row);
    } else {
      table.rows.push_back(std::move(row));
    }
    row.clear();
  };
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty() && !any_field) {
      quoted = true;
      any_field = true;
    } else if (c == delim) {
      end_field();
    } else if (c == '\n') {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      end_row();
    } else {
      field.push_back(c);
      any_field = true;
    }
  }
  if (!field.empty() || !row.empty()) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    end_row();
  }
  if (table.header.empty())
    throw DataError("empty file (no header row): " + path.string());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != table.header.size()) {
      throw DataError("row " + std::to_string(r + 2) + " in " + path.string() +
                      " has " + std::to_string(table.rows[r].size()) +
                      " fields, header has " +
                      std::to_string(table.header.size()));
    }
  }
  return table;
}

Corpus load_corpus(const std::filesystem::path& path, Format format,
                   Split split) {
  const Table table = read_delimited(path);
  const ColumnSpec& spec = column_spec(format);
  const std::size_t id_col = find_column(table.header, spec.id_aliases, "id");
  const std::size_t text_col =
      find_column(table.header, spec.text_aliases, "text");
  const std::size_t label_col =
      find_column(table.header, spec.label_aliases, "label");

  Corpus corpus;
  corpus.name = path.stem().string();
  corpus.split = split;
  corpus.comments.reserve(table.rows.size());
  std::unordered_set<std::string> seen_ids;
  seen_ids.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    LabeledComment c;
    c.id = row[id_col];
    if (!seen_ids.insert(c.id).second)
      throw DataError("duplicate id '" + c.id + "' in " + path.string());
    c.text = preprocess(row[text_col]);
    c.label = normalize_label(format, row[label_col], c.id);
    c.words = detox::text::split_words(c.text);
    corpus.comments.push_back(std::move(c));
  }
  return corpus;
}

ClassDistribution class_distribution(const Corpus& corpus) {
  ClassDistribution d;
  for (const auto& c : corpus.comments) {
    if (c.label == 1)
      ++d.hate;
    else
      ++d.non_hate;
  }
  return d;
}

std::vector<FoldSplit> make_folds(const Corpus& corpus, int k,
                                  std::uint64_t seed) {
  if (k < 2) throw UsageError("make_folds requires k >= 2");
  if (static_cast<std::size_t>(k) > corpus.size())
    throw UsageError("make_folds: k exceeds corpus size");

  // Per-class index pools, shuffled deterministically, then dealt
  // round-robin into folds with a cursor that continues across classes so
  // fold sizes stay within one of each other overall.
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < corpus.comments.size(); ++i)
    by_class[corpus.comments[i].label == 1 ? 1 : 0].push_back(i);

  detox::Rng rng(seed);
  std::vector<std::vector<std::size_t>> fold_members(
      static_cast<std::size_t>(k));
  std::size_t cursor = 0;
  for (auto& pool : by_class) {
    rng.shuffle(pool);
    for (const std::size_t idx : pool) {
      fold_members[cursor % static_cast<std::size_t>(k)].push_back(idx);
      ++cursor;
    }
  }

  std::vector<FoldSplit> folds;
  folds.reserve(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    FoldSplit fs;
    fs.fold_index = f;
    auto& members = fold_members[static_cast<std::size_t>(f)];
    std::sort(members.begin(), members.end());
    std::unordered_set<std::size_t> val_set(members.begin(), members.end());
    for (std::size_t i = 0; i < corpus.comments.size(); ++i) {
      if (val_set.count(i))
        fs.val_ids.push_back(corpus.comments[i].id);
      else
        fs.train_ids.push_back(corpus.comments[i].id);
    }
    folds.push_back(std::move(fs));
  }
  return folds;
}

void save_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  for (const auto& c : corpus.comments) {
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["text"] = c.text;
    j["label"] = c.label;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Corpus load_jsonl(const std::filesystem::path& path, const std::string& name,
                  Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  Corpus corpus;
  corpus.name = name;
  corpus.split = split;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + " in " +
                      path.string() + ": " + e.what());
    }
    if (!j.contains("id") || !j.contains("text") || !j.contains("label"))
      throw DataError("line " + std::to_string(line_no) + " in " +
                      path.string() + ": missing id/text/label");
    LabeledComment c;
    c.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    c.text = j["text"].get<std::string>();
    c.label = j["label"].get<int>();
    if (c.label != 0 && c.label != 1)
      throw DataError("row '" + c.id + "': label must be 0 or 1");
    if (!seen_ids.insert(c.id).second)
      throw DataError("duplicate id '" + c.id + "' in " + path.string());
    c.words = detox::text::split_words(c.text);
    corpus.comments.push_back(std::move(c));
  }
  return corpus;
}

}  // namespace detox::corpus
