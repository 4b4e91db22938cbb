#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_map>

#include "detox/encoder.hpp"
#include "detox/errors.hpp"
#include "detox/text.hpp"

namespace detox::encoder {
namespace {

const char* kSpecialNames[kNumSpecials] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                           "[MASK]"};

constexpr std::size_t kMaxPieceCps = 12;

bool is_special_name(const std::string& t) {
  for (const char* s : kSpecialNames)
    if (t == s) return true;
  return false;
}

// Byte offsets of each codepoint boundary in a UTF-8 word (offsets.size() ==
// cps + 1, last entry == word.size()).
std::vector<std::size_t> cp_offsets(const std::string& word) {
  std::vector<std::size_t> offs;
  offs.push_back(0);
  std::size_t i = 0;
  while (i < word.size()) {
    const auto b = static_cast<unsigned char>(word[i]);
    std::size_t step = 1;
    if ((b & 0xE0) == 0xC0)
      step = 2;
    else if ((b & 0xF0) == 0xE0)
      step = 3;
    else if ((b & 0xF8) == 0xF0)
      step = 4;
    if (i + step > word.size()) step = 1;
    i += step;
    offs.push_back(i);
  }
  return offs;
}

}  // namespace

void Tokenizer::rebuild_index() {
  index_.clear();
  max_piece_cps_ = 1;
  for (std::size_t id = kNumSpecials; id < tokens_.size(); ++id) {
    const std::string& t = tokens_[id];
    index_.emplace(t, static_cast<int>(id));
    const bool cont = t.rfind("##", 0) == 0;
    const std::string body = cont ? t.substr(2) : t;
    max_piece_cps_ = std::max(max_piece_cps_, cp_offsets(body).size() - 1);
  }
}

Tokenizer Tokenizer::build(const corpus::Corpus& corpus, int vocab_size) {
  if (vocab_size < kNumSpecials + 1)
    throw UsageError("tokenizer vocab_size too small");

  // word frequencies
  std::map<std::string, std::uint64_t> word_freq;
  for (const auto& c : corpus.comments)
    for (const auto& w : c.words) ++word_freq[w];

  // alphabet: every observed codepoint, in plain and continuation form
  std::map<std::string, bool> alphabet;  // utf-8 of one cp -> seen
  for (const auto& [w, f] : word_freq) {
    (void)f;
    const auto offs = cp_offsets(w);
    for (std::size_t i = 0; i + 1 < offs.size(); ++i)
      alphabet[w.substr(offs[i], offs[i + 1] - offs[i])] = true;
  }

  // candidate pieces: substrings of 2..kMaxPieceCps codepoints, word-initial
  // in plain form, word-internal in continuation form, weighted by word
  // frequency
  std::map<std::string, std::uint64_t> cand;
  for (const auto& [w, f] : word_freq) {
    const auto offs = cp_offsets(w);
    const std::size_t n = offs.size() - 1;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t max_len = std::min(kMaxPieceCps, n - i);
      for (std::size_t l = 2; l <= max_len; ++l) {
        const std::string piece = w.substr(offs[i], offs[i + l] - offs[i]);
        if (i == 0)
          cand[piece] += f;
        else
          cand["##" + piece] += f;
      }
    }
  }
  // strip candidates that collide with specials or single-cp entries
  for (const auto& [cp, seen] : alphabet) {
    (void)seen;
    cand.erase(cp);
    cand.erase("##" + cp);
  }
  for (const char* s : kSpecialNames) cand.erase(s);

  Tokenizer tok;
  tok.tokens_.reserve(static_cast<std::size_t>(vocab_size));
  for (const char* s : kSpecialNames) tok.tokens_.push_back(s);
  for (const auto& [cp, seen] : alphabet) {
    (void)seen;
    if (tok.tokens_.size() < static_cast<std::size_t>(vocab_size))
      tok.tokens_.push_back(cp);
  }
  for (const auto& [cp, seen] : alphabet) {
    (void)seen;
    if (tok.tokens_.size() < static_cast<std::size_t>(vocab_size))
      tok.tokens_.push_back("##" + cp);
  }

  // order remaining candidates by frequency desc, token asc
  std::vector<std::pair<std::string, std::uint64_t>> ranked(cand.begin(),
                                                            cand.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [piece, f] : ranked) {
    (void)f;
    if (tok.tokens_.size() >= static_cast<std::size_t>(vocab_size)) break;
    tok.tokens_.push_back(piece);
  }
  tok.rebuild_index();
  return tok;
}

void Tokenizer::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary: " + file.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw DataError("vocabulary write failed: " + file.string());
}

Tokenizer Tokenizer::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary: " + file.string());
  Tokenizer tok;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tok.tokens_.push_back(line);
  }
  if (tok.tokens_.size() < kNumSpecials)
    throw DataError("vocabulary too small: " + file.string());
  for (int i = 0; i < kNumSpecials; ++i)
    if (tok.tokens_[static_cast<std::size_t>(i)] != kSpecialNames[i])
      throw DataError("vocabulary is missing special token " +
                      std::string(kSpecialNames[i]) + " at line " +
                      std::to_string(i + 1));
  tok.rebuild_index();
  return tok;
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || id >= vocab_size())
    throw UsageError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

int Tokenizer::id_of(const std::string& token) const {
  if (is_special_name(token)) {
    for (int i = 0; i < kNumSpecials; ++i)
      if (token == kSpecialNames[i]) return i;
  }
  const auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

TokenizedText Tokenizer::encode(const std::string& text,
                                int max_length) const {
  if (max_length < 2) throw UsageError("max_length must be at least 2");
  const auto words = detox::text::split_words(text);

  TokenizedText out;
  out.subword_ids.push_back(kClsId);
  out.word_index.push_back(kSpecialWord);
  out.surface.push_back(kSpecialNames[kClsId]);

  const std::size_t budget = static_cast<std::size_t>(max_length) - 1;
  for (std::size_t w = 0; w < words.size(); ++w) {
    const std::string& word = words[w];
    // greedy longest-match segmentation of one word
    std::vector<int> ids;
    std::vector<std::string> pieces;
    const auto offs = cp_offsets(word);
    const std::size_t n = offs.size() - 1;
    std::size_t i = 0;
    bool failed = false;
    while (i < n) {
      const std::size_t max_len = std::min(max_piece_cps_, n - i);
      int found = -1;
      std::size_t found_len = 0;
      for (std::size_t l = max_len; l >= 1; --l) {
        std::string piece = word.substr(offs[i], offs[i + l] - offs[i]);
        if (i > 0) piece = "##" + piece;
        const auto it = index_.find(piece);
        if (it != index_.end()) {
          found = it->second;
          found_len = l;
          pieces.push_back(std::move(piece));
          break;
        }
      }
      if (found < 0) {
        failed = true;
        break;
      }
      ids.push_back(found);
      i += found_len;
    }
    if (failed) {
      ids.assign(1, kUnkId);
      pieces.assign(1, word);  // surface keeps the original fragment
    }
    // whole words only: if this word's pieces exceed the budget, stop
    if (out.subword_ids.size() + ids.size() > budget) {
      out.truncated = true;
      break;
    }
    for (std::size_t p = 0; p < ids.size(); ++p) {
      out.subword_ids.push_back(ids[p]);
      out.word_index.push_back(static_cast<int>(w));
      out.surface.push_back(pieces[p]);
    }
  }

  out.subword_ids.push_back(kSepId);
  out.word_index.push_back(kSpecialWord);
  out.surface.push_back(kSpecialNames[kSepId]);
  return out;
}

std::vector<std::string> Tokenizer::detokenize_words(
    const TokenizedText& t) const {
  std::vector<std::string> words;
  int current_word = kSpecialWord;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.word_index[i] == kSpecialWord) continue;
    std::string frag = t.surface[i];
    if (frag.rfind("##", 0) == 0) frag = frag.substr(2);
    if (t.word_index[i] != current_word) {
      words.push_back(frag);
      current_word = t.word_index[i];
    } else {
      words.back() += frag;
    }
  }
  return words;
}

}  // namespace detox::encoder
