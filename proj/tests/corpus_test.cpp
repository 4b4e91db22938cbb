#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "detox/corpus.hpp"
#include "detox/errors.hpp"
#include "detox/rng.hpp"

namespace c = detox::corpus;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "detox_corpus_test";
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

fs::path write_file(const std::string& name, const std::string& content) {
  const fs::path p = temp_dir() / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p;
}

// Random text over a pool that exercises every preprocessing rule.
std::string random_text(detox::Rng& rng) {
  static const std::string pool[] = {
      "hello", "WORLD", "a", "ok.", "x,y", "why?", "end।", "mid॥dle",
      "@user", "@", "http://x.co", "https://a.b/c?d=1", "www.site.com",
      "wwwx", "/www.hidden", "w!ww.t", ".", "!!!", "(braces)", "#tag",
      "नमस्ते", "अच्छा!",
      "\n", "\t", "  ", " ", "eé", "100%", "a-b", "c_d",
  };
  std::string s;
  const int parts = static_cast<int>(rng.uniform_int(0, 12));
  for (int i = 0; i < parts; ++i) {
    s += pool[rng.uniform_int(0, std::size(pool) - 1)];
    if (rng.uniform() < 0.7) s += ' ';
  }
  return s;
}

}  // namespace

TEST_CASE("preprocess applies the documented rules") {
  CHECK(c::preprocess("see @user http://x.co now!") == "see now");
  CHECK(c::preprocess("ok.") == "ok.");
  CHECK(c::preprocess("a\nb,  c") == "a b, c");
}

TEST_CASE("preprocess drops links, mentions, and www tokens") {
  CHECK(c::preprocess("go to www.site.com now") == "go to now");
  CHECK(c::preprocess("https://a.b/c?d=1 stays?") == "stays?");
  CHECK(c::preprocess("@someone hi") == "hi");
  // punctuation stripping can expose a www prefix; the rule is re-applied
  CHECK(c::preprocess("/www.hidden x") == "x");
  CHECK(c::preprocess("w!ww.tricky x") == "x");
  // plain words that merely contain www elsewhere survive
  CHECK(c::preprocess("awww nice") == "awww nice");
}

TEST_CASE("preprocess keeps only full stop, danda, comma, question mark") {
  CHECK(c::preprocess("a! b# c( d) e\" f' g; h:") == "a b c d e f g h");
  CHECK(c::preprocess("keep. keep, keep? क।") ==
        "keep. keep, keep? क।");
  // double danda U+0965 is punctuation and not whitelisted
  CHECK(c::preprocess("x॥y") == "xy");
  // math/currency symbols are not punctuation and survive; percent is Po
  CHECK(c::preprocess("5+3 a=b $2") == "5+3 a=b $2");
  CHECK(c::preprocess("100%") == "100");
}

TEST_CASE("preprocess collapses whitespace and trims") {
  CHECK(c::preprocess("  a   b  ") == "a b");
  CHECK(c::preprocess("a\r\nb") == "a b");
  CHECK(c::preprocess("\n\n") == "");
  CHECK(c::preprocess("!!! ...") == "...");
  CHECK(c::preprocess("") == "");
}

TEST_CASE("preprocess is idempotent on random unicode") {
  detox::Rng rng(31);
  for (int it = 0; it < 2000; ++it) {
    const std::string s = random_text(rng);
    const std::string once = c::preprocess(s);
    CHECK(c::preprocess(once) == once);
  }
}

TEST_CASE("delimited reader handles quotes, CRLF, BOM, and tabs") {
  const auto p1 = write_file(
      "quoted.csv",
      "\xEF\xBB\xBFid,text,label\r\n"
      "1,\"has, comma\",HOF\r\n"
      "2,\"line\nbreak\",NOT\r\n"
      "3,\"she said \"\"hi\"\"\",NOT\r\n");
  const auto t1 = c::read_delimited(p1);
  REQUIRE(t1.header == std::vector<std::string>{"id", "text", "label"});
  REQUIRE(t1.rows.size() == 3);
  CHECK(t1.rows[0][1] == "has, comma");
  CHECK(t1.rows[1][1] == "line\nbreak");
  CHECK(t1.rows[2][1] == "she said \"hi\"");

  const auto p2 = write_file("tabbed.tsv",
                             "text_id\ttext\ttask_1\n"
                             "a1\tsome, text with commas\tHOF\n");
  const auto t2 = c::read_delimited(p2);
  REQUIRE(t2.header.size() == 3);
  CHECK(t2.rows[0][1] == "some, text with commas");

  CHECK_THROWS_AS(c::read_delimited(temp_dir() / "missing.csv"),
                  detox::DataError);
  const auto p3 = write_file("ragged.csv", "a,b\n1,2,3\n");
  CHECK_THROWS_AS(c::read_delimited(p3), detox::DataError);
}

TEST_CASE("load_corpus normalizes labels per format") {
  const auto hasoc = write_file("hasoc.tsv",
                                "text_id\ttext\ttask_1\ttask_2\n"
                                "h1\tbad stuff!\tHOF\tPRFN\n"
                                "h2\tnice day\tNOT\tNONE\n");
  const auto ch = c::load_corpus(hasoc, c::Format::Hasoc, c::Split::Train);
  REQUIRE(ch.size() == 2);
  CHECK(ch.comments[0].label == 1);
  CHECK(ch.comments[0].text == "bad stuff");
  CHECK(ch.comments[1].label == 0);
  CHECK(ch.split == c::Split::Train);

  // source convention inverted: 0 = abusive
  const auto macd = write_file("macd.csv",
                               "uid,commentText,label\n"
                               "m1,gaali text,0\n"
                               "m2,theek hai,1\n");
  const auto cm = c::load_corpus(macd, c::Format::Macd, c::Split::Test);
  REQUIRE(cm.size() == 2);
  CHECK(cm.comments[0].label == 1);
  CHECK(cm.comments[1].label == 0);

  const auto bd = write_file("bdshs.csv",
                             "id,sentence,hate\n"
                             "b1,kharap kotha,1\n"
                             "b2,bhalo kotha,0\n");
  const auto cb = c::load_corpus(bd, c::Format::Bdshs, c::Split::All);
  REQUIRE(cb.size() == 2);
  CHECK(cb.comments[0].label == 1);
  CHECK(cb.comments[1].label == 0);
}

TEST_CASE("load_corpus errors name the missing column or bad row") {
  const auto no_label = write_file("nolabel.csv", "id,text\n1,x\n");
  CHECK_THROWS_WITH_AS(
      c::load_corpus(no_label, c::Format::Hasoc, c::Split::All),
      doctest::Contains("label"), detox::DataError);

  const auto bad_label = write_file("badlabel.csv",
                                    "id,text,label\nr7,x,MAYBE\n");
  CHECK_THROWS_WITH_AS(c::load_corpus(bad_label, c::Format::Hasoc, c::Split::All),
                       doctest::Contains("r7"), detox::DataError);

  const auto dup = write_file("dup.csv", "id,text,label\nd1,x,HOF\nd1,y,NOT\n");
  CHECK_THROWS_WITH_AS(c::load_corpus(dup, c::Format::Hasoc, c::Split::All),
                       doctest::Contains("d1"), detox::DataError);
}

TEST_CASE("empty file with valid header loads as empty corpus") {
  const auto p = write_file("empty.csv", "id,text,label\n");
  const auto corpus = c::load_corpus(p, c::Format::Bdshs, c::Split::All);
  CHECK(corpus.size() == 0);
  const auto d = c::class_distribution(corpus);
  CHECK(d.hate == 0);
  CHECK(d.non_hate == 0);
}

TEST_CASE("class_distribution counts sum to corpus size") {
  c::Corpus one;
  one.comments.push_back({"a", "text", 1, {"text"}});
  const auto d = c::class_distribution(one);
  CHECK(d.hate == 1);
  CHECK(d.non_hate == 0);

  const auto mixed = write_file("mixed.csv",
                                "id,text,label\n"
                                "1,a,HOF\n2,b,HOF\n3,c,HOF\n4,d,NOT\n5,e,NOT\n");
  const auto cm = c::load_corpus(mixed, c::Format::Hasoc, c::Split::All);
  const auto dm = c::class_distribution(cm);
  CHECK(dm.hate == 3);
  CHECK(dm.non_hate == 2);
  CHECK(dm.hate + dm.non_hate == cm.size());
}

namespace {

c::Corpus synthetic_corpus(std::size_t n_hate, std::size_t n_non) {
  c::Corpus corpus;
  corpus.name = "synth";
  for (std::size_t i = 0; i < n_hate + n_non; ++i) {
    c::LabeledComment lc;
    lc.id = "c" + std::to_string(i);
    lc.text = "word" + std::to_string(i);
    lc.label = i < n_hate ? 1 : 0;
    lc.words = {lc.text};
    corpus.comments.push_back(std::move(lc));
  }
  return corpus;
}

}  // namespace

TEST_CASE("make_folds: ten comments, five folds of validation size two") {
  const auto corpus = synthetic_corpus(5, 5);
  const auto folds = c::make_folds(corpus, 5, 42);
  REQUIRE(folds.size() == 5);
  for (const auto& f : folds) {
    CHECK(f.val_ids.size() == 2);
    CHECK(f.train_ids.size() == 8);
  }
}

TEST_CASE("make_folds is deterministic for a fixed seed") {
  const auto corpus = synthetic_corpus(13, 7);
  const auto a = c::make_folds(corpus, 4, 99);
  const auto b = c::make_folds(corpus, 4, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].val_ids == b[i].val_ids);
    CHECK(a[i].train_ids == b[i].train_ids);
  }
  const auto d = c::make_folds(corpus, 4, 100);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].val_ids != d[i].val_ids) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("make_folds: six hate + four non-hate, two folds, exact stratification") {
  // oracle: 6 hate items dealt round-robin over 2 folds -> 3 each;
  // 4 non-hate continue the deal -> 2 each
  const auto corpus = synthetic_corpus(6, 4);
  const auto folds = c::make_folds(corpus, 2, 7);
  REQUIRE(folds.size() == 2);
  std::map<std::string, int> label_of;
  for (const auto& lc : corpus.comments) label_of[lc.id] = lc.label;
  for (const auto& f : folds) {
    int hate = 0, non = 0;
    for (const auto& id : f.val_ids) (label_of.at(id) ? hate : non)++;
    CHECK(hate == 3);
    CHECK(non == 2);
  }
}

TEST_CASE("make_folds validation sets partition the corpus and stay stratified") {
  detox::Rng rng(55);
  for (int it = 0; it < 40; ++it) {
    const std::size_t n_hate = static_cast<std::size_t>(rng.uniform_int(0, 40));
    const std::size_t n_non = static_cast<std::size_t>(rng.uniform_int(0, 40));
    const std::size_t total = n_hate + n_non;
    const int k = static_cast<int>(rng.uniform_int(2, 6));
    if (total < static_cast<std::size_t>(k)) continue;
    const auto corpus = synthetic_corpus(n_hate, n_non);
    const auto folds = c::make_folds(corpus, k, 1000 + it);
    REQUIRE(folds.size() == static_cast<std::size_t>(k));

    std::set<std::string> all_ids;
    for (const auto& lc : corpus.comments) all_ids.insert(lc.id);
    std::map<std::string, int> label_of;
    for (const auto& lc : corpus.comments) label_of[lc.id] = lc.label;

    std::set<std::string> seen;
    std::size_t min_sz = total, max_sz = 0;
    for (const auto& f : folds) {
      // train and val are disjoint and cover everything
      std::set<std::string> tr(f.train_ids.begin(), f.train_ids.end());
      std::set<std::string> va(f.val_ids.begin(), f.val_ids.end());
      CHECK(tr.size() + va.size() == total);
      for (const auto& id : va) {
        CHECK(!tr.count(id));
        const bool fresh = seen.insert(id).second;
        CHECK(fresh);  // val sets pairwise disjoint
      }
      min_sz = std::min(min_sz, va.size());
      max_sz = std::max(max_sz, va.size());
      // per-class count within one of the proportional share
      for (const int cls : {0, 1}) {
        const std::size_t cls_total = cls ? n_hate : n_non;
        std::size_t got = 0;
        for (const auto& id : va)
          if (label_of.at(id) == cls) ++got;
        const double share =
            static_cast<double>(cls_total) / static_cast<double>(k);
        CHECK(static_cast<double>(got) >= share - 1.0);
        CHECK(static_cast<double>(got) <= share + 1.0);
      }
    }
    CHECK(seen == all_ids);            // union = id set
    CHECK(max_sz - min_sz <= 1);       // sizes differ by at most one
  }
}

TEST_CASE("make_folds rejects bad k") {
  const auto corpus = synthetic_corpus(2, 2);
  CHECK_THROWS_AS(c::make_folds(corpus, 1, 0), detox::UsageError);
  CHECK_THROWS_AS(c::make_folds(corpus, 5, 0), detox::UsageError);
}

TEST_CASE("jsonl snapshot round trip preserves ids, text, labels") {
  const auto src = write_file("rt.csv",
                              "id,text,label\n"
                              "r1,\"some text, with comma!\",HOF\n"
                              "r2,plain words here,NOT\n"
                              "r3,नमस्ते ji,HOF\n");
  const auto corpus = c::load_corpus(src, c::Format::Hasoc, c::Split::Train);
  const auto snap = temp_dir() / "rt.jsonl";
  c::save_jsonl(corpus, snap);
  const auto back = c::load_jsonl(snap, corpus.name, corpus.split);
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(back.comments[i].id == corpus.comments[i].id);
    CHECK(back.comments[i].text == corpus.comments[i].text);
    CHECK(back.comments[i].label == corpus.comments[i].label);
    CHECK(back.comments[i].words == corpus.comments[i].words);
  }
}

TEST_CASE("labeled comments satisfy their invariants after load") {
  const auto src = write_file("inv.csv",
                              "id,text,label\n"
                              "i1,\"Hello!!! @you www.x.com check,this\",HOF\n");
  const auto corpus = c::load_corpus(src, c::Format::Hasoc, c::Split::All);
  REQUIRE(corpus.size() == 1);
  const auto& lc = corpus.comments[0];
  CHECK(c::preprocess(lc.text) == lc.text);
  std::string joined;
  for (std::size_t i = 0; i < lc.words.size(); ++i) {
    if (i) joined += ' ';
    joined += lc.words[i];
  }
  CHECK(joined == lc.text);
}

TEST_CASE("split names round trip") {
  using c::Split;
  for (const auto s : {Split::Train, Split::Val, Split::Test, Split::All})
    CHECK(c::parse_split(c::split_name(s)) == s);
  CHECK_THROWS_AS(c::parse_split("bogus"), detox::UsageError);
  using c::Format;
  for (const auto f : {Format::Hasoc, Format::Macd, Format::Bdshs})
    CHECK(c::parse_format(c::format_name(f)) == f);
  CHECK_THROWS_AS(c::parse_format("bogus"), detox::UsageError);
}
