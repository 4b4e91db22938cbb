#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "detox/errors.hpp"
#include "detox/evaluation.hpp"
#include "detox/rng.hpp"

namespace ev = detox::evaluation;
namespace fs = std::filesystem;

namespace {

// Independent oracle: literal cell-by-cell confusion matrix count.
struct NaiveMetrics {
  double acc, p0, r0, f0, p1, r1, f1, pm, rm, fm, pmi, rmi, fmi;
};

NaiveMetrics naive_metrics(const std::vector<int>& pred,
                           const std::vector<int>& gold) {
  double n00 = 0, n01 = 0, n10 = 0, n11 = 0;  // n{gold}{pred}
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gold[i] == 0 && pred[i] == 0) n00 += 1;
    if (gold[i] == 0 && pred[i] == 1) n01 += 1;
    if (gold[i] == 1 && pred[i] == 0) n10 += 1;
    if (gold[i] == 1 && pred[i] == 1) n11 += 1;
  }
  const auto div = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
  NaiveMetrics m{};
  m.acc = (n00 + n11) / static_cast<double>(pred.size());
  m.p0 = div(n00, n00 + n10);
  m.r0 = div(n00, n00 + n01);
  m.f0 = (m.p0 + m.r0) == 0.0 ? 0.0 : 2.0 * m.p0 * m.r0 / (m.p0 + m.r0);
  m.p1 = div(n11, n11 + n01);
  m.r1 = div(n11, n11 + n10);
  m.f1 = (m.p1 + m.r1) == 0.0 ? 0.0 : 2.0 * m.p1 * m.r1 / (m.p1 + m.r1);
  m.pm = (m.p0 + m.p1) / 2.0;
  m.rm = (m.r0 + m.r1) / 2.0;
  m.fm = (m.f0 + m.f1) / 2.0;
  const double gtp = n00 + n11, gfp = n01 + n10, gfn = n01 + n10;
  m.pmi = div(gtp, gtp + gfp);
  m.rmi = div(gtp, gtp + gfn);
  m.fmi = (m.pmi + m.rmi) == 0.0 ? 0.0 : 2.0 * m.pmi * m.rmi / (m.pmi + m.rmi);
  return m;
}

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p;
}

}  // namespace

TEST_CASE("metrics: perfect predictions give all ones") {
  const std::vector<int> labels = {0, 1, 1, 0, 1};
  const auto r = ev::classification_metrics(labels, labels);
  CHECK(r.accuracy == 1.0);
  CHECK(r.precision_macro == 1.0);
  CHECK(r.recall_macro == 1.0);
  CHECK(r.f1_macro == 1.0);
  CHECK(r.f1_micro == 1.0);
  CHECK(r.support[0] == 2);
  CHECK(r.support[1] == 3);
}

TEST_CASE("metrics: hand-computed all-zero predictor") {
  const std::vector<int> gold = {1, 1, 0, 0};
  const std::vector<int> pred = {0, 0, 0, 0};
  const auto r = ev::classification_metrics(pred, gold);
  CHECK(r.accuracy == 0.5);
  CHECK(r.precision_per_class[0] == 0.5);
  CHECK(r.recall_per_class[0] == 1.0);
  CHECK(r.f1_per_class[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.precision_per_class[1] == 0.0);
  CHECK(r.recall_per_class[1] == 0.0);
  CHECK(r.f1_per_class[1] == 0.0);
  CHECK(r.f1_macro == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.precision_micro == 0.5);
  CHECK(r.recall_micro == 0.5);
  CHECK(r.f1_micro == 0.5);
}

TEST_CASE("metrics: macro equals micro under class symmetry") {
  const std::vector<int> gold = {0, 0, 1, 1};
  const std::vector<int> pred = {0, 1, 1, 0};
  const auto r = ev::classification_metrics(pred, gold);
  CHECK(r.precision_macro == r.precision_micro);
  CHECK(r.recall_macro == r.recall_micro);
  CHECK(r.f1_macro == r.f1_micro);
}

TEST_CASE("metrics: errors") {
  CHECK_THROWS_AS(ev::classification_metrics({0, 1}, {0}), detox::UsageError);
  CHECK_THROWS_AS(ev::classification_metrics({}, {}), detox::UsageError);
  CHECK_THROWS_AS(ev::classification_metrics({0, 2}, {0, 1}),
                  detox::UsageError);
  CHECK_THROWS_AS(ev::classification_metrics({0, 1}, {0, -1}),
                  detox::UsageError);
}

TEST_CASE("metrics: exact match against naive oracle on 1000 random pairs") {
  detox::Rng rng(2024);
  for (int it = 0; it < 1000; ++it) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 60));
    std::vector<int> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng.uniform_int(0, 1));
      gold[i] = static_cast<int>(rng.uniform_int(0, 1));
    }
    const auto r = ev::classification_metrics(pred, gold);
    const auto m = naive_metrics(pred, gold);
    CHECK(r.accuracy == m.acc);
    CHECK(r.precision_per_class[0] == m.p0);
    CHECK(r.recall_per_class[0] == m.r0);
    CHECK(r.f1_per_class[0] == m.f0);
    CHECK(r.precision_per_class[1] == m.p1);
    CHECK(r.recall_per_class[1] == m.r1);
    CHECK(r.f1_per_class[1] == m.f1);
    CHECK(r.precision_macro == m.pm);
    CHECK(r.recall_macro == m.rm);
    CHECK(r.f1_macro == m.fm);
    CHECK(r.precision_micro == m.pmi);
    CHECK(r.recall_micro == m.rmi);
    CHECK(r.f1_micro == m.fmi);
    // single-label binary identity
    CHECK(r.f1_micro == doctest::Approx(r.accuracy).epsilon(1e-15));
  }
}

TEST_CASE("aggregate_folds: dispersion and formatting") {
  ev::MetricsReport a, b;
  a.f1_macro = 0.8;
  b.f1_macro = 0.9;
  const auto s = ev::aggregate_folds({a, b});
  CHECK(s.f1_macro.mean == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(s.f1_macro.std == doctest::Approx(0.07071067811865475).epsilon(1e-12));
  CHECK(s.f1_macro.formatted() == "0.85 ± 0.071");

  std::vector<ev::MetricsReport> same(5);
  for (auto& r : same) r.f1_macro = 0.84;
  const auto s2 = ev::aggregate_folds(same);
  CHECK(s2.f1_macro.std == 0.0);
  CHECK(s2.f1_macro.formatted() == "0.84 ± 0.000");

  CHECK_THROWS_AS(ev::aggregate_folds({a}), detox::UsageError);

  // mean within [min, max]
  detox::Rng rng(5);
  std::vector<ev::MetricsReport> rs(7);
  double lo = 1.0, hi = 0.0;
  for (auto& r : rs) {
    r.accuracy = rng.uniform(0.0, 1.0);
    lo = std::min(lo, r.accuracy);
    hi = std::max(hi, r.accuracy);
  }
  const auto s3 = ev::aggregate_folds(rs);
  CHECK(s3.accuracy.mean >= lo);
  CHECK(s3.accuracy.mean <= hi);
}

TEST_CASE("jaccard: identities, bounds, set semantics, monotonicity") {
  CHECK(ev::jaccard({"a", "b"}, {"a", "b"}) == 1.0);
  CHECK(ev::jaccard({"a"}, {"b"}) == 0.0);
  CHECK(ev::jaccard({}, {}) == 1.0);
  CHECK(ev::jaccard({}, {"a"}) == 0.0);
  CHECK(ev::jaccard({"a", "a", "b"}, {"b", "a"}) == 1.0);  // multiset collapse
  CHECK(ev::jaccard({"a", "b", "c", "d"}, {"a", "b"}) == 0.5);

  detox::Rng rng(9);
  for (int it = 0; it < 200; ++it) {
    std::vector<std::string> a, b;
    for (int i = 0; i < 8; ++i) {
      if (rng.uniform() < 0.5) a.push_back("w" + std::to_string(rng.uniform_int(0, 9)));
      if (rng.uniform() < 0.5) b.push_back("w" + std::to_string(rng.uniform_int(0, 9)));
    }
    const double j1 = ev::jaccard(a, b);
    const double j2 = ev::jaccard(b, a);
    CHECK(j1 == j2);
    CHECK(j1 >= 0.0);
    CHECK(j1 <= 1.0);
  }

  // fixed union, growing symmetric difference lowers the index
  CHECK(ev::jaccard({"a", "b", "c"}, {"a", "b", "c"}) >
        ev::jaccard({"a", "b"}, {"a", "b", "c"}));
  CHECK(ev::jaccard({"a", "b"}, {"a", "b", "c"}) >
        ev::jaccard({"a"}, {"a", "b", "c"}));
}

TEST_CASE("pearson: identities, affine invariance, errors") {
  const std::vector<double> x = {1, 2, 3, 4, 7};
  std::vector<double> y = x;
  CHECK(ev::pearson(x, y) == doctest::Approx(1.0).epsilon(1e-15));
  for (auto& v : y) v = -v;
  CHECK(ev::pearson(x, y) == doctest::Approx(-1.0).epsilon(1e-15));

  detox::Rng rng(31);
  std::vector<double> u(20), v(20);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = rng.uniform(-5.0, 5.0);
    v[i] = rng.uniform(-5.0, 5.0);
  }
  const double base = ev::pearson(u, v);
  std::vector<double> scaled = u;
  for (auto& a : scaled) a = 3.5 * a + 11.0;
  CHECK(ev::pearson(scaled, v) == doctest::Approx(base).epsilon(1e-12));
  for (auto& a : scaled) a = -a;
  CHECK(ev::pearson(scaled, v) == doctest::Approx(-base).epsilon(1e-12));

  CHECK_THROWS_AS(ev::pearson({1, 2}, {1}), detox::UsageError);
  CHECK_THROWS_AS(ev::pearson({1}, {1}), detox::UsageError);
  CHECK_THROWS_AS(ev::pearson({1, 1, 1}, {1, 2, 3}), detox::UsageError);
}

TEST_CASE("human eval ingestion: ratings") {
  const auto p = write_temp("detox_ratings.csv",
                            "comment_id,annotator_id,rating\n"
                            "c1,a1,5\n"
                            "c1,a2,4\n"
                            "c2,a1,1\n");
  const auto recs = ev::likert_ingest(p);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].comment_id == "c1");
  CHECK(recs[0].annotator_id == "a1");
  CHECK(recs[0].has_rating);
  CHECK(recs[0].rating == 5);
  CHECK(recs[2].rating == 1);

  const auto bad = write_temp("detox_ratings_bad.csv",
                              "comment_id,annotator_id,rating\nc1,a1,0\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(ev::likert_ingest(bad)),
                       doctest::Contains("outside the 1..5 scale"),
                       detox::DataError);
  const auto bad2 = write_temp("detox_ratings_bad2.csv",
                               "comment_id,annotator_id,rating\nc9,a1,x\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(ev::likert_ingest(bad2)),
                       doctest::Contains("c9"), detox::DataError);
  const auto dup = write_temp("detox_ratings_dup.csv",
                              "comment_id,annotator_id,rating\n"
                              "c1,a1,3\nc1,a1,4\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(ev::likert_ingest(dup)),
                       doctest::Contains("duplicate"), detox::DataError);
  const auto wrong = write_temp("detox_ratings_schema.csv",
                                "id,rating\nc1,3\n");
  CHECK_THROWS_AS(static_cast<void>(ev::likert_ingest(wrong)),
                  detox::DataError);
}

TEST_CASE("human eval ingestion: word sets and a 3x40 protocol file") {
  std::string content = "comment_id,annotator_id,words\n";
  content += "c1,a1,slur1|slur2\n";
  content += "c2,a1,\n";
  for (int a = 1; a <= 3; ++a)
    for (int c = 1; c <= 40; ++c)
      content += "s" + std::to_string(c) + ",ann" + std::to_string(a) + ",w" +
                 std::to_string(c) + "\n";
  const auto p = write_temp("detox_words.csv", content);
  const auto recs = ev::ingest_human_eval(p);
  REQUIRE(recs.size() == 2 + 120);
  CHECK(!recs[0].has_rating);
  CHECK(recs[0].words == std::vector<std::string>{"slur1", "slur2"});
  CHECK(recs[1].words.empty());

  // word files are not rating files
  CHECK_THROWS_AS(static_cast<void>(ev::likert_ingest(p)), detox::DataError);
}

TEST_CASE("rating agreement: means, pairwise r, pooled r") {
  std::vector<ev::HumanEvalRecord> recs;
  const auto add = [&](const std::string& c, const std::string& a, int r) {
    ev::HumanEvalRecord rec;
    rec.comment_id = c;
    rec.annotator_id = a;
    rec.has_rating = true;
    rec.rating = r;
    recs.push_back(rec);
  };
  // ann2 = ann1 shifted by 1 (r = 1); ann3 reversed (r = -1 against both)
  const int base[5] = {1, 2, 3, 4, 5};
  for (int i = 0; i < 5; ++i) {
    const std::string c = "c" + std::to_string(i);
    add(c, "ann1", base[i]);
    add(c, "ann2", std::min(5, base[i] + 1));
    add(c, "ann3", 6 - base[i]);
  }
  const auto rep = ev::rating_agreement(recs);
  REQUIRE(rep.annotators == std::vector<std::string>{"ann1", "ann2", "ann3"});
  CHECK(rep.mean_rating[0] == doctest::Approx(3.0));
  CHECK(rep.mean_rating[1] == doctest::Approx(3.8));  // 2,3,4,5,5
  CHECK(rep.mean_rating[2] == doctest::Approx(3.0));
  REQUIRE(rep.pairwise.size() == 3);
  // ann1/ann2 strongly positive, both anti-correlated with ann3
  CHECK(rep.pairwise[0].r > 0.9);
  CHECK(rep.pairwise[1].r == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(rep.pairwise[2].r < -0.9);
  CHECK(rep.pooled_r ==
        doctest::Approx((rep.pairwise[0].r + rep.pairwise[1].r +
                         rep.pairwise[2].r) / 3.0));
  CHECK(rep.pairwise[0].common_items == 5);

  // single annotator → error
  std::vector<ev::HumanEvalRecord> single(recs.begin(), recs.begin() + 1);
  CHECK_THROWS_AS(static_cast<void>(ev::rating_agreement(single)),
                  detox::UsageError);
}
