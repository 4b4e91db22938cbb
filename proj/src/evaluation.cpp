#include "detox/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

#include "detox/corpus.hpp"
#include "detox/errors.hpp"

namespace detox::evaluation {

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_of(double p, double r) {
  return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (std::all_of(xs.begin(), xs.end(),
                  [&](double x) { return x == xs.front(); })) {
    out.mean = xs.front();  // exact: avoids 1-ulp drift from sum/n rounding
    out.std = 0.0;
    return out;
  }
  const auto n = static_cast<double>(xs.size());
  for (const double x : xs) out.mean += x;
  out.mean /= n;
  double ss = 0.0;
  for (const double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = xs.size() < 2 ? 0.0 : std::sqrt(ss / (n - 1.0));
  return out;
}

std::string trimmed(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::string MeanStd::formatted() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.3f", mean, std);
  return buf;
}

MetricsReport classification_metrics(const std::vector<int>& predictions,
                                     const std::vector<int>& golds) {
  if (predictions.size() != golds.size())
    throw UsageError("classification_metrics: prediction/gold length mismatch (" +
                     std::to_string(predictions.size()) + " vs " +
                     std::to_string(golds.size()) + ")");
  if (predictions.empty())
    throw UsageError("classification_metrics: empty input");

  // confusion counts per class
  std::array<std::int64_t, 2> tp{0, 0}, fp{0, 0}, fn{0, 0};
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i];
    const int g = golds[i];
    if ((p != 0 && p != 1) || (g != 0 && g != 1))
      throw UsageError("classification_metrics: labels must be 0 or 1");
    if (p == g) {
      ++tp[static_cast<std::size_t>(g)];
      ++correct;
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(g)];
    }
  }

  MetricsReport r;
  const auto n = static_cast<double>(predictions.size());
  r.accuracy = static_cast<double>(correct) / n;
  for (std::size_t c = 0; c < 2; ++c) {
    r.support[c] = tp[c] + fn[c];
    r.precision_per_class[c] =
        safe_div(static_cast<double>(tp[c]), static_cast<double>(tp[c] + fp[c]));
    r.recall_per_class[c] =
        safe_div(static_cast<double>(tp[c]), static_cast<double>(tp[c] + fn[c]));
    r.f1_per_class[c] = f1_of(r.precision_per_class[c], r.recall_per_class[c]);
  }
  r.precision_macro = (r.precision_per_class[0] + r.precision_per_class[1]) / 2.0;
  r.recall_macro = (r.recall_per_class[0] + r.recall_per_class[1]) / 2.0;
  r.f1_macro = (r.f1_per_class[0] + r.f1_per_class[1]) / 2.0;

  const auto gtp = static_cast<double>(tp[0] + tp[1]);
  const auto gfp = static_cast<double>(fp[0] + fp[1]);
  const auto gfn = static_cast<double>(fn[0] + fn[1]);
  r.precision_micro = safe_div(gtp, gtp + gfp);
  r.recall_micro = safe_div(gtp, gtp + gfn);
  r.f1_micro = f1_of(r.precision_micro, r.recall_micro);
  return r;
}

FoldSummary aggregate_folds(const std::vector<MetricsReport>& reports) {
  if (reports.size() < 2)
    throw UsageError("aggregate_folds: need at least 2 fold reports, got " +
                     std::to_string(reports.size()));
  FoldSummary s;
  const auto collect = [&](double MetricsReport::*field) {
    std::vector<double> xs;
    xs.reserve(reports.size());
    for (const auto& r : reports) xs.push_back(r.*field);
    return mean_std(xs);
  };
  s.accuracy = collect(&MetricsReport::accuracy);
  s.precision_macro = collect(&MetricsReport::precision_macro);
  s.recall_macro = collect(&MetricsReport::recall_macro);
  s.f1_macro = collect(&MetricsReport::f1_macro);
  s.precision_micro = collect(&MetricsReport::precision_micro);
  s.recall_micro = collect(&MetricsReport::recall_micro);
  s.f1_micro = collect(&MetricsReport::f1_micro);
  return s;
}

double jaccard(const std::vector<std::string>& a,
               const std::vector<std::string>& b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& w : sa) inter += sb.count(w);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw UsageError("pearson: length mismatch (" + std::to_string(x.size()) +
                     " vs " + std::to_string(y.size()) + ")");
  if (x.size() < 2)
    throw UsageError("pearson: need at least 2 samples");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw UsageError("pearson: correlation undefined for a constant sequence");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<HumanEvalRecord> ingest_human_eval(
    const std::filesystem::path& path) {
  const corpus::Table table = corpus::read_delimited(path);
  if (table.header.size() != 3 || trimmed(table.header[0]) != "comment_id" ||
      trimmed(table.header[1]) != "annotator_id" ||
      (trimmed(table.header[2]) != "rating" &&
       trimmed(table.header[2]) != "words"))
    throw DataError(path.string() +
                    ": header must be `comment_id, annotator_id, rating` or "
                    "`comment_id, annotator_id, words`");
  const bool is_rating = trimmed(table.header[2]) == "rating";

  std::vector<HumanEvalRecord> out;
  out.reserve(table.rows.size());
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& row : table.rows) {
    HumanEvalRecord rec;
    rec.comment_id = trimmed(row[0]);
    rec.annotator_id = trimmed(row[1]);
    if (rec.comment_id.empty() || rec.annotator_id.empty())
      throw DataError(path.string() + ": empty comment or annotator id");
    if (!seen.insert({rec.comment_id, rec.annotator_id}).second)
      throw DataError(path.string() + ": duplicate record for comment `" +
                      rec.comment_id + "` annotator `" + rec.annotator_id +
                      "`");
    if (is_rating) {
      rec.has_rating = true;
      const std::string v = trimmed(row[2]);
      std::size_t pos = 0;
      int rating = 0;
      try {
        rating = std::stoi(v, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != v.size() || v.empty())
        throw DataError(path.string() + ": comment `" + rec.comment_id +
                        "`: rating `" + v + "` is not an integer");
      if (rating < 1 || rating > 5)
        throw DataError(path.string() + ": comment `" + rec.comment_id +
                        "`: rating " + std::to_string(rating) +
                        " outside the 1..5 scale");
      rec.rating = rating;
    } else {
      std::string word;
      for (const char ch : row[2] + "|") {
        if (ch == '|') {
          const std::string w = trimmed(word);
          if (!w.empty()) rec.words.push_back(w);
          word.clear();
        } else {
          word.push_back(ch);
        }
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<HumanEvalRecord> likert_ingest(const std::filesystem::path& path) {
  auto records = ingest_human_eval(path);
  if (!records.empty() && !records.front().has_rating)
    throw DataError(path.string() + ": expected a rating file, found word sets");
  return records;
}

AgreementReport rating_agreement(const std::vector<HumanEvalRecord>& records) {
  // annotator -> comment -> rating
  std::map<std::string, std::map<std::string, double>> by_annotator;
  for (const auto& r : records) {
    if (!r.has_rating)
      throw UsageError("rating_agreement: word-set records have no ratings");
    by_annotator[r.annotator_id][r.comment_id] = static_cast<double>(r.rating);
  }
  if (by_annotator.size() < 2)
    throw UsageError("rating_agreement: need ratings from at least 2 annotators");

  AgreementReport rep;
  for (const auto& [annot, ratings] : by_annotator) {
    rep.annotators.push_back(annot);
    double sum = 0.0;
    for (const auto& [id, v] : ratings) sum += v;
    rep.mean_rating.push_back(sum / static_cast<double>(ratings.size()));
  }

  double pooled = 0.0;
  for (std::size_t i = 0; i < rep.annotators.size(); ++i) {
    for (std::size_t j = i + 1; j < rep.annotators.size(); ++j) {
      const auto& ra = by_annotator.at(rep.annotators[i]);
      const auto& rb = by_annotator.at(rep.annotators[j]);
      std::vector<double> xs, ys;
      for (const auto& [id, v] : ra) {
        const auto it = rb.find(id);
        if (it != rb.end()) {
          xs.push_back(v);
          ys.push_back(it->second);
        }
      }
      PairwiseAgreement pa;
      pa.annotator_a = rep.annotators[i];
      pa.annotator_b = rep.annotators[j];
      pa.common_items = xs.size();
      pa.r = pearson(xs, ys);  // propagates errors for degenerate overlap
      pooled += pa.r;
      rep.pairwise.push_back(std::move(pa));
    }
  }
  rep.pooled_r = pooled / static_cast<double>(rep.pairwise.size());
  return rep;
}

}  // namespace detox::evaluation
