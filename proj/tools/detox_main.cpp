#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "detox/config.hpp"
#include "detox/corpus.hpp"
#include "detox/errors.hpp"
#include "detox/evaluation.hpp"
#include "detox/pipeline.hpp"
#include "detox/runio.hpp"
#include "detox/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// One flag set shared by every subcommand; only the parsed subcommand
// writes into it. Empty string / empty optional means "not given".
struct Flags {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out, corpus, format, log;
  std::string detector, encoder;
  std::optional<std::uint64_t> seed;

  std::optional<int> size, min_words, max_words;
  std::optional<double> trigger_rate;
  std::string corpus_out, truth_out;

  std::optional<int> folds;
  bool no_cv = false;

  std::string truth, ratings, words;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_path,
                  "configuration file (one `key = value` per line)");
  sub->add_option("--set", f.sets,
                  "override one config key (key=value, repeatable)");
  sub->add_option("--out", f.out, "output directory (io.out)");
  sub->add_option("--corpus", f.corpus, "input corpus file (io.corpus)");
  sub->add_option("--format", f.format,
                  "corpus format: jsonl, hasoc, macd, bdshs (io.format)");
  sub->add_option("--seed", f.seed, "master seed (run.seed)");
  sub->add_option("--log", f.log, "log level: quiet, info, debug");
}

void add_model_dirs(CLI::App* sub, Flags& f) {
  sub->add_option("--detector", f.detector,
                  "trained detector directory (io.detector)");
  sub->add_option("--encoder", f.encoder,
                  "masked-fill encoder directory (io.encoder)");
}

// Precedence, lowest to highest: config file, DETOX_OUT, --set overrides,
// named flags.
detox::config::Config effective_config(const Flags& f) {
  detox::config::Config c;
  if (!f.config_path.empty()) c = detox::config::parse_file(f.config_path);
  if (const char* v = std::getenv("DETOX_OUT"); v && *v) c.set("io.out", v);
  for (const auto& s : f.sets) detox::config::apply_override(c, s);

  if (!f.corpus.empty()) c.set("io.corpus", f.corpus);
  if (!f.format.empty()) c.set("io.format", f.format);
  if (!f.out.empty()) c.set("io.out", f.out);
  if (!f.detector.empty()) c.set("io.detector", f.detector);
  if (!f.encoder.empty()) c.set("io.encoder", f.encoder);
  if (f.seed) c.set("run.seed", std::to_string(*f.seed));

  if (f.size) c.set("synth.size", std::to_string(*f.size));
  if (f.trigger_rate) c.set("synth.trigger_rate", json(*f.trigger_rate).dump());
  if (f.min_words) c.set("synth.min_words", std::to_string(*f.min_words));
  if (f.max_words) c.set("synth.max_words", std::to_string(*f.max_words));
  if (!f.corpus_out.empty()) c.set("synth.corpus_out", f.corpus_out);
  if (!f.truth_out.empty()) c.set("synth.truth_out", f.truth_out);

  if (f.folds) c.set("train.folds", std::to_string(*f.folds));
  if (f.no_cv) c.set("train.cv", "false");

  if (!f.truth.empty()) c.set("eval.truth", f.truth);
  if (!f.ratings.empty()) c.set("eval.ratings", f.ratings);
  if (!f.words.empty()) c.set("eval.words", f.words);

  detox::config::require_known_keys(c, detox::pipeline::known_keys());
  return c;
}

void apply_log_level(const Flags& f) {
  std::string level = f.log;
  if (level.empty())
    if (const char* v = std::getenv("DETOX_LOG"); v && *v) level = v;
  if (!level.empty())
    detox::runio::set_log_level(detox::runio::parse_log_level(level));
}

json parse_record(const std::string& line, const fs::path& file,
                  std::size_t line_no) {
  try {
    return json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw detox::DataError(file.string() + ":" + std::to_string(line_no) +
                           ": " + e.what());
  }
}

int cmd_synth(const detox::config::Config& c) {
  detox::synth::SynthConfig sc;
  sc.size = static_cast<int>(c.get_int("synth.size", sc.size));
  sc.trigger_rate = c.get_real("synth.trigger_rate", sc.trigger_rate);
  sc.min_words = static_cast<int>(c.get_int("synth.min_words", sc.min_words));
  sc.max_words = static_cast<int>(c.get_int("synth.max_words", sc.max_words));
  sc.seed = c.get_u64("run.seed", sc.seed);
  sc.validate();

  const fs::path corpus_out = c.get_string("synth.corpus_out", "synth.jsonl");
  const fs::path truth_out =
      c.get_string("synth.truth_out", "synth.truth.jsonl");

  const auto sg = detox::synth::generate(sc);
  detox::synth::write(sg, corpus_out, truth_out);

  std::size_t hate = 0;
  for (const auto& comment : sg.corpus.comments) hate += comment.label == 1;
  std::cout << "wrote " << sg.corpus.size() << " comments (" << hate
            << " hate) to " << corpus_out.string() << "\n"
            << "ground truth: " << truth_out.string() << "\n";
  return 0;
}

void print_run_record(const detox::pipeline::RunRecord& rec) {
  std::cout << "stages run: " << rec.stages_run.size()
            << ", skipped (already complete): " << rec.stages_skipped.size()
            << ", per-comment failures: " << rec.failures << "\n";
  for (const auto& t : rec.timings)
    std::cout << "  " << t.stage << ": " << t.seconds << "s\n";
}

int cmd_pipeline(const detox::config::Config& c) {
  const auto rc = detox::pipeline::run_config_from(c);
  const auto rec = detox::pipeline::run_pipeline(rc);
  print_run_record(rec);
  std::cout << "summary: " << (rc.out_dir / "summary.json").string() << "\n";
  return 0;
}

int cmd_stages(const detox::config::Config& c,
               const std::vector<std::string>& stages) {
  const auto rc = detox::pipeline::run_config_from(c);
  print_run_record(detox::pipeline::run_stages(rc, stages));
  return 0;
}

int cmd_train(const detox::config::Config& c) {
  const auto rc = detox::pipeline::run_config_from(c);
  print_run_record(
      detox::pipeline::run_stages(rc, {"corpus", "mlm", "train"}));
  if (c.get_bool("train.cv", true)) {
    const auto cv = detox::pipeline::run_cross_validation(rc);
    if (cv.ran)
      std::cout << "cross-validation macro-F1: "
                << cv.report.summary.f1_macro.formatted() << "\n";
    else
      std::cout << "cross-validation already complete: "
                << (rc.out_dir / "cv_report.json").string() << "\n";
  }
  std::cout << "detector: " << (rc.out_dir / "detector").string() << "\n";
  return 0;
}

int cmd_evaluate(const detox::config::Config& c) {
  const fs::path out = c.get_string("io.out");
  json ev;
  bool any = false;

  const auto detect_path = out / "detect.jsonl";
  if (fs::exists(detect_path)) {
    std::vector<int> preds, golds;
    std::size_t line_no = 0;
    for (const auto& line : detox::runio::read_lines(detect_path)) {
      const auto j = parse_record(line, detect_path, ++line_no);
      preds.push_back(j.at("predicted_label").get<int>());
      golds.push_back(j.at("gold_label").get<int>());
    }
    if (!preds.empty()) {
      const auto m = detox::evaluation::classification_metrics(preds, golds);
      ev["detection"] = detox::pipeline::metrics_to_json(m);
      std::cout << "detection: accuracy " << m.accuracy << ", macro-F1 "
                << m.f1_macro << " over " << preds.size() << " comments\n";
      any = true;
    }
  }

  // Model hate-word sets, keyed by comment id, for the Jaccard blocks.
  std::map<std::string, std::vector<std::string>> model_words;
  const auto attr_path = out / "attribute.jsonl";
  if (fs::exists(attr_path)) {
    std::size_t line_no = 0;
    for (const auto& line : detox::runio::read_lines(attr_path)) {
      const auto j = parse_record(line, attr_path, ++line_no);
      std::vector<std::string> ws;
      for (const auto& t : j.at("top_words"))
        ws.push_back(t.at("word").get<std::string>());
      model_words[j.at("id").get<std::string>()] = std::move(ws);
    }
  }
  const auto need_model_words = [&]() {
    if (model_words.empty())
      throw detox::DataError("no attribution dump at " + attr_path.string() +
                             " (run the attribute stage first)");
  };

  if (c.has("eval.truth")) {
    need_model_words();
    const auto truth = detox::synth::read_truth(c.get_string("eval.truth"));
    double sum = 0.0;
    std::size_t n = 0;
    std::set<std::string> pred_pool, truth_pool;
    for (const auto& g : truth) {
      const auto it = model_words.find(g.comment_id);
      if (it == model_words.end()) continue;
      sum += detox::evaluation::jaccard(it->second, g.hate_words);
      ++n;
      pred_pool.insert(it->second.begin(), it->second.end());
      truth_pool.insert(g.hate_words.begin(), g.hate_words.end());
    }
    if (n == 0)
      throw detox::DataError(
          "no comment ids shared between the attribution dump and " +
          c.get_string("eval.truth"));
    const double pooled = detox::evaluation::jaccard(
        {pred_pool.begin(), pred_pool.end()},
        {truth_pool.begin(), truth_pool.end()});
    const double mean = sum / static_cast<double>(n);
    ev["jaccard_truth"] = {
        {"comments", n}, {"mean_per_comment", mean}, {"pooled", pooled}};
    std::cout << "hate-word Jaccard vs ground truth: mean " << mean
              << ", pooled " << pooled << " over " << n << " comments\n";
    any = true;
  }

  if (c.has("eval.words")) {
    need_model_words();
    const auto recs =
        detox::evaluation::ingest_human_eval(c.get_string("eval.words"));
    double sum = 0.0;
    std::size_t n = 0;
    std::map<std::string, std::pair<double, std::size_t>> per_annotator;
    for (const auto& r : recs) {
      if (r.has_rating)
        throw detox::UsageError("eval.words file holds ratings; use "
                                "eval.ratings for Likert files");
      const auto it = model_words.find(r.comment_id);
      if (it == model_words.end()) continue;
      const double ji = detox::evaluation::jaccard(it->second, r.words);
      sum += ji;
      ++n;
      auto& [s, k] = per_annotator[r.annotator_id];
      s += ji;
      ++k;
    }
    if (n == 0)
      throw detox::DataError(
          "no comment ids shared between the attribution dump and " +
          c.get_string("eval.words"));
    json per = json::object();
    for (const auto& [annotator, acc] : per_annotator)
      per[annotator] = acc.first / static_cast<double>(acc.second);
    const double mean = sum / static_cast<double>(n);
    ev["jaccard_human"] = {{"pairs", n},
                           {"mean_per_pair", mean},
                           {"per_annotator", per}};
    std::cout << "hate-word Jaccard vs annotators: mean " << mean << " over "
              << n << " comment-annotator pairs\n";
    any = true;
  }

  if (c.has("eval.ratings")) {
    const auto recs =
        detox::evaluation::likert_ingest(c.get_string("eval.ratings"));
    const auto agree = detox::evaluation::rating_agreement(recs);
    json pairwise = json::array();
    for (const auto& p : agree.pairwise)
      pairwise.push_back({{"annotator_a", p.annotator_a},
                          {"annotator_b", p.annotator_b},
                          {"r", p.r},
                          {"common_items", p.common_items}});
    ev["rating_agreement"] = {{"annotators", agree.annotators},
                              {"mean_rating", agree.mean_rating},
                              {"pairwise", pairwise},
                              {"pooled_r", agree.pooled_r}};
    std::cout << "rating agreement: pooled Pearson r " << agree.pooled_r
              << " across " << agree.annotators.size() << " annotators\n";
    any = true;
  }

  if (!any)
    throw detox::DataError("nothing to evaluate in " + out.string() +
                           " (no detect.jsonl and no eval.* inputs)");

  const auto path = out / "evaluation.json";
  std::ofstream f(path);
  if (!f) throw detox::DataError("cannot write " + path.string());
  f << ev.dump(2) << "\n";
  if (!f.flush()) throw detox::DataError("short write to " + path.string());
  detox::pipeline::refresh_manifest(out);
  std::cout << "evaluation written to " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hate speech detection, explanation, and intensity reduction"};
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand(
      "synth", "generate a synthetic trigger-lexicon corpus");
  add_common(synth, f);
  synth->add_option("--size", f.size, "number of comments (synth.size)");
  synth->add_option("--trigger-rate", f.trigger_rate,
                    "share of hate comments (synth.trigger_rate)");
  synth->add_option("--min-words", f.min_words,
                    "minimum comment length (synth.min_words)");
  synth->add_option("--max-words", f.max_words,
                    "maximum comment length (synth.max_words)");
  synth->add_option("--corpus-out", f.corpus_out,
                    "corpus output file (synth.corpus_out)");
  synth->add_option("--truth-out", f.truth_out,
                    "ground-truth output file (synth.truth_out)");

  auto* train = app.add_subcommand(
      "train", "pretrain the encoder, train the detector, cross-validate");
  add_common(train, f);
  add_model_dirs(train, f);
  train->add_option("--folds", f.folds, "stratified fold count (train.folds)");
  train->add_flag("--no-cv", f.no_cv, "skip cross-validation (train.cv)");

  auto* detect =
      app.add_subcommand("detect", "classify a corpus with a trained detector");
  add_common(detect, f);
  add_model_dirs(detect, f);

  auto* attribute = app.add_subcommand(
      "attribute", "explain hate predictions with integrated gradients");
  add_common(attribute, f);
  add_model_dirs(attribute, f);

  auto* reduce = app.add_subcommand(
      "reduce", "rewrite attributed comments by mask-and-infill");
  add_common(reduce, f);
  add_model_dirs(reduce, f);

  auto* pipeline =
      app.add_subcommand("pipeline", "run every stage end to end");
  add_common(pipeline, f);
  add_model_dirs(pipeline, f);

  auto* evaluate = app.add_subcommand(
      "evaluate", "metrics, hate-word Jaccard, and rating agreement from dumps");
  add_common(evaluate, f);
  evaluate->add_option("--truth", f.truth,
                       "synthetic ground-truth file (eval.truth)");
  evaluate->add_option("--ratings", f.ratings,
                       "Likert ratings file (eval.ratings)");
  evaluate->add_option("--words", f.words,
                       "annotator hate-word file (eval.words)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    apply_log_level(f);
    const auto c = effective_config(f);
    if (app.got_subcommand("synth")) return cmd_synth(c);
    if (app.got_subcommand("train")) return cmd_train(c);
    if (app.got_subcommand("detect")) return cmd_stages(c, {"corpus", "detect"});
    if (app.got_subcommand("attribute"))
      return cmd_stages(c, {"corpus", "attribute"});
    if (app.got_subcommand("reduce")) return cmd_stages(c, {"reduce"});
    if (app.got_subcommand("pipeline")) return cmd_pipeline(c);
    if (app.got_subcommand("evaluate")) return cmd_evaluate(c);
    std::cerr << "error: no subcommand selected\n";
    return 1;
  } catch (const detox::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const detox::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const detox::Error& e) {
    std::cerr << "stage error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "stage error: " << e.what() << "\n";
    return 3;
  }
}
