#include "detox/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <unordered_map>

#include "detox/attribution.hpp"
#include "detox/corpus.hpp"
#include "detox/errors.hpp"
#include "detox/runio.hpp"
#include "detox/text.hpp"

namespace detox::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---- configuration ---------------------------------------------------------

fs::path RunConfig::mlm_source() const {
  return encoder_dir.empty() ? out_dir / "encoder" : encoder_dir;
}

fs::path RunConfig::detector_source() const {
  return detector_dir.empty() ? out_dir / "detector" : detector_dir;
}

void RunConfig::validate() const {
  if (out_dir.empty()) throw UsageError("missing config key `io.out`");
  if (corpus_file.empty()) throw UsageError("missing config key `io.corpus`");
  if (!fs::exists(corpus_file))
    throw DataError("corpus file not found: " + corpus_file.string());
  if (corpus_format != "jsonl")
    corpus::parse_format(corpus_format);  // UsageError on unknown names
  if (encoder_kind != "builtin" && encoder_kind != "external")
    throw UsageError("config key `encoder.kind`: expected builtin or "
                     "external, got `" +
                     encoder_kind + "`");
  if (encoder_kind == "external") {
    if (external_encoder_dir.empty())
      throw UsageError("missing config key `encoder.external_dir`");
    if (!fs::exists(external_encoder_dir))
      throw DataError("external encoder directory not found: " +
                      external_encoder_dir.string());
  }
  encoder.validate();
  training.validate();
  reduction.validate();
  if (folds < 2)
    throw UsageError("config key `train.folds`: expected at least 2, got " +
                     std::to_string(folds));
  if (pretrain.epochs < 0 || pretrain.batch_size < 1 ||
      !(pretrain.learning_rate > 0.0) || !(pretrain.weight_decay >= 0.0) ||
      !(pretrain.mask_fraction > 0.0 && pretrain.mask_fraction <= 1.0) ||
      !(pretrain.warmup_fraction >= 0.0 && pretrain.warmup_fraction <= 1.0))
    throw UsageError("pretrain settings out of range (epochs >= 0, "
                     "batch_size >= 1, learning_rate > 0, weight_decay >= 0, "
                     "mask_fraction in (0, 1], warmup_fraction in [0, 1])");
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "run.seed",
      "io.corpus",
      "io.format",
      "io.out",
      "io.encoder",
      "io.detector",
      "encoder.kind",
      "encoder.external_dir",
      "encoder.vocab_size",
      "encoder.dim",
      "encoder.layers",
      "encoder.heads",
      "encoder.max_length",
      "pretrain.epochs",
      "pretrain.batch_size",
      "pretrain.learning_rate",
      "pretrain.weight_decay",
      "pretrain.mask_fraction",
      "pretrain.warmup_fraction",
      "train.learning_rate",
      "train.weight_decay",
      "train.warmup_fraction",
      "train.max_epochs",
      "train.early_stop_patience",
      "train.batch_size",
      "train.folds",
      "train.cv",
      "ig.steps",
      "ig.quadrature",
      "ig.k",
      "ig.token_reduce",
      "reduce.mask_fraction",
      "reduce.candidates",
      "synth.size",
      "synth.trigger_rate",
      "synth.min_words",
      "synth.max_words",
      "synth.corpus_out",
      "synth.truth_out",
      "eval.truth",
      "eval.ratings",
      "eval.words",
  };
  return keys;
}

namespace {

int to_int(const config::Config& flat, const std::string& key, int fallback) {
  return static_cast<int>(flat.get_int(key, fallback));
}

// Shortest decimal form that parses back to the same double.
std::string real_str(double v) { return json(v).dump(); }

}  // namespace

RunConfig run_config_from(const config::Config& flat) {
  RunConfig rc;
  rc.seed = flat.get_u64("run.seed", 1);

  rc.corpus_file = flat.get_string("io.corpus", "");
  rc.corpus_format = flat.get_string("io.format", "jsonl");
  rc.out_dir = flat.get_string("io.out", "");
  rc.encoder_dir = flat.get_string("io.encoder", "");
  rc.detector_dir = flat.get_string("io.detector", "");

  rc.encoder_kind = flat.get_string("encoder.kind", "builtin");
  rc.external_encoder_dir = flat.get_string("encoder.external_dir", "");
  rc.encoder.vocab_size = to_int(flat, "encoder.vocab_size", 4096);
  rc.encoder.dim = to_int(flat, "encoder.dim", 64);
  rc.encoder.layers = to_int(flat, "encoder.layers", 2);
  rc.encoder.heads = to_int(flat, "encoder.heads", 2);
  rc.encoder.max_length = to_int(flat, "encoder.max_length", 64);
  rc.encoder.seed = rc.seed;

  rc.pretrain.epochs = to_int(flat, "pretrain.epochs", 10);
  rc.pretrain.batch_size = to_int(flat, "pretrain.batch_size", 16);
  rc.pretrain.learning_rate = flat.get_real("pretrain.learning_rate", 3e-4);
  rc.pretrain.weight_decay = flat.get_real("pretrain.weight_decay", 0.01);
  rc.pretrain.mask_fraction = flat.get_real("pretrain.mask_fraction", 0.15);
  rc.pretrain.warmup_fraction =
      flat.get_real("pretrain.warmup_fraction", 0.10);
  rc.pretrain.seed = rc.seed;

  rc.training.learning_rate = flat.get_real("train.learning_rate", 1e-5);
  rc.training.weight_decay = flat.get_real("train.weight_decay", 0.01);
  rc.training.warmup_fraction = flat.get_real("train.warmup_fraction", 0.10);
  rc.training.max_epochs = to_int(flat, "train.max_epochs", 10);
  rc.training.early_stop_patience =
      to_int(flat, "train.early_stop_patience", 3);
  rc.training.batch_size = to_int(flat, "train.batch_size", 16);
  rc.training.seed = rc.seed;
  rc.folds = to_int(flat, "train.folds", 5);

  rc.reduction.ig.steps = to_int(flat, "ig.steps", 50);
  rc.reduction.ig.quadrature =
      attribution::parse_quadrature(flat.get_string("ig.quadrature", "midpoint"));
  rc.reduction.ig.k = to_int(flat, "ig.k", 5);
  rc.reduction.ig.token_reduce =
      attribution::parse_token_reduce(flat.get_string("ig.token_reduce", "sum"));
  rc.reduction.mask_fraction = flat.get_real("reduce.mask_fraction", 0.5);
  rc.reduction.candidates = to_int(flat, "reduce.candidates", 10);

  return rc;
}

config::Config to_flat_config(const RunConfig& rc) {
  config::Config c;
  c.set("run.seed", std::to_string(rc.seed));
  // io.out is deliberately absent: the snapshot describes the run, and the
  // same run placed in two directories must snapshot (and manifest)
  // identically.
  c.set("io.corpus", rc.corpus_file.generic_string());
  c.set("io.format", rc.corpus_format);
  if (!rc.encoder_dir.empty())
    c.set("io.encoder", rc.encoder_dir.generic_string());
  if (!rc.detector_dir.empty())
    c.set("io.detector", rc.detector_dir.generic_string());

  c.set("encoder.kind", rc.encoder_kind);
  if (!rc.external_encoder_dir.empty())
    c.set("encoder.external_dir", rc.external_encoder_dir.generic_string());
  c.set("encoder.vocab_size", std::to_string(rc.encoder.vocab_size));
  c.set("encoder.dim", std::to_string(rc.encoder.dim));
  c.set("encoder.layers", std::to_string(rc.encoder.layers));
  c.set("encoder.heads", std::to_string(rc.encoder.heads));
  c.set("encoder.max_length", std::to_string(rc.encoder.max_length));

  c.set("pretrain.epochs", std::to_string(rc.pretrain.epochs));
  c.set("pretrain.batch_size", std::to_string(rc.pretrain.batch_size));
  c.set("pretrain.learning_rate", real_str(rc.pretrain.learning_rate));
  c.set("pretrain.weight_decay", real_str(rc.pretrain.weight_decay));
  c.set("pretrain.mask_fraction", real_str(rc.pretrain.mask_fraction));
  c.set("pretrain.warmup_fraction", real_str(rc.pretrain.warmup_fraction));

  c.set("train.learning_rate", real_str(rc.training.learning_rate));
  c.set("train.weight_decay", real_str(rc.training.weight_decay));
  c.set("train.warmup_fraction", real_str(rc.training.warmup_fraction));
  c.set("train.max_epochs", std::to_string(rc.training.max_epochs));
  c.set("train.early_stop_patience",
        std::to_string(rc.training.early_stop_patience));
  c.set("train.batch_size", std::to_string(rc.training.batch_size));
  c.set("train.folds", std::to_string(rc.folds));

  c.set("ig.steps", std::to_string(rc.reduction.ig.steps));
  c.set("ig.quadrature",
        attribution::quadrature_name(rc.reduction.ig.quadrature));
  c.set("ig.k", std::to_string(rc.reduction.ig.k));
  c.set("ig.token_reduce",
        attribution::token_reduce_name(rc.reduction.ig.token_reduce));
  c.set("reduce.mask_fraction", real_str(rc.reduction.mask_fraction));
  c.set("reduce.candidates", std::to_string(rc.reduction.candidates));
  return c;
}

// ---- stages ------------------------------------------------------------------

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {
      "corpus", "mlm", "train", "detect", "attribute", "reduce", "report"};
  return names;
}

namespace {

// Stages communicate only through the run directory, so a resumed run sees
// exactly what an uninterrupted one does; the session merely caches loads
// within one invocation.
struct Session {
  const RunConfig& rc;

  std::optional<corpus::Corpus> corpus_;
  std::unique_ptr<encoder::TextEncoder> mlm_;
  std::optional<detector::TrainedDetector> det_;

  const corpus::Corpus& corpus() {
    if (!corpus_) {
      const auto snap = rc.out_dir / "corpus.jsonl";
      if (!fs::exists(snap))
        throw DataError("corpus snapshot not found at " + snap.string() +
                        " (run the corpus stage first)");
      corpus_ = corpus::load_jsonl(snap, "corpus", corpus::Split::All);
    }
    return *corpus_;
  }

  const encoder::TextEncoder& mlm() {
    if (!mlm_) {
      const auto dir = rc.mlm_source();
      if (!fs::exists(dir / "manifest.json"))
        throw DataError("no encoder found at " + dir.string() +
                        " (run the mlm stage or set io.encoder)");
      mlm_ = rc.encoder_kind == "builtin"
                 ? std::unique_ptr<encoder::TextEncoder>(
                       encoder::BuiltinEncoder::load(dir))
                 : encoder::make_encoder("external", rc.encoder, nullptr, dir);
    }
    return *mlm_;
  }

  const detector::TrainedDetector& det() {
    if (!det_) {
      const auto dir = rc.detector_source();
      if (!fs::exists(dir / "detector.json"))
        throw DataError("no trained detector at " + dir.string() +
                        " (run the train stage or set io.detector)");
      det_ = detector::TrainedDetector::load(dir);
    }
    return *det_;
  }
};

std::string failure_record(const std::string& id, const std::string& stage,
                           const std::string& error) {
  json j;
  j["id"] = id;
  j["stage"] = stage;
  j["error"] = error;
  return j.dump();
}

void stage_corpus(Session& s, RunRecord&) {
  const auto& rc = s.rc;
  corpus::Corpus c =
      rc.corpus_format == "jsonl"
          ? corpus::load_jsonl(rc.corpus_file, "corpus", corpus::Split::All)
          : corpus::load_corpus(rc.corpus_file,
                                corpus::parse_format(rc.corpus_format),
                                corpus::Split::All);
  if (c.comments.empty())
    throw DataError("corpus is empty: " + rc.corpus_file.string());
  corpus::save_jsonl(c, rc.out_dir / "corpus.jsonl");
  const auto dist = corpus::class_distribution(c);
  runio::log_info("corpus: " + std::to_string(c.size()) + " comments (" +
                  std::to_string(dist.hate) + " hate, " +
                  std::to_string(dist.non_hate) + " non-hate)");
}

void stage_mlm(Session& s, RunRecord&) {
  const auto& rc = s.rc;
  if (!rc.encoder_dir.empty()) {
    runio::log_info("mlm: using supplied encoder at " +
                    rc.encoder_dir.string());
    return;
  }
  const auto dest = rc.out_dir / "encoder";
  if (rc.encoder_kind == "builtin") {
    auto enc =
        encoder::make_encoder("builtin", rc.encoder, &s.corpus(), {});
    auto* builtin = dynamic_cast<encoder::BuiltinEncoder*>(enc.get());
    const auto report =
        encoder::pretrain_mlm(*builtin, s.corpus(), rc.pretrain);
    for (std::size_t e = 0; e < report.epoch_losses.size(); ++e)
      runio::log_debug("mlm: epoch " + std::to_string(e + 1) + " loss " +
                       std::to_string(report.epoch_losses[e]));
    if (!report.epoch_losses.empty())
      runio::log_info("mlm: " +
                      std::to_string(report.epoch_losses.size()) +
                      " epochs, final loss " +
                      std::to_string(report.epoch_losses.back()));
    enc->save(dest);
  } else {
    auto enc = encoder::make_encoder("external", rc.encoder, nullptr,
                                     rc.external_encoder_dir);
    enc->save(dest);
    runio::log_info("mlm: external encoder copied into the run directory");
  }
}

void stage_train(Session& s, RunRecord&) {
  const auto& rc = s.rc;
  if (!rc.detector_dir.empty()) {
    runio::log_info("train: using supplied detector at " +
                    rc.detector_dir.string());
    return;
  }
  const auto& c = s.corpus();

  const auto folds = corpus::make_folds(c, rc.folds, rc.seed);
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < c.comments.size(); ++i)
    by_id.emplace(c.comments[i].id, i);
  const auto pick = [&](const std::vector<std::string>& ids,
                        corpus::Split split) {
    corpus::Corpus part;
    part.name = c.name;
    part.split = split;
    for (const auto& id : ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end())
        throw StageError("fold references unknown comment id " + id);
      part.comments.push_back(c.comments[it->second]);
    }
    return part;
  };
  const auto train_split = pick(folds[0].train_ids, corpus::Split::Train);
  const auto val_split = pick(folds[0].val_ids, corpus::Split::Val);

  std::unique_ptr<encoder::TextEncoder> enc =
      rc.encoder_kind == "builtin"
          ? std::unique_ptr<encoder::TextEncoder>(
                encoder::BuiltinEncoder::load(rc.mlm_source()))
          : encoder::make_encoder("external", rc.encoder, nullptr,
                                  rc.mlm_source());
  auto det =
      detector::train(std::move(enc), train_split, val_split, rc.training);

  double best = 0.0;
  for (const auto& rec : det.history())
    if (rec.is_best) best = rec.val_macro_f1;
  runio::log_info("train: " + std::to_string(det.history().size()) +
                  " epochs, best validation macro-F1 " +
                  std::to_string(best));
  det.save(rc.out_dir / "detector");
}

void stage_detect(Session& s, RunRecord& rec) {
  const auto& rc = s.rc;
  const auto& c = s.corpus();
  const auto& det = s.det();

  runio::JsonlWriter dump(rc.out_dir / "detect.jsonl");
  runio::JsonlWriter fails(rc.out_dir / "detect.failures.jsonl");
  std::size_t hate = 0;
  for (const auto& comment : c.comments) {
    try {
      const auto p = det.classify(comment.text);
      json j;
      j["id"] = comment.id;
      j["predicted_label"] = p.label;
      j["gold_label"] = comment.label;
      j["probs"] = {p.probs[0], p.probs[1]};
      j["degenerate"] = p.degenerate;
      dump.write(j.dump());
      hate += p.label == 1;
    } catch (const std::exception& e) {
      fails.write(failure_record(comment.id, "detect", e.what()));
      ++rec.failures;
    }
  }
  dump.close();
  fails.close();
  runio::log_info("detect: " + std::to_string(dump.lines()) + " comments, " +
                  std::to_string(hate) + " predicted hate, " +
                  std::to_string(fails.lines()) + " failures");
}

void stage_attribute(Session& s, RunRecord& rec) {
  const auto& rc = s.rc;
  const auto& c = s.corpus();
  const auto& det = s.det();

  runio::JsonlWriter dump(rc.out_dir / "attribute.jsonl");
  runio::JsonlWriter fails(rc.out_dir / "attribute.failures.jsonl");
  double residual_sum = 0.0;
  for (const auto& comment : c.comments) {
    try {
      // One cheap forward pass gates the expensive gradient path.
      if (det.classify(comment.text).label != 1) continue;
      const auto r = attribution::attribute(det, comment.text, rc.reduction.ig);
      if (r.degenerate || r.predicted_label != 1) continue;
      dump.write(attribution::to_json_record(r, comment.id));
      residual_sum += r.completeness_residual;
    } catch (const std::exception& e) {
      fails.write(failure_record(comment.id, "attribute", e.what()));
      ++rec.failures;
    }
  }
  dump.close();
  fails.close();
  const auto n = dump.lines();
  runio::log_info(
      "attribute: " + std::to_string(n) + " hate-predicted comments, mean "
      "completeness residual " +
      std::to_string(n ? residual_sum / static_cast<double>(n) : 0.0) + ", " +
      std::to_string(fails.lines()) + " failures");
}

// Rebuilds the attribution fields the reduction stage consumes from one
// dumped record, so `reduce` composes with a prior `attribute` run.
struct DumpedAttribution {
  std::string id;
  attribution::AttributionResult result;
};

DumpedAttribution parse_attribution_record(const std::string& line,
                                           const fs::path& file,
                                           std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(file.string() + ":" + std::to_string(line_no) + ": " +
                    e.what());
  }
  try {
    DumpedAttribution d;
    d.id = j.at("id").get<std::string>();
    auto& r = d.result;
    r.degenerate = j.at("degenerate").get<bool>();
    r.predicted_label = j.at("predicted_label").get<int>();
    r.target_class = j.at("target_class").get<int>();
    r.probs = {j.at("probs")[0].get<double>(), j.at("probs")[1].get<double>()};
    const auto& scores = j.at("word_scores");
    r.words.resize(scores.size());
    r.word_scores.resize(scores.size(), 0.0);
    for (const auto& w : scores) {
      const auto pos = w.at("position").get<std::size_t>();
      if (pos >= r.words.size())
        throw DataError(file.string() + ":" + std::to_string(line_no) +
                        ": word position out of range");
      r.words[pos] = w.at("word").get<std::string>();
      r.word_scores[pos] = w.at("score").get<double>();
    }
    for (const auto& t : j.at("top_words"))
      r.top_words.push_back({t.at("word").get<std::string>(),
                             t.at("position").get<int>(),
                             t.at("score").get<double>()});
    r.completeness_residual = j.at("completeness_residual").get<double>();
    return d;
  } catch (const json::exception& e) {
    throw DataError(file.string() + ":" + std::to_string(line_no) + ": " +
                    e.what());
  }
}

void stage_reduce(Session& s, RunRecord& rec) {
  const auto& rc = s.rc;
  const auto src = rc.out_dir / "attribute.jsonl";
  if (!fs::exists(src))
    throw DataError("attribution dump not found at " + src.string() +
                    " (run the attribute stage first)");
  const auto lines = runio::read_lines(src);

  const auto& det = s.det();
  const auto& mlm = s.mlm();

  runio::JsonlWriter dump(rc.out_dir / "reduce.jsonl");
  runio::JsonlWriter fails(rc.out_dir / "reduce.failures.jsonl");
  std::size_t rewritten = 0, still = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto d = parse_attribution_record(lines[i], src, i + 1);
    try {
      const auto r =
          reducer::reduce_from_attribution(det, mlm, d.result, rc.reduction);
      dump.write(reducer::to_json_record(r, d.id));
      rewritten += r.reduced;
      still += r.reduced && r.residual.still_hate;
    } catch (const std::exception& e) {
      fails.write(failure_record(d.id, "reduce", e.what()));
      ++rec.failures;
    }
  }
  dump.close();
  fails.close();
  runio::log_info("reduce: " + std::to_string(dump.lines()) + " attempted, " +
                  std::to_string(rewritten) + " rewritten, " +
                  std::to_string(still) + " still hate, " +
                  std::to_string(fails.lines()) + " failures");
}

std::size_t count_lines(const fs::path& path) {
  return fs::exists(path) ? runio::read_lines(path).size() : 0;
}

void stage_report(Session& s, RunRecord&) {
  const auto& rc = s.rc;
  for (const char* need : {"detect.jsonl", "attribute.jsonl", "reduce.jsonl"})
    if (!fs::exists(rc.out_dir / need))
      throw DataError(std::string(need) + " not found in " +
                      rc.out_dir.string() + " (run the earlier stages first)");

  json summary;

  // Detection metrics against the gold labels carried in the dump.
  std::vector<int> preds, golds;
  std::size_t hate_detected = 0;
  for (const auto& line : runio::read_lines(rc.out_dir / "detect.jsonl")) {
    const auto j = json::parse(line);
    preds.push_back(j.at("predicted_label").get<int>());
    golds.push_back(j.at("gold_label").get<int>());
    hate_detected += preds.back() == 1;
  }
  summary["comments"] = preds.size();
  if (!preds.empty()) {
    summary["detection"] = metrics_to_json(
        evaluation::classification_metrics(preds, golds));
    summary["detection"]["hate_detected"] = hate_detected;
  }

  // Attribution: dump size and mean completeness residual.
  double residual_sum = 0.0;
  double top_words_sum = 0.0;
  std::size_t attributed = 0;
  for (const auto& line : runio::read_lines(rc.out_dir / "attribute.jsonl")) {
    const auto j = json::parse(line);
    residual_sum += j.at("completeness_residual").get<double>();
    top_words_sum += j.at("top_words").size();
    ++attributed;
  }
  summary["attribution"] = {
      {"records", attributed},
      {"mean_completeness_residual",
       attributed ? residual_sum / static_cast<double>(attributed) : 0.0},
      {"mean_top_words",
       attributed ? top_words_sum / static_cast<double>(attributed) : 0.0},
  };

  // Reduction: rewrite rate, residual-hate rate, skip taxonomy.
  std::size_t attempted = 0, rewritten = 0, still = 0;
  double chosen_f1_sum = 0.0;
  std::map<std::string, std::size_t> skips;
  for (const auto& line : runio::read_lines(rc.out_dir / "reduce.jsonl")) {
    const auto j = json::parse(line);
    ++attempted;
    if (j.at("reduced").get<bool>()) {
      ++rewritten;
      still += j.at("still_hate").get<bool>();
      chosen_f1_sum += j.at("chosen_f1").get<double>();
    } else {
      ++skips[j.at("skip_reason").get<std::string>()];
    }
  }
  json skips_json = json::object();
  for (const auto& [reason, n] : skips) skips_json[reason] = n;
  summary["reduction"] = {
      {"attempted", attempted},
      {"rewritten", rewritten},
      {"rewrite_rate",
       attempted ? static_cast<double>(rewritten) / attempted : 0.0},
      {"residual_hate", still},
      {"residual_hate_rate",
       rewritten ? static_cast<double>(still) / rewritten : 0.0},
      {"mean_chosen_f1",
       rewritten ? chosen_f1_sum / static_cast<double>(rewritten) : 0.0},
      {"skips", skips_json},
  };

  const auto detect_fails = count_lines(rc.out_dir / "detect.failures.jsonl");
  const auto attr_fails = count_lines(rc.out_dir / "attribute.failures.jsonl");
  const auto reduce_fails = count_lines(rc.out_dir / "reduce.failures.jsonl");
  summary["failures"] = {
      {"detect", detect_fails},
      {"attribute", attr_fails},
      {"reduce", reduce_fails},
      {"total", detect_fails + attr_fails + reduce_fails},
  };

  const auto path = rc.out_dir / "summary.json";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << summary.dump(2) << "\n";
  if (!out.flush()) throw DataError("short write to " + path.string());
  runio::log_info("report: summary written to " + path.string());
}

void write_timings(const RunConfig& rc, const RunRecord& rec) {
  json j;
  j["stages"] = json::array();
  for (const auto& t : rec.timings)
    j["stages"].push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  const auto path = rc.out_dir / "timings.json";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// Every data artifact in the run directory; bookkeeping files (the manifest
// itself, timings, stage markers) stay out so equal runs hash equally.
std::vector<std::string> manifest_files(const fs::path& out_dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel =
        fs::relative(entry.path(), out_dir).generic_string();
    if (rel == "manifest.json" || rel == "timings.json") continue;
    if (rel.rfind("stages/", 0) == 0) continue;
    files.push_back(rel);
  }
  return files;
}

}  // namespace

RunRecord run_stages(const RunConfig& rc,
                     const std::vector<std::string>& stages) {
  rc.validate();
  fs::create_directories(rc.out_dir);

  const std::set<std::string> want(stages.begin(), stages.end());
  for (const auto& name : want)
    if (std::find(stage_names().begin(), stage_names().end(), name) ==
        stage_names().end())
      throw UsageError("unknown stage `" + name + "`");

  using StageFn = std::function<void(Session&, RunRecord&)>;
  static const std::map<std::string, StageFn> bodies = {
      {"corpus", stage_corpus},   {"mlm", stage_mlm},
      {"train", stage_train},     {"detect", stage_detect},
      {"attribute", stage_attribute}, {"reduce", stage_reduce},
      {"report", stage_report},
  };

  Session s{rc, {}, nullptr, {}};
  RunRecord rec;
  rec.out_dir = rc.out_dir;
  for (const auto& name : stage_names()) {
    if (!want.count(name)) continue;
    if (runio::stage_done(rc.out_dir, name)) {
      runio::log_debug("stage " + name + ": already complete, skipping");
      rec.stages_skipped.push_back(name);
      continue;
    }
    const auto begin = std::chrono::steady_clock::now();
    bodies.at(name)(s, rec);
    runio::mark_stage_done(rc.out_dir, name);
    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - begin;
    rec.stages_run.push_back(name);
    rec.timings.push_back({name, elapsed.count()});
  }
  rec.comments = s.corpus_ ? s.corpus_->size() : 0;

  write_timings(rc, rec);
  refresh_manifest(rc.out_dir);
  return rec;
}

RunRecord run_pipeline(const RunConfig& rc) {
  rc.validate();
  fs::create_directories(rc.out_dir);

  const auto snapshot = to_flat_config(rc).canonical();
  const auto snap_path = rc.out_dir / "config.snapshot";
  if (fs::exists(snap_path)) {
    std::ifstream in(snap_path, std::ios::binary);
    const std::string existing(std::istreambuf_iterator<char>(in), {});
    if (existing != snapshot)
      throw UsageError(
          "run directory " + rc.out_dir.string() +
          " was created under a different configuration; use a fresh "
          "directory (or the original settings) to resume");
  } else {
    std::ofstream out(snap_path, std::ios::binary);
    if (!out) throw DataError("cannot write " + snap_path.string());
    out << snapshot;
    if (!out.flush()) throw DataError("short write to " + snap_path.string());
  }
  return run_stages(rc, stage_names());
}

CrossValidationOutcome run_cross_validation(const RunConfig& rc) {
  rc.validate();
  CrossValidationOutcome out;
  if (runio::stage_done(rc.out_dir, "cv")) {
    runio::log_debug("cv: already complete, skipping");
    return out;
  }

  Session s{rc, {}, nullptr, {}};
  const auto& c = s.corpus();
  std::unique_ptr<encoder::TextEncoder> base =
      rc.encoder_kind == "builtin"
          ? std::unique_ptr<encoder::TextEncoder>(
                encoder::BuiltinEncoder::load(rc.mlm_source()))
          : encoder::make_encoder("external", rc.encoder, nullptr,
                                  rc.mlm_source());
  out.report = detector::cross_validate(*base, c, rc.folds, rc.training);
  out.ran = true;

  json j;
  j["k"] = rc.folds;
  j["folds"] = json::array();
  for (const auto& fold : out.report.folds)
    j["folds"].push_back(metrics_to_json(fold));
  j["summary"] = fold_summary_to_json(out.report.summary);
  const auto path = rc.out_dir / "cv_report.json";
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << j.dump(2) << "\n";
  if (!f.flush()) throw DataError("short write to " + path.string());

  runio::mark_stage_done(rc.out_dir, "cv");
  refresh_manifest(rc.out_dir);
  runio::log_info("cv: " + std::to_string(rc.folds) + "-fold macro-F1 " +
                  out.report.summary.f1_macro.formatted());
  return out;
}

void refresh_manifest(const fs::path& out_dir) {
  runio::write_manifest(out_dir, manifest_files(out_dir));
}

// ---- JSON views --------------------------------------------------------------

json metrics_to_json(const evaluation::MetricsReport& m) {
  json per_class = json::array();
  for (int c = 0; c < 2; ++c)
    per_class.push_back({{"label", c},
                         {"precision", m.precision_per_class[c]},
                         {"recall", m.recall_per_class[c]},
                         {"f1", m.f1_per_class[c]},
                         {"support", m.support[c]}});
  return json{{"accuracy", m.accuracy},
              {"precision_macro", m.precision_macro},
              {"recall_macro", m.recall_macro},
              {"f1_macro", m.f1_macro},
              {"precision_micro", m.precision_micro},
              {"recall_micro", m.recall_micro},
              {"f1_micro", m.f1_micro},
              {"per_class", per_class}};
}

json fold_summary_to_json(const evaluation::FoldSummary& s) {
  const auto cell = [](const evaluation::MeanStd& m) {
    return json{{"mean", m.mean}, {"std", m.std}, {"formatted", m.formatted()}};
  };
  return json{{"accuracy", cell(s.accuracy)},
              {"precision_macro", cell(s.precision_macro)},
              {"recall_macro", cell(s.recall_macro)},
              {"f1_macro", cell(s.f1_macro)},
              {"precision_micro", cell(s.precision_micro)},
              {"recall_micro", cell(s.recall_micro)},
              {"f1_micro", cell(s.f1_micro)}};
}

}  // namespace detox::pipeline
