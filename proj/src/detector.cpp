#include "detox/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <utility>

#include <json.hpp>

#include "detox/errors.hpp"
#include "detox/kernels.hpp"
#include "detox/optim.hpp"
#include "detox/rng.hpp"
#include "detox/text.hpp"

namespace detox::detector {

namespace k = detox::kernels;
using json = nlohmann::ordered_json;

namespace {

constexpr char kHeadMagic[4] = {'D', 'T', 'X', 'H'};
constexpr std::uint32_t kHeadVersion = 1;

std::array<double, 2> head_probs(const ClassifierHead& head,
                                 const std::vector<double>& pooled) {
  std::array<double, 2> z{head.b[0], head.b[1]};
  for (std::size_t j = 0; j < pooled.size(); ++j) {
    z[0] += pooled[j] * head.w[j * 2 + 0];
    z[1] += pooled[j] * head.w[j * 2 + 1];
  }
  k::softmax(z.data(), 2);
  return z;
}

int argmax_label(const std::array<double, 2>& probs) {
  return probs[1] > probs[0] ? 1 : 0;  // tie -> non-hate
}

void require_both_classes(const corpus::Corpus& c, const char* which) {
  const auto dist = corpus::class_distribution(c);
  if (c.comments.empty() || dist.hate == 0 || dist.non_hate == 0)
    throw DataError(std::string("train: ") + which +
                    " split must contain both classes (hate=" +
                    std::to_string(dist.hate) +
                    ", non_hate=" + std::to_string(dist.non_hate) + ")");
}

json config_json(const TrainingConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["weight_decay"] = c.weight_decay;
  j["warmup_fraction"] = c.warmup_fraction;
  j["max_epochs"] = c.max_epochs;
  j["early_stop_patience"] = c.early_stop_patience;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  return j;
}

TrainingConfig config_from_json(const json& j) {
  TrainingConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.warmup_fraction = j.at("warmup_fraction").get<double>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.early_stop_patience = j.at("early_stop_patience").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw UsageError("training: learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0))
    throw UsageError("training: beta1 must lie in [0, 1)");
  if (weight_decay < 0.0)
    throw UsageError("training: weight_decay must be non-negative");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw UsageError("training: warmup_fraction must lie in [0, 1)");
  if (max_epochs < 1) throw UsageError("training: max_epochs must be >= 1");
  if (early_stop_patience < 1)
    throw UsageError("training: early_stop_patience must be >= 1");
  if (batch_size < 1) throw UsageError("training: batch_size must be >= 1");
}

TrainedDetector::TrainedDetector(std::unique_ptr<encoder::TextEncoder> enc,
                                 ClassifierHead head,
                                 std::vector<EpochRecord> history,
                                 TrainingConfig config)
    : encoder_(std::move(enc)),
      head_(std::move(head)),
      history_(std::move(history)),
      config_(config) {
  if (!encoder_) throw UsageError("detector: encoder must not be null");
  if (head_.dim != encoder_->config().dim)
    throw UsageError("detector: head dimension " + std::to_string(head_.dim) +
                     " does not match encoder dimension " +
                     std::to_string(encoder_->config().dim));
  if (head_.w.size() != static_cast<std::size_t>(head_.dim) * 2 ||
      head_.b.size() != 2)
    throw UsageError("detector: malformed classifier head");
}

Prediction TrainedDetector::classify(const std::string& text) const {
  const std::string clean = corpus::preprocess(text);
  if (text::split_words(clean).empty()) {
    Prediction p;
    p.degenerate = true;  // probs (0.5, 0.5), label 0 by tie-break
    return p;
  }
  return classify_tokens(encoder_->tokenize(clean));
}

Prediction TrainedDetector::classify_tokens(
    const encoder::TokenizedText& t) const {
  const auto out = encoder_->encode(encoder_->embed(t));
  Prediction p;
  p.pooled = out.pooled;
  p.probs = head_probs(head_, out.pooled);
  p.label = argmax_label(p.probs);
  return p;
}

double TrainedDetector::class_prob(const encoder::EncoderOutput& out,
                                   int cls) const {
  if (cls != 0 && cls != 1)
    throw UsageError("class_prob: class must be 0 or 1");
  if (static_cast<int>(out.dim) != head_.dim)
    throw UsageError("class_prob: output dimension mismatch");
  return head_probs(head_, out.pooled)[static_cast<std::size_t>(cls)];
}

std::vector<double> TrainedDetector::class_prob_cotangent(
    const encoder::EncoderOutput& out, int cls) const {
  if (cls != 0 && cls != 1)
    throw UsageError("class_prob_cotangent: class must be 0 or 1");
  if (static_cast<int>(out.dim) != head_.dim)
    throw UsageError("class_prob_cotangent: output dimension mismatch");
  const auto p = head_probs(head_, out.pooled);
  const auto c = static_cast<std::size_t>(cls);
  std::array<double, 2> dz{};
  for (std::size_t j = 0; j < 2; ++j)
    dz[j] = p[c] * ((j == c ? 1.0 : 0.0) - p[j]);
  std::vector<double> dctx(out.length * out.dim, 0.0);
  for (std::size_t j = 0; j < out.dim; ++j)
    dctx[j] = head_.w[j * 2 + 0] * dz[0] + head_.w[j * 2 + 1] * dz[1];
  return dctx;
}

TrainedDetector train(std::unique_ptr<encoder::TextEncoder> enc,
                      const corpus::Corpus& train_split,
                      const corpus::Corpus& val_split,
                      const TrainingConfig& config) {
  config.validate();
  if (!enc) throw UsageError("train: encoder must not be null");
  require_both_classes(train_split, "training");
  require_both_classes(val_split, "validation");

  auto* builtin = dynamic_cast<encoder::BuiltinEncoder*>(enc.get());
  const int dim = enc->config().dim;
  detox::Rng rng(config.seed);

  ClassifierHead head;
  head.dim = dim;
  head.w.resize(static_cast<std::size_t>(dim) * 2);
  head.b.assign(2, 0.0);
  {
    auto init = rng.fork(0xC1A55F1Eull);
    for (auto& v : head.w) v = init.normal(0.0, 0.02);
  }
  std::vector<double> head_gw(head.w.size(), 0.0), head_gb(2, 0.0);

  std::vector<optim::ParamRef> refs;
  std::vector<bool> decay;
  if (builtin) {
    builtin->for_each_param([&](const std::string& name,
                                std::vector<double>& value,
                                std::vector<double>& grad) {
      refs.push_back({name, &value, &grad});
      decay.push_back(encoder::decays_weight(name));
    });
  }
  refs.push_back({"head.w", &head.w, &head_gw});
  decay.push_back(true);
  refs.push_back({"head.b", &head.b, &head_gb});
  decay.push_back(false);

  optim::AdamW::Options opts;
  opts.beta1 = config.beta1;
  opts.weight_decay = config.weight_decay;
  optim::AdamW adam(refs, decay, opts);

  // tokenize once; ids are independent of parameter state
  std::vector<encoder::TokenizedText> train_tokens, val_tokens;
  train_tokens.reserve(train_split.comments.size());
  for (const auto& c : train_split.comments)
    train_tokens.push_back(enc->tokenize(c.text));
  val_tokens.reserve(val_split.comments.size());
  for (const auto& c : val_split.comments)
    val_tokens.push_back(enc->tokenize(c.text));

  const auto n_train = train_split.comments.size();
  const auto steps_per_epoch =
      (n_train + static_cast<std::size_t>(config.batch_size) - 1) /
      static_cast<std::size_t>(config.batch_size);
  const auto total_steps =
      static_cast<std::int64_t>(steps_per_epoch) * config.max_epochs;

  // evaluates an example with the CURRENT parameters; mirrors classify()
  const auto predict_label = [&](std::size_t vi) {
    if (val_split.comments[vi].words.empty()) return 0;  // degenerate rule
    const auto out = enc->encode(enc->embed(val_tokens[vi]));
    return argmax_label(head_probs(head, out.pooled));
  };

  std::vector<EpochRecord> history;
  double best_f1 = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  ClassifierHead best_head = head;
  encoder::BuiltinEncoder::Params best_params;
  if (builtin) best_params = builtin->params();

  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < n_train;
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(n_train, start + static_cast<std::size_t>(config.batch_size));
      const double inv_m = 1.0 / static_cast<double>(end - start);
      adam.zero_grad();  // covers encoder grads and the head buffers

      for (std::size_t bi = start; bi < end; ++bi) {
        const std::size_t i = order[bi];
        const int label = train_split.comments[i].label;
        const auto y = static_cast<std::size_t>(label);
        const auto emb = enc->embed(train_tokens[i]);

        const auto head_cotangent =
            [&](const encoder::EncoderOutput& out) -> std::vector<double> {
          const auto p = head_probs(head, out.pooled);
          epoch_loss += -std::log(std::max(p[y], 1e-300));
          std::array<double, 2> dz{p[0], p[1]};
          dz[y] -= 1.0;
          std::vector<double> dctx(out.length * out.dim, 0.0);
          for (int j = 0; j < dim; ++j) {
            const auto ji = static_cast<std::size_t>(j);
            head_gw[ji * 2 + 0] += out.pooled[ji] * dz[0] * inv_m;
            head_gw[ji * 2 + 1] += out.pooled[ji] * dz[1] * inv_m;
            dctx[ji] = (head.w[ji * 2 + 0] * dz[0] + head.w[ji * 2 + 1] * dz[1]) *
                       inv_m;
          }
          head_gb[0] += dz[0] * inv_m;
          head_gb[1] += dz[1] * inv_m;
          return dctx;
        };

        if (builtin) {
          const auto [out, de] = builtin->encode_backward(emb, head_cotangent);
          (void)out;
          builtin->embed_backward(train_tokens[i], de);
        } else {
          const auto out = enc->encode(emb);
          head_cotangent(out);  // head gradients only; encoder stays frozen
        }
      }

      if (!std::isfinite(epoch_loss))
        throw StageError("train: non-finite loss at step " +
                         std::to_string(step + 1));
      ++step;
      adam.step(optim::scheduled_lr(config.learning_rate, static_cast<std::uint64_t>(step),
                                    static_cast<std::uint64_t>(total_steps),
                                    config.warmup_fraction));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(n_train);

    std::vector<int> preds, golds;
    preds.reserve(val_split.comments.size());
    golds.reserve(val_split.comments.size());
    for (std::size_t vi = 0; vi < val_split.comments.size(); ++vi) {
      preds.push_back(predict_label(vi));
      golds.push_back(val_split.comments[vi].label);
    }
    rec.val_macro_f1 =
        evaluation::classification_metrics(preds, golds).f1_macro;

    if (rec.val_macro_f1 > best_f1) {
      best_f1 = rec.val_macro_f1;
      since_best = 0;
      rec.is_best = true;
      best_head = head;
      if (builtin) best_params = builtin->params();
    } else {
      ++since_best;
    }
    history.push_back(rec);
    if (since_best >= config.early_stop_patience) break;
  }

  // restore the best validation epoch
  head = best_head;
  if (builtin) builtin->params() = best_params;

  return TrainedDetector(std::move(enc), std::move(head), std::move(history),
                         config);
}

CrossValidationReport cross_validate(const encoder::TextEncoder& base,
                                     const corpus::Corpus& corpus, int k,
                                     const TrainingConfig& config) {
  const auto folds = corpus::make_folds(corpus, k, config.seed);
  std::map<std::string, const corpus::LabeledComment*> by_id;
  for (const auto& c : corpus.comments) by_id[c.id] = &c;

  CrossValidationReport report;
  for (const auto& fold : folds) {
    detox::corpus::Corpus tr, va;
    tr.name = corpus.name + "-fold" + std::to_string(fold.fold_index) + "-train";
    va.name = corpus.name + "-fold" + std::to_string(fold.fold_index) + "-val";
    for (const auto& id : fold.train_ids) tr.comments.push_back(*by_id.at(id));
    for (const auto& id : fold.val_ids) va.comments.push_back(*by_id.at(id));

    const auto detector = train(base.clone(), tr, va, config);
    std::vector<int> preds, golds;
    preds.reserve(va.comments.size());
    golds.reserve(va.comments.size());
    for (const auto& c : va.comments) {
      preds.push_back(detector.classify(c.text).label);
      golds.push_back(c.label);
    }
    report.folds.push_back(evaluation::classification_metrics(preds, golds));
  }
  report.summary = evaluation::aggregate_folds(report.folds);
  return report;
}

void TrainedDetector::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  encoder_->save(dir / "encoder");

  json j;
  j["format_version"] = 1;
  j["encoder_kind"] = encoder_->kind();
  j["head_dim"] = head_.dim;
  j["config"] = config_json(config_);
  {
    std::ofstream out(dir / "detector.json", std::ios::binary);
    out << j.dump(2) << "\n";
    if (!out) throw DataError("could not write " + (dir / "detector.json").string());
  }

  {
    std::ofstream out(dir / "head.bin", std::ios::binary);
    out.write(kHeadMagic, 4);
    const std::uint32_t version = kHeadVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const auto dim64 = static_cast<std::uint64_t>(head_.dim);
    out.write(reinterpret_cast<const char*>(&dim64), sizeof dim64);
    out.write(reinterpret_cast<const char*>(head_.w.data()),
              static_cast<std::streamsize>(head_.w.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(head_.b.data()),
              static_cast<std::streamsize>(head_.b.size() * sizeof(double)));
    if (!out) throw DataError("could not write " + (dir / "head.bin").string());
  }

  {
    std::ofstream out(dir / "history.jsonl", std::ios::binary);
    for (const auto& rec : history_) {
      json r;
      r["epoch"] = rec.epoch;
      r["train_loss"] = rec.train_loss;
      r["val_macro_f1"] = rec.val_macro_f1;
      r["is_best"] = rec.is_best;
      out << r.dump() << "\n";
    }
    if (!out)
      throw DataError("could not write " + (dir / "history.jsonl").string());
  }
}

TrainedDetector TrainedDetector::load(const std::filesystem::path& dir) {
  const auto jpath = dir / "detector.json";
  std::ifstream in(jpath, std::ios::binary);
  if (!in) throw DataError("could not open " + jpath.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(jpath.string() + ": " + e.what());
  }

  TrainingConfig config;
  std::string kind;
  int head_dim = 0;
  try {
    if (j.at("format_version").get<int>() != 1)
      throw DataError(jpath.string() + ": unsupported format version");
    kind = j.at("encoder_kind").get<std::string>();
    head_dim = j.at("head_dim").get<int>();
    config = config_from_json(j.at("config"));
  } catch (const json::exception& e) {
    throw DataError(jpath.string() + ": " + e.what());
  }

  std::unique_ptr<encoder::TextEncoder> enc;
  if (kind == "builtin") {
    enc = encoder::BuiltinEncoder::load(dir / "encoder");
  } else if (kind == "external") {
    enc = encoder::make_encoder("external", encoder::EncoderConfig{}, nullptr,
                                dir / "encoder");
  } else {
    throw DataError(jpath.string() + ": unknown encoder kind `" + kind + "`");
  }

  ClassifierHead head;
  head.dim = head_dim;
  {
    const auto hpath = dir / "head.bin";
    std::ifstream hin(hpath, std::ios::binary);
    if (!hin) throw DataError("could not open " + hpath.string());
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t dim64 = 0;
    hin.read(magic, 4);
    hin.read(reinterpret_cast<char*>(&version), sizeof version);
    hin.read(reinterpret_cast<char*>(&dim64), sizeof dim64);
    if (!hin || std::memcmp(magic, kHeadMagic, 4) != 0 ||
        version != kHeadVersion ||
        dim64 != static_cast<std::uint64_t>(head_dim))
      throw DataError(hpath.string() + ": malformed classifier head file");
    head.w.resize(static_cast<std::size_t>(head_dim) * 2);
    head.b.resize(2);
    hin.read(reinterpret_cast<char*>(head.w.data()),
             static_cast<std::streamsize>(head.w.size() * sizeof(double)));
    hin.read(reinterpret_cast<char*>(head.b.data()),
             static_cast<std::streamsize>(head.b.size() * sizeof(double)));
    if (!hin) throw DataError(hpath.string() + ": truncated classifier head");
  }

  std::vector<EpochRecord> history;
  {
    const auto hpath = dir / "history.jsonl";
    std::ifstream hin(hpath, std::ios::binary);
    if (!hin) throw DataError("could not open " + hpath.string());
    std::string line;
    while (std::getline(hin, line)) {
      if (line.empty()) continue;
      try {
        const json r = json::parse(line);
        EpochRecord rec;
        rec.epoch = r.at("epoch").get<int>();
        rec.train_loss = r.at("train_loss").get<double>();
        rec.val_macro_f1 = r.at("val_macro_f1").get<double>();
        rec.is_best = r.at("is_best").get<bool>();
        history.push_back(rec);
      } catch (const json::exception& e) {
        throw DataError(hpath.string() + ": " + e.what());
      }
    }
  }

  return TrainedDetector(std::move(enc), std::move(head), std::move(history),
                         config);
}

}  // namespace detox::detector
