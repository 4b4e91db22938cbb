#include <algorithm>
#include <cmath>
#include <numeric>

#include "detox/encoder.hpp"
#include "detox/errors.hpp"
#include "detox/kernels.hpp"
#include "detox/optim.hpp"
#include "detox/rng.hpp"

namespace detox::encoder {
namespace k = detox::kernels;

PretrainReport pretrain_mlm(BuiltinEncoder& enc, const corpus::Corpus& corpus,
                            const PretrainConfig& cfg) {
  if (cfg.epochs < 1) throw UsageError("pretrain.epochs must be >= 1");
  if (cfg.batch_size < 1) throw UsageError("pretrain.batch_size must be >= 1");
  if (cfg.mask_fraction <= 0.0 || cfg.mask_fraction > 1.0)
    throw UsageError("pretrain.mask_fraction must be in (0, 1]");

  // tokenize once; keep only sequences with at least one content position
  std::vector<TokenizedText> examples;
  examples.reserve(corpus.size());
  for (const auto& c : corpus.comments) {
    TokenizedText t = enc.tokenize(c.text);
    bool has_content = false;
    for (const int w : t.word_index)
      if (w != kSpecialWord) has_content = true;
    if (has_content) examples.push_back(std::move(t));
  }
  if (examples.empty())
    throw StageError("masked-language pretraining needs non-empty texts");

  std::vector<optim::ParamRef> refs;
  std::vector<bool> decay;
  enc.for_each_param([&](const std::string& name, std::vector<double>& v,
                         std::vector<double>& g) {
    refs.push_back({name, &v, &g});
    decay.push_back(decays_weight(name));
  });
  optim::AdamW::Options opt;
  opt.weight_decay = cfg.weight_decay;
  optim::AdamW adam(std::move(refs), std::move(decay), opt);

  const std::size_t batches_per_epoch =
      (examples.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size);
  const std::uint64_t total_steps =
      static_cast<std::uint64_t>(cfg.epochs) * batches_per_epoch;

  detox::Rng rng(cfg.seed);
  const auto V = static_cast<std::size_t>(enc.config().vocab_size);

  PretrainReport report;
  std::uint64_t step = 0;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;

    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t lo = b * static_cast<std::size_t>(cfg.batch_size);
      const std::size_t hi =
          std::min(lo + static_cast<std::size_t>(cfg.batch_size),
                   examples.size());
      enc.zero_grads();

      // count masked tokens in the batch first so gradients are the mean
      struct Plan {
        std::size_t example;
        std::vector<std::size_t> masked;
      };
      std::vector<Plan> plans;
      std::size_t batch_tokens = 0;
      for (std::size_t e = lo; e < hi; ++e) {
        const TokenizedText& t = examples[order[e]];
        std::vector<std::size_t> content;
        for (std::size_t i = 0; i < t.size(); ++i)
          if (t.word_index[i] != kSpecialWord) content.push_back(i);
        rng.shuffle(content);
        const auto want = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(
                   cfg.mask_fraction * static_cast<double>(content.size()))));
        content.resize(std::min(want, content.size()));
        std::sort(content.begin(), content.end());
        batch_tokens += content.size();
        plans.push_back({order[e], std::move(content)});
      }
      if (batch_tokens == 0) continue;

      double batch_loss = 0.0;
      for (const Plan& plan : plans) {
        TokenizedText masked = examples[plan.example];
        for (const std::size_t pos : plan.masked)
          masked.subword_ids[pos] = enc.config().mask_token_id;

        const EmbeddingSequence e = enc.embed(masked);
        auto cot = [&](const EncoderOutput& out) {
          std::vector<double> dctx(out.length * out.dim, 0.0);
          for (const std::size_t pos : plan.masked) {
            std::vector<double> z = enc.mlm_logits(out, pos);
            k::softmax(z.data(), V);
            const auto target = static_cast<std::size_t>(
                examples[plan.example].subword_ids[pos]);
            batch_loss += -std::log(std::max(z[target], 1e-300));
            // d(mean CE)/dlogits = (softmax - onehot) / batch_tokens
            z[target] -= 1.0;
            k::scale(1.0 / static_cast<double>(batch_tokens), z.data(), V);
            enc.mlm_logits_backward(out, pos, z, dctx);
          }
          return dctx;
        };
        const auto [out, de] = enc.encode_backward(e, cot);
        (void)out;
        enc.embed_backward(masked, de);
      }

      if (!std::isfinite(batch_loss))
        throw StageError("masked-language pretraining diverged (non-finite loss)");
      ++step;
      adam.step(optim::scheduled_lr(cfg.learning_rate, step, total_steps,
                                    cfg.warmup_fraction));
      epoch_loss += batch_loss;
      epoch_tokens += batch_tokens;
    }

    report.epoch_losses.push_back(
        epoch_tokens ? epoch_loss / static_cast<double>(epoch_tokens) : 0.0);
  }
  return report;
}

}  // namespace detox::encoder
