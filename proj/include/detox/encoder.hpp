#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "detox/corpus.hpp"

namespace detox::encoder {

// Special vocabulary ids, fixed across every tokenizer instance.
constexpr int kPadId = 0;
constexpr int kUnkId = 1;
constexpr int kClsId = 2;
constexpr int kSepId = 3;
constexpr int kMaskId = 4;
constexpr int kNumSpecials = 5;

// word_index value for marker positions ([CLS], [SEP], [PAD]).
constexpr int kSpecialWord = -1;

struct TokenizedText {
  std::vector<int> subword_ids;
  std::vector<int> word_index;        // kSpecialWord for markers
  std::vector<std::string> surface;   // "##" prefix marks continuations
  bool truncated = false;

  std::size_t size() const { return subword_ids.size(); }
};

struct EmbeddingSequence {
  std::size_t length = 0;
  std::size_t dim = 0;
  std::vector<double> data;  // row-major [length x dim]

  EmbeddingSequence() = default;
  EmbeddingSequence(std::size_t len, std::size_t d)
      : length(len), dim(d), data(len * d, 0.0) {}
  double* row(std::size_t i) { return data.data() + i * dim; }
  const double* row(std::size_t i) const { return data.data() + i * dim; }
};

struct EncoderOutput {
  std::size_t length = 0;
  std::size_t dim = 0;
  std::vector<double> contextual;  // row-major [length x dim]
  std::vector<double> pooled;      // copy of contextual row 0

  const double* row(std::size_t i) const { return contextual.data() + i * dim; }
};

struct EncoderConfig {
  int vocab_size = 4096;
  int dim = 64;
  int layers = 2;
  int heads = 2;
  int max_length = 64;
  int mask_token_id = kMaskId;
  int pad_token_id = kPadId;
  std::uint64_t seed = 1;

  void validate() const;  // throws UsageError on nonsense
};

// One ranked masked-position fill.
struct MaskFill {
  int id = 0;
  std::string token;
  double probability = 0.0;
};

// WordPiece-style subword vocabulary: greedy longest-match segmentation with
// a "##" continuation prefix. Ids are stable; saved as one token per line
// with id = line number.
class Tokenizer {
 public:
  Tokenizer() = default;

  // Builds a vocabulary from corpus word frequencies: specials, then every
  // observed codepoint (plain and continuation form), then the most frequent
  // words and word substrings until vocab_size entries exist.
  static Tokenizer build(const corpus::Corpus& corpus, int vocab_size);
  static Tokenizer load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  // Splits preprocessed text into words and segments each word. Output is
  // [CLS] pieces... [SEP], truncated to max_length whole words (a word whose
  // pieces do not fit is dropped entirely and the result is flagged).
  TokenizedText encode(const std::string& text, int max_length) const;

  // Inverse of encode over surfaces: words recovered by concatenating each
  // word's fragments and stripping continuation markers.
  std::vector<std::string> detokenize_words(const TokenizedText& t) const;

  int vocab_size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const;
  int id_of(const std::string& token) const;  // -1 if absent

 private:
  std::vector<std::string> tokens_;
  // token -> id over non-special entries; continuation entries keyed with
  // their "##" prefix
  std::unordered_map<std::string, int> index_;
  std::size_t max_piece_cps_ = 1;

  void rebuild_index();
};

// Contract every encoder (built-in or external adapter) satisfies. All
// operations are pure and safe to call concurrently.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;

  virtual const EncoderConfig& config() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  virtual std::string kind() const = 0;

  virtual TokenizedText tokenize(const std::string& text) const = 0;
  virtual EmbeddingSequence embed(const TokenizedText& t) const = 0;
  virtual EncoderOutput encode(const EmbeddingSequence& e) const = 0;

  // Reverse-mode sweep: runs the forward pass, asks the caller for the
  // cotangent of the contextual output, and returns both the output and the
  // gradient with respect to the input embeddings. The cotangent vector must
  // have length len*dim.
  using CotangentFn =
      std::function<std::vector<double>(const EncoderOutput&)>;
  virtual std::pair<EncoderOutput, EmbeddingSequence> encode_with_vjp(
      const EmbeddingSequence& e, const CotangentFn& cotangent) const = 0;

  // For each mask position (in sequence order), the n most probable
  // vocabulary fills, probability-descending, ties broken by lower id;
  // mask/pad/start/separator ids never appear as fills.
  virtual std::vector<std::vector<MaskFill>> mlm_predict(
      const TokenizedText& t, int n) const = 0;

  // Deep copy with independent parameter storage (fold trainings must not
  // share state).
  virtual std::unique_ptr<TextEncoder> clone() const = 0;

  // Serializes vocabulary, configuration, and weights into `dir`.
  virtual void save(const std::filesystem::path& dir) const = 0;
};

// Trainable desk-scale encoder: pre-LN transformer stack over learned token
// and position embeddings, with a tied-embedding MLM head.
class BuiltinEncoder final : public TextEncoder {
 public:
  struct LayerParams {
    std::vector<double> ln1_g, ln1_b;      // [d]
    std::vector<double> wq, wk, wv, wo;    // [d*d]
    std::vector<double> bq, bk, bv, bo;    // [d]
    std::vector<double> ln2_g, ln2_b;      // [d]
    std::vector<double> w1, b1;            // [d*4d], [4d]
    std::vector<double> w2, b2;            // [4d*d], [d]
  };
  struct Params {
    std::vector<double> tok_emb;           // [vocab*d]
    std::vector<double> pos_emb;           // [max_length*d]
    std::vector<LayerParams> layers;
    std::vector<double> lnf_g, lnf_b;      // [d]
    std::vector<double> mlm_bias;          // [vocab]
  };

  BuiltinEncoder(EncoderConfig cfg, Tokenizer tok);

  const EncoderConfig& config() const override { return cfg_; }
  const Tokenizer& tokenizer() const override { return tok_; }
  std::string kind() const override { return "builtin"; }

  TokenizedText tokenize(const std::string& text) const override;
  EmbeddingSequence embed(const TokenizedText& t) const override;
  EncoderOutput encode(const EmbeddingSequence& e) const override;
  std::pair<EncoderOutput, EmbeddingSequence> encode_with_vjp(
      const EmbeddingSequence& e, const CotangentFn& cotangent) const override;
  std::vector<std::vector<MaskFill>> mlm_predict(const TokenizedText& t,
                                                 int n) const override;
  std::unique_ptr<TextEncoder> clone() const override {
    return std::make_unique<BuiltinEncoder>(*this);
  }

  // -- training access ------------------------------------------------------
  Params& params() { return params_; }
  const Params& params() const { return params_; }
  Params& grads() { return grads_; }
  void zero_grads();

  // Visits every parameter tensor in a fixed, documented order (the same
  // order as the serialized weight blob).
  using ParamVisitor = std::function<void(
      const std::string& name, std::vector<double>& value,
      std::vector<double>& grad)>;
  void for_each_param(const ParamVisitor& fn);

  // Like encode_with_vjp but also accumulates parameter gradients into
  // grads(). The cotangent callback may itself accumulate gradients of
  // whatever head produced it (classifier, MLM). Returns output and
  // input-embedding gradients.
  std::pair<EncoderOutput, EmbeddingSequence> encode_backward(
      const EmbeddingSequence& e, const CotangentFn& cotangent);

  // Accumulates token/position embedding gradients for a tokenized input
  // whose embedding-gradient sequence is de.
  void embed_backward(const TokenizedText& t, const EmbeddingSequence& de);

  // MLM head: vocabulary logits for one output position (tied embeddings).
  std::vector<double> mlm_logits(const EncoderOutput& out,
                                 std::size_t position) const;
  // Backward partner: given dlogits at `position`, accumulates tok_emb and
  // mlm_bias gradients and adds the contextual cotangent into dctx.
  void mlm_logits_backward(const EncoderOutput& out, std::size_t position,
                           const std::vector<double>& dlogits,
                           std::vector<double>& dctx);

  void save(const std::filesystem::path& dir) const override;
  static std::unique_ptr<BuiltinEncoder> load(const std::filesystem::path& dir);

 private:
  EncoderConfig cfg_;
  Tokenizer tok_;
  Params params_;
  Params grads_;

  struct Trace;
  void forward(const EmbeddingSequence& e, Trace& trace) const;
  EmbeddingSequence backward(const Trace& trace,
                             const std::vector<double>& cotangent,
                             Params* param_grads) const;
};

// MLM pretraining of the built-in encoder (always-mask corruption of a
// fraction of content positions, cross-entropy on the originals).
struct PretrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 3e-4;
  double weight_decay = 0.01;
  double mask_fraction = 0.15;
  double warmup_fraction = 0.10;
  std::uint64_t seed = 1;
};

struct PretrainReport {
  std::vector<double> epoch_losses;  // mean masked-token cross-entropy
};

PretrainReport pretrain_mlm(BuiltinEncoder& enc, const corpus::Corpus& corpus,
                            const PretrainConfig& cfg);

// Weight-decay policy shared by every training loop: weight matrices and
// embeddings decay, biases and layer-norm parameters do not.
bool decays_weight(const std::string& param_name);

// Factory: kind "builtin" builds a fresh encoder (vocabulary from `corpus`);
// kind "external" loads a serialized encoder directory as a frozen adapter.
std::unique_ptr<TextEncoder> make_encoder(
    const std::string& kind, const EncoderConfig& cfg,
    const corpus::Corpus* corpus, const std::filesystem::path& external_dir);

}  // namespace detox::encoder
