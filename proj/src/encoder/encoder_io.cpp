#include <cstring>
#include <fstream>

#include <json.hpp>

#include "detox/encoder.hpp"
#include "detox/errors.hpp"

namespace detox::encoder {
namespace {

constexpr char kMagic[4] = {'D', 'T', 'X', 'W'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

nlohmann::ordered_json config_json(const EncoderConfig& c) {
  nlohmann::ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["dim"] = c.dim;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["max_length"] = c.max_length;
  j["mask_token_id"] = c.mask_token_id;
  j["pad_token_id"] = c.pad_token_id;
  j["seed"] = c.seed;
  return j;
}

EncoderConfig config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.dim = j.at("dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.max_length = j.at("max_length").get<int>();
  c.mask_token_id = j.at("mask_token_id").get<int>();
  c.pad_token_id = j.at("pad_token_id").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// Frozen adapter around a serialized encoder directory; same contract, but
// reports its kind as external and exposes no training surface.
class ExternalEncoder final : public TextEncoder {
 public:
  explicit ExternalEncoder(std::unique_ptr<BuiltinEncoder> inner)
      : inner_(std::move(inner)) {}

  const EncoderConfig& config() const override { return inner_->config(); }
  const Tokenizer& tokenizer() const override { return inner_->tokenizer(); }
  std::string kind() const override { return "external"; }
  TokenizedText tokenize(const std::string& text) const override {
    return inner_->tokenize(text);
  }
  EmbeddingSequence embed(const TokenizedText& t) const override {
    return inner_->embed(t);
  }
  EncoderOutput encode(const EmbeddingSequence& e) const override {
    return inner_->encode(e);
  }
  std::pair<EncoderOutput, EmbeddingSequence> encode_with_vjp(
      const EmbeddingSequence& e, const CotangentFn& cotangent) const override {
    return inner_->encode_with_vjp(e, cotangent);
  }
  std::vector<std::vector<MaskFill>> mlm_predict(const TokenizedText& t,
                                                 int n) const override {
    return inner_->mlm_predict(t, n);
  }
  std::unique_ptr<TextEncoder> clone() const override {
    return std::make_unique<ExternalEncoder>(
        std::make_unique<BuiltinEncoder>(*inner_));
  }
  void save(const std::filesystem::path& dir) const override {
    inner_->save(dir);
  }

 private:
  std::unique_ptr<BuiltinEncoder> inner_;
};

}  // namespace

bool decays_weight(const std::string& param_name) {
  const auto ends_with = [&](const char* suffix) {
    const std::size_t n = std::strlen(suffix);
    return param_name.size() >= n &&
           param_name.compare(param_name.size() - n, n, suffix) == 0;
  };
  if (param_name == "tok_emb" || param_name == "pos_emb") return true;
  return ends_with(".wq") || ends_with(".wk") || ends_with(".wv") ||
         ends_with(".wo") || ends_with(".w1") || ends_with(".w2");
}

void BuiltinEncoder::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  tok_.save(dir / "vocab.txt");

  // save() only reads parameters; for_each_param is non-const because
  // optimizers use it to mutate.
  auto* self = const_cast<BuiltinEncoder*>(this);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  self->for_each_param([&](const std::string& name, std::vector<double>& v,
                           std::vector<double>&) {
    nlohmann::ordered_json t;
    t["name"] = name;
    t["size"] = v.size();
    tensors.push_back(std::move(t));
  });

  nlohmann::ordered_json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["kind"] = "builtin";
  manifest["config"] = config_json(cfg_);
  manifest["tensors"] = std::move(tensors);
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
  }

  std::ofstream out(dir / "weights.bin", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "weights.bin").string());
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kFormatVersion);
  std::uint64_t count = 0;
  self->for_each_param(
      [&](const std::string&, std::vector<double>&, std::vector<double>&) {
        ++count;
      });
  write_u64(out, count);
  self->for_each_param([&](const std::string&, std::vector<double>& v,
                           std::vector<double>&) {
    write_u64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  });
  if (!out) throw DataError("weight write failed: " + (dir / "weights.bin").string());
}

std::unique_ptr<BuiltinEncoder> BuiltinEncoder::load(
    const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw DataError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("format_version", 0u) != kFormatVersion)
    throw DataError("unsupported encoder format version in " + dir.string());
  const EncoderConfig cfg = config_from_json(manifest.at("config"));
  Tokenizer tok = Tokenizer::load(dir / "vocab.txt");
  auto enc = std::make_unique<BuiltinEncoder>(cfg, std::move(tok));

  std::ifstream in(dir / "weights.bin", std::ios::binary);
  if (!in) throw DataError("cannot open " + (dir / "weights.bin").string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not an encoder weight file: " + (dir / "weights.bin").string());
  if (read_u32(in) != kFormatVersion)
    throw DataError("unsupported weight format version");
  const std::uint64_t count = read_u64(in);
  std::uint64_t seen = 0;
  bool bad = false;
  std::string bad_name;
  enc->for_each_param([&](const std::string& name, std::vector<double>& v,
                          std::vector<double>&) {
    if (bad) return;
    ++seen;
    const std::uint64_t size = read_u64(in);
    if (!in || size != v.size()) {
      bad = true;
      bad_name = name;
      return;
    }
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) {
      bad = true;
      bad_name = name;
    }
  });
  if (bad)
    throw DataError("weight tensor '" + bad_name + "' is malformed in " +
                    (dir / "weights.bin").string());
  if (seen != count)
    throw DataError("weight tensor count mismatch in " +
                    (dir / "weights.bin").string());
  return enc;
}

std::unique_ptr<TextEncoder> make_encoder(
    const std::string& kind, const EncoderConfig& cfg,
    const corpus::Corpus* corpus, const std::filesystem::path& external_dir) {
  if (kind == "builtin") {
    if (corpus == nullptr)
      throw UsageError("builtin encoder needs a corpus to build its vocabulary");
    Tokenizer tok = Tokenizer::build(*corpus, cfg.vocab_size);
    return std::make_unique<BuiltinEncoder>(cfg, std::move(tok));
  }
  if (kind == "external") {
    if (external_dir.empty())
      throw UsageError("external encoder needs encoder.path");
    return std::make_unique<ExternalEncoder>(BuiltinEncoder::load(external_dir));
  }
  throw UsageError("unknown encoder kind '" + kind +
                   "' (expected builtin or external)");
}

}  // namespace detox::encoder
