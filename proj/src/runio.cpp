#include "detox/runio.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>

#include <json.hpp>
#include <openssl/evp.h>

#include "detox/errors.hpp"

namespace detox::runio {

using json = nlohmann::ordered_json;

namespace {
LogLevel g_level = LogLevel::Info;
}

LogLevel parse_log_level(const std::string& name) {
  if (name == "quiet") return LogLevel::Quiet;
  if (name == "info") return LogLevel::Info;
  if (name == "debug") return LogLevel::Debug;
  throw UsageError("unknown log level `" + name +
                   "` (expected quiet, info, or debug)");
}

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_info(const std::string& message) {
  if (g_level != LogLevel::Quiet) std::cerr << message << "\n";
}

void log_debug(const std::string& message) {
  if (g_level == LogLevel::Debug) std::cerr << message << "\n";
}

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
      throw StageError("sha256: cannot initialize digest");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, data, n) != 1)
      throw StageError("sha256: digest update failed");
  }

  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, digest, &len) != 1)
      throw StageError("sha256: digest finalization failed");
    static const char* k = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(k[digest[i] >> 4]);
      out.push_back(k[digest[i] & 0xF]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_string(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file for checksum: " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  return h.hex();
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::trunc) {
  if (!out_) throw DataError("cannot open " + path.string() + " for writing");
}

JsonlWriter::~JsonlWriter() {
  if (!closed_) out_.flush();
}

void JsonlWriter::write(const std::string& line) {
  out_ << line << '\n';
  if (!out_) throw DataError("write failed on " + path_.string());
  ++lines_;
}

void JsonlWriter::close() {
  if (closed_) return;
  out_.flush();
  if (!out_) throw DataError("flush failed on " + path_.string());
  out_.close();
  closed_ = true;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

namespace {

std::filesystem::path marker_path(const std::filesystem::path& out_dir,
                                  const std::string& stage) {
  return out_dir / "stages" / (stage + ".done");
}

}  // namespace

bool stage_done(const std::filesystem::path& out_dir,
                const std::string& stage) {
  return std::filesystem::exists(marker_path(out_dir, stage));
}

void mark_stage_done(const std::filesystem::path& out_dir,
                     const std::string& stage) {
  const auto marker = marker_path(out_dir, stage);
  std::filesystem::create_directories(marker.parent_path());
  std::ofstream out(marker);
  if (!out) throw DataError("cannot write stage marker " + marker.string());
  out << "done\n";
  if (!out.flush())
    throw DataError("short write to stage marker " + marker.string());
}

void write_manifest(const std::filesystem::path& out_dir,
                    std::vector<std::string> relative_files) {
  std::sort(relative_files.begin(), relative_files.end());
  json files = json::object();
  for (const auto& rel : relative_files)
    files[rel] = sha256_file(out_dir / rel);
  json j;
  j["files"] = std::move(files);

  const auto path = out_dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
  if (!out.flush())
    throw DataError("short write to manifest " + path.string());
}

}  // namespace detox::runio
