#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace detox::runio {

// -- logging -----------------------------------------------------------------

enum class LogLevel { Quiet, Info, Debug };

LogLevel parse_log_level(const std::string& name);  // UsageError on nonsense
void set_log_level(LogLevel level);
LogLevel log_level();
void log_info(const std::string& message);   // stderr at info and debug
void log_debug(const std::string& message);  // stderr at debug only

// -- checksums ---------------------------------------------------------------

std::string sha256_string(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);  // DataError

// -- line-oriented dumps -------------------------------------------------------

// Serialized append-only writer for one-record-per-line files.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path);  // truncates
  ~JsonlWriter();

  void write(const std::string& line);  // appends a newline
  void close();                         // flush + fail check
  std::size_t lines() const { return lines_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t lines_ = 0;
  bool closed_ = false;
};

// Non-empty lines of a text file. DataError when unreadable.
std::vector<std::string> read_lines(const std::filesystem::path& path);

// -- stage markers and manifests ----------------------------------------------

// A stage marker records that a stage's outputs are complete; resumed runs
// skip the stage and must not rewrite its outputs.
bool stage_done(const std::filesystem::path& out_dir,
                const std::string& stage);
void mark_stage_done(const std::filesystem::path& out_dir,
                     const std::string& stage);

// manifest.json: sha256 per listed file (paths relative to out_dir, sorted).
// Timing data stays out of the manifest so reruns of the same config produce
// byte-identical manifests.
void write_manifest(const std::filesystem::path& out_dir,
                    std::vector<std::string> relative_files);

}  // namespace detox::runio
