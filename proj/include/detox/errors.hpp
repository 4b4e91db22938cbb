#pragma once

#include <stdexcept>
#include <string>

namespace detox {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad flags, malformed or missing config keys. CLI exit code 1.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what) {}
};

// Unreadable files, schema mismatches, unmappable labels. CLI exit code 2.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

// A pipeline stage failed (non-finite loss, missing checkpoint, ...). CLI exit code 3.
class StageError : public Error {
 public:
  explicit StageError(const std::string& what) : Error(what) {}
};

}  // namespace detox
