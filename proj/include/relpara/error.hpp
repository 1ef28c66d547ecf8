#pragma once

#include <stdexcept>
#include <string>

namespace relpara {

// Base of every error raised by the library. The CLI maps subclasses to exit
// codes (ConfigError -> 1, AbortError -> 3, everything else -> 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file or completion that cannot be interpreted.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Remote endpoint answered with something that violates its wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Retries exhausted or the endpoint was unreachable.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int last_status)
      : Error(what), last_status_(last_status) {}
  int last_status() const noexcept { return last_status_; }

 private:
  int last_status_;
};

// Too many articles were excluded for the run to remain meaningful.
class AbortError : public Error {
 public:
  using Error::Error;
};

// Wraps an error with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace relpara
