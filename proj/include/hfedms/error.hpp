#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hfedms {

// Precondition or dimension violation on caller-supplied data.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class PoolExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss during local training. Context fields are -1 when unknown.
class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& what, int round = -1, int group = -1, int client = -1)
      : std::runtime_error(what), round_(round), group_(group), client_(client) {}

  int round() const { return round_; }
  int group() const { return group_; }
  int client() const { return client_; }

  TrainingDiverged with_context(int round, int group, int client) const {
    return TrainingDiverged("training diverged at round " + std::to_string(round) + ", group " +
                                std::to_string(group) + ", client " + std::to_string(client),
                            round, group, client);
  }

 private:
  int round_;
  int group_;
  int client_;
};

}  // namespace hfedms
