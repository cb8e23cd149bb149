#pragma once

#include <stdexcept>
#include <string>

namespace gridinfer {

// Malformed input text. line/column are 1-based; 0 means unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string msg, int line = 0, int column = 0)
      : std::runtime_error(format(msg, line, column)), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  static std::string format(const std::string& msg, int line, int column) {
    if (line <= 0) return msg;
    std::string s = "line " + std::to_string(line);
    if (column > 0) s += ", column " + std::to_string(column);
    return s + ": " + msg;
  }
  int line_;
  int column_;
};

// A structural invariant does not hold (bad reactance, disconnected baseline, ...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Requested operation cannot proceed on this topology (singular reduced system).
class DisconnectedError : public std::runtime_error {
 public:
  explicit DisconnectedError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rejection sampling gave up; the outage probability is too high for this grid.
class RejectionBudgetError : public std::runtime_error {
 public:
  explicit RejectionBudgetError(const std::string& msg) : std::runtime_error(msg) {}
};

class StaleCacheError : public std::runtime_error {
 public:
  explicit StaleCacheError(const std::string& msg) : std::runtime_error(msg) {}
};

class TrainingDivergedError : public std::runtime_error {
 public:
  explicit TrainingDivergedError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gridinfer
