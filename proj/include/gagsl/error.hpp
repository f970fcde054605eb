#pragma once

#include <cstdlib>
#include <iostream>
#include <stdexcept>
#include <string>

namespace gagsl {

// Base error for everything this library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated a documented precondition.
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& msg) : Error("contract violation: " + msg) {}
};

// Malformed input file; carries a 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, long line, const std::string& msg)
      : Error("parse error: " + file + ":" + std::to_string(line) + ": " + msg) {}
  explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

// Structurally valid input with semantically invalid content.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error("validation error: " + msg) {}
};

// Numerical failure (singular system, non-finite loss, ...).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

inline int log_level() {
  static int level = [] {
    const char* v = std::getenv("GAGSL_LOG_LEVEL");
    return v ? std::atoi(v) : 1;
  }();
  return level;
}

inline void warn(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[gagsl] warning: " << msg << "\n";
}

inline void info(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "[gagsl] " << msg << "\n";
}

}  // namespace gagsl
