#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace stpp {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed data, violated preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A numerical procedure did not reach a usable answer.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class FormulaError : public InvalidArgument {
 public:
  FormulaError(const std::string& what, std::size_t offset)
      : InvalidArgument(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class RankDeficientError : public Error {
 public:
  explicit RankDeficientError(std::vector<std::string> aliased)
      : Error(message(aliased)), aliased_(std::move(aliased)) {}
  const std::vector<std::string>& aliased() const noexcept { return aliased_; }

 private:
  static std::string message(const std::vector<std::string>& cols) {
    std::string m = "design matrix is rank deficient; aliased columns:";
    for (const auto& c : cols) m += " " + c;
    return m;
  }
  std::vector<std::string> aliased_;
};

}  // namespace stpp
