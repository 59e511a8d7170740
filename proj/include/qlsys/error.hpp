#pragma once

#include <stdexcept>
#include <string>

namespace qlsys {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSpec : public Error {
 public:
  using Error::Error;
};

class GridMismatch : public Error {
 public:
  GridMismatch() : Error("fields live on different grids") {}
  using Error::Error;
};

class InvalidParams : public Error {
 public:
  using Error::Error;
};

class InvalidRange : public Error {
 public:
  using Error::Error;
};

class NonFiniteSample : public Error {
 public:
  NonFiniteSample(const std::string& what, double s)
      : Error(what + " at s=" + std::to_string(s)), s_(s) {}
  double s() const noexcept { return s_; }

 private:
  double s_;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class NotProjectable : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, int iterations)
      : Error(what + " (after " + std::to_string(iterations) + " iterations)"),
        iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

class InadmissibleLambda : public Error {
 public:
  InadmissibleLambda(const std::string& what, double threshold)
      : Error(what), threshold_(threshold) {}
  double threshold() const noexcept { return threshold_; }

 private:
  double threshold_;
};

class NoFullyNontrivialCandidate : public Error {
 public:
  using Error::Error;
};

/// A theorem-side inequality failed on an iterate (coercivity on the Nehari set).
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string key, const std::string& reason)
      : Error(key + ": " + reason), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace qlsys
