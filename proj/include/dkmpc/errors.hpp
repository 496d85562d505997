#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dkmpc {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

// A feature column whose min equals its max cannot be mapped to [-1, 1].
class ConstantFeature : public Error {
 public:
  explicit ConstantFeature(std::ptrdiff_t col)
      : Error("constant feature column " + std::to_string(col)),
        column(col) {}
  std::ptrdiff_t column;
};

class EmptyDataset : public Error {
 public:
  explicit EmptyDataset(const std::string& what) : Error(what) {}
};

class BadSplit : public Error {
 public:
  explicit BadSplit(const std::string& what) : Error(what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line)
      : Error(what + " (line " + std::to_string(line) + ")"), line(line) {}
  long line;
};

class NonUniformTimestep : public Error {
 public:
  NonUniformTimestep(const std::string& what, long line)
      : Error(what + " (line " + std::to_string(line) + ")"), line(line) {}
  long line;
};

// backward() called without a recorded forward pass.
class NoForwardPass : public Error {
 public:
  explicit NoForwardPass(const std::string& what) : Error(what) {}
};

class ConvergenceFailure : public Error {
 public:
  explicit ConvergenceFailure(const std::string& what) : Error(what) {}
};

class EmptyBatch : public Error {
 public:
  explicit EmptyBatch(const std::string& what) : Error(what) {}
};

class DivergenceDetected : public Error {
 public:
  explicit DivergenceDetected(const std::string& what) : Error(what) {}
};

class NotPsd : public Error {
 public:
  explicit NotPsd(const std::string& what) : Error(what) {}
};

class NonFinite : public Error {
 public:
  explicit NonFinite(const std::string& what) : Error(what) {}
};

// Pitch at +-pi/2 makes the Euler-rate map singular.
class EulerSingularity : public Error {
 public:
  explicit EulerSingularity(const std::string& what) : Error(what) {}
};

class GenerationFailed : public Error {
 public:
  explicit GenerationFailed(const std::string& what) : Error(what) {}
};

// R^2 is undefined when the truth signal has zero variance.
class ConstantTruth : public Error {
 public:
  explicit ConstantTruth(const std::string& what) : Error(what) {}
};

}  // namespace dkmpc
