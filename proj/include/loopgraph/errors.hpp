#pragma once

#include <stdexcept>
#include <string>

namespace lg {

// Base class for all library errors. Subclasses distinguish failure modes so
// callers (and the CLI error reporter) can react per category.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error("format", msg) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error("dimension", msg) {}
};

class NonFiniteError : public Error {
 public:
  explicit NonFiniteError(const std::string& msg) : Error("non_finite", msg) {}
};

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string& msg) : Error("empty_input", msg) {}
};

class InvalidArgumentError : public Error {
 public:
  explicit InvalidArgumentError(const std::string& msg)
      : Error("invalid_argument", msg) {}
};

class InsufficientMatchesError : public Error {
 public:
  explicit InsufficientMatchesError(const std::string& msg)
      : Error("insufficient_matches", msg) {}
};

class DegenerateGeometryError : public Error {
 public:
  explicit DegenerateGeometryError(const std::string& msg)
      : Error("degenerate_geometry", msg) {}
};

class AmbiguousPoseError : public Error {
 public:
  explicit AmbiguousPoseError(const std::string& msg)
      : Error("ambiguous_pose", msg) {}
};

class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& msg)
      : Error("undefined_metric", msg) {}
};

class MissingArtifactError : public Error {
 public:
  explicit MissingArtifactError(const std::string& msg)
      : Error("missing_artifact", msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& msg) : Error("training", msg) {}
};

}  // namespace lg
