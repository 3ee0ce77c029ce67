#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace levk {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition (mismatched lengths, empty bank, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoFailure : public Error {
 public:
  using Error::Error;
};

class UnmappedRawLabel : public Error {
 public:
  UnmappedRawLabel(std::uint32_t raw, std::size_t index)
      : Error("raw label " + std::to_string(raw) + " at index " + std::to_string(index) +
              " has no entry in the merge map"),
        raw_(raw),
        index_(index) {}
  std::uint32_t raw() const { return raw_; }
  std::size_t index() const { return index_; }

 private:
  std::uint32_t raw_;
  std::size_t index_;
};

class DegenerateCount : public Error {
 public:
  explicit DegenerateCount(std::size_t class_index)
      : Error("class " + std::to_string(class_index) + " has zero points; weight undefined"),
        class_index_(class_index) {}
  std::size_t class_index() const { return class_index_; }

 private:
  std::size_t class_index_;
};

class TruncatedFile : public Error {
 public:
  using Error::Error;
};

class NonFiniteValue : public Error {
 public:
  explicit NonFiniteValue(std::size_t index)
      : Error("non-finite value at point " + std::to_string(index)), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class LengthMismatch : public Error {
 public:
  LengthMismatch(std::size_t found, std::size_t expected)
      : Error("length mismatch: found " + std::to_string(found) + ", expected " +
              std::to_string(expected)),
        found_(found),
        expected_(expected) {}
  std::size_t found() const { return found_; }
  std::size_t expected() const { return expected_; }

 private:
  std::size_t found_;
  std::size_t expected_;
};

class BadMagic : public Error {
 public:
  using Error::Error;
};

class HeaderInconsistent : public Error {
 public:
  using Error::Error;
};

class ProbabilityNotNormalized : public Error {
 public:
  explicit ProbabilityNotNormalized(std::size_t index)
      : Error("probability vector of point " + std::to_string(index) + " is not normalized"),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class DegenerateInstance : public Error {
 public:
  using Error::Error;
};

/// No frame point was occluded by the billboard; the caller should try another pose.
class NoOcclusion : public Error {
 public:
  using Error::Error;
};

class SingularCovariance : public Error {
 public:
  using Error::Error;
};

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

class LogitsAbsent : public Error {
 public:
  LogitsAbsent() : Error("prediction set carries no logits") {}
};

class FeaturesAbsent : public Error {
 public:
  FeaturesAbsent() : Error("prediction set carries no feature vectors") {}
};

class BadEdges : public Error {
 public:
  using Error::Error;
};

}  // namespace levk
