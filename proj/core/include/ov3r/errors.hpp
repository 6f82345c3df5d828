#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ov3r {

// Every failure the engine reports derives from Error. The CLI maps the two
// families below to exit codes 2 and 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs that violate a documented contract (bad shapes, bad files, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Inputs that are well-formed but numerically unusable.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ContractError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class CorruptionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnsupportedError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DomainError : public NumericError {
 public:
  using NumericError::NumericError;
};

class DegeneracyError : public NumericError {
 public:
  using NumericError::NumericError;
};

class EstimationFailure : public NumericError {
 public:
  using NumericError::NumericError;
};

class RegistrationFailure : public NumericError {
 public:
  RegistrationFailure(const std::string& what, std::size_t overlap)
      : NumericError(what), overlap_(overlap) {}
  std::size_t overlap() const noexcept { return overlap_; }

 private:
  std::size_t overlap_;
};

// Wraps a predictor failure with the index of the frame being processed.
class PipelineError : public Error {
 public:
  PipelineError(const std::string& what, std::size_t frame_index)
      : Error(what), frame_index_(frame_index) {}
  std::size_t frame_index() const noexcept { return frame_index_; }

 private:
  std::size_t frame_index_;
};

}  // namespace ov3r
