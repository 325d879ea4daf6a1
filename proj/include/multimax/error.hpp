// Error types shared by every multimax component.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace multimax {

enum class ErrorKind {
  InvalidInput,
  InvalidTemperature,
  NumericalFailure,
  TrainingDiverged,
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::InvalidTemperature: return "InvalidTemperature";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::TrainingDiverged: return "TrainingDiverged";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error(ErrorKind::InvalidInput, what) {}
};

class InvalidTemperature : public Error {
 public:
  explicit InvalidTemperature(const std::string& what)
      : Error(ErrorKind::InvalidTemperature, what) {}
};

class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& what)
      : Error(ErrorKind::NumericalFailure, what) {}
};

// Raised by the toy trainer when the loss stops being finite.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : Error(ErrorKind::TrainingDiverged, "step " + std::to_string(step) + ": " + what),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace multimax
