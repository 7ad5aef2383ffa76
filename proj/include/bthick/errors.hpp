#pragma once

#include <stdexcept>
#include <string>

namespace bthick {

/// Thrown when a caller breaks a documented precondition (shapes, ranges,
/// class indices). The CLI maps it to exit status 1.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File system and parse failures. The CLI maps it to exit status 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A measurement could not produce a single usable sample (every attack
/// failed, no mixed-label pair found, ...).
class MeasurementError : public std::runtime_error {
 public:
  MeasurementError(const std::string& what, std::size_t skipped)
      : std::runtime_error(what), skipped_(skipped) {}
  std::size_t skipped() const noexcept { return skipped_; }

 private:
  std::size_t skipped_;
};

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace bthick
