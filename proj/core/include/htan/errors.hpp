#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace htan {

/// Operand shapes do not satisfy a primitive's conformance rule.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value falls outside an operation's mathematical domain (log of a
/// non-positive entry, division by zero, non-finite input).
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, std::size_t index)
      : std::domain_error(what + " (at flat index " + std::to_string(index) + ")"), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Misuse of the differentiation tape: non-scalar root, repeated backward.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Numerical failure inside an algorithm (quadrature non-convergence,
/// rank-deficient retraction, non-finite loss during training).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files or configuration.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace htan
