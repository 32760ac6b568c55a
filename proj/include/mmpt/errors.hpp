#pragma once

#include <stdexcept>
#include <string>

namespace mmpt {

enum class ErrorKind {
  MalformedRecord,   // unparseable JSON or missing/ill-typed fields
  AtomOutOfRange,    // atomic number outside [1, 118]
  SingularLattice,   // |det L| below tolerance
  DuplicateAtoms,    // min periodic pairwise distance <= 1e-6
  NiggliDivergence,  // reduction did not converge within the step cap
  InvalidArgument,
  IndexOutOfRange,
  ShapeMismatch,
  NumericalError,    // NaN/Inf produced by a tensor op or training step
  DegenerateEmbedding,
  BadCheckpoint,
  DataError,         // missing files, empty datasets, bad splits, missing labels
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mmpt
