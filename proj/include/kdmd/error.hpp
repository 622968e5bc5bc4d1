#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kdmd {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class RankError : public Error {
 public:
  using Error::Error;
};

// A power or inverse step would overflow or divide by a vanishing eigenvalue.
class SpectralError : public Error {
 public:
  SpectralError(const std::string& what, std::vector<int> modes)
      : Error(what), modes_(std::move(modes)) {}
  const std::vector<int>& modes() const noexcept { return modes_; }

 private:
  std::vector<int> modes_;
};

// File format errors. Each corruption class is distinguishable.
class FormatError : public Error {
 public:
  using Error::Error;
};
class BadMagic : public FormatError {
 public:
  using FormatError::FormatError;
};
class BadVersion : public FormatError {
 public:
  using FormatError::FormatError;
};
class SizeMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};
class ChecksumMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace kdmd
