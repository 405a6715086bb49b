// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy. Every error carries a coarse kind that the command
// line tool maps onto its exit codes.

#ifndef PCSEG_ERRORS_HPP_
#define PCSEG_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pcseg {

enum class ErrorKind { kConfig, kData, kTraining };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define PCSEG_DEFINE_ERROR(Name, Kind)                                    \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  }

// Configuration and argument errors.
PCSEG_DEFINE_ERROR(ConfigError, kConfig);
PCSEG_DEFINE_ERROR(SpecError, kConfig);
PCSEG_DEFINE_ERROR(DomainError, kConfig);
PCSEG_DEFINE_ERROR(ShapeError, kConfig);

// Data and file format errors.
PCSEG_DEFINE_ERROR(LengthError, kData);
PCSEG_DEFINE_ERROR(ValueError, kData);
PCSEG_DEFINE_ERROR(MissingKeyError, kData);
PCSEG_DEFINE_ERROR(NonRigidError, kData);
PCSEG_DEFINE_ERROR(EmptyDatasetError, kData);
PCSEG_DEFINE_ERROR(EmptyCloudError, kData);
PCSEG_DEFINE_ERROR(InvalidLabelError, kData);
PCSEG_DEFINE_ERROR(CatalogMismatchError, kData);
PCSEG_DEFINE_ERROR(IoError, kData);

// Checkpoint decoding; each failure mode is its own type.
PCSEG_DEFINE_ERROR(CheckpointError, kData);
class BadMagic : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class VersionMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class ChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class TruncatedFile : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// Training failures.
PCSEG_DEFINE_ERROR(NonFiniteGradientError, kTraining);

#undef PCSEG_DEFINE_ERROR

class ParseError : public Error {
 public:
  // line == 0 means the error is not tied to a particular line.
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::kData,
              line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace pcseg

#endif  // PCSEG_ERRORS_HPP_
