#pragma once

#include <stdexcept>
#include <string>

namespace flowline {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failures: missing files, unwritable paths.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Payload that cannot be decoded as a supported image.
class DecodeError : public Error {
 public:
  using Error::Error;
};

/// Structurally invalid binary or JSON formats (.flo, checkpoints, manifests).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowline
