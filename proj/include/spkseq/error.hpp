#pragma once

#include <stdexcept>
#include <string>

namespace spkseq {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Odd or nonpositive SSM state dimension.
class InvalidDimension : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset or checkpoint bytes.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Operation requested in a mode it cannot support (e.g. LIF kernel with reset).
class UnsupportedMode : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DigestMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace spkseq
