#pragma once

#include <stdexcept>
#include <string>

namespace zoomvqa {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or axes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Frame, crop or grid geometry is impossible for the given input.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation precondition (empty stack, non-scalar loss).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class CorruptPayloadError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Zero-variance batch; correlation based losses are undefined on it.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

/// SRCC/PLCC requested on fewer than two samples or zero variance.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace zoomvqa
