#pragma once

#include <stdexcept>
#include <string>

namespace transfusor {

// Root of every error the library raises. Subclasses name the failure class
// so callers (and the CLI exit path) can tell user mistakes from data faults.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not agree for the requested operation.
class DimensionError : public Error { using Error::Error; };
// A model or schedule was configured with inconsistent or invalid values.
class ConfigError : public Error { using Error::Error; };
// An API or command was called with arguments outside its contract.
class UsageError : public Error { using Error::Error; };
// An object is not in the state the call requires (e.g. untrained model).
class StateError : public Error { using Error::Error; };
// Input text or binary does not match the expected layout.
class FormatError : public Error { using Error::Error; };
// Well-formed input whose content violates a data invariant.
class DataError : public Error { using Error::Error; };
// Optimization hit a non-finite value.
class TrainingError : public Error { using Error::Error; };
// Unknown category or label component.
class LabelError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
// Coverage over an empty reference or generated set.
class CoverageError : public Error { using Error::Error; };
// Checkpoint bytes that are not a readable model of the expected kind.
class CheckpointError : public Error { using Error::Error; };

}  // namespace transfusor
