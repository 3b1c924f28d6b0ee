#pragma once

#include <stdexcept>
#include <string>

namespace sovnet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error { using Error::Error; };
struct AxisOutOfRange : Error { using Error::Error; };
struct NonFiniteResult : Error { using Error::Error; };
struct NonScalarRoot : Error { using Error::Error; };
struct TapeAlreadyConsumed : Error { using Error::Error; };

struct GroupKindMismatch : Error { using Error::Error; };

struct RuleContractViolation : Error { using Error::Error; };

struct IncompleteTrace : Error { using Error::Error; };
struct ModelMismatch : Error { using Error::Error; };

struct LabelOutOfRange : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct DataEmpty : Error { using Error::Error; };

struct BadMagic : Error { using Error::Error; };
struct CountMismatch : Error { using Error::Error; };
struct TruncatedFile : Error { using Error::Error; };

struct ConfigError : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };

}  // namespace sovnet
