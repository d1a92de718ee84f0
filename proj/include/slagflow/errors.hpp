#pragma once

#include <stdexcept>

namespace slagflow {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// dataset ingest
struct MissingFile : Error { using Error::Error; };
struct MalformedManifest : Error { using Error::Error; };
struct DuplicateEntry : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct AxisLengthMismatch : Error { using Error::Error; };
struct EmptyRecording : Error { using Error::Error; };
struct InvalidSpec : Error { using Error::Error; };

// preprocessing
struct DegenerateSignal : Error { using Error::Error; };
struct TooShort : Error { using Error::Error; };
struct ZeroSignal : Error { using Error::Error; };
struct NotFitted : Error { using Error::Error; };
struct UnknownAxis : Error { using Error::Error; };
struct EmptyResult : Error { using Error::Error; };

// data loading
struct AxisMismatch : Error { using Error::Error; };
struct UnalignedAxes : Error { using Error::Error; };
struct LabelConflict : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };

// models
struct InvalidArg : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct NonFiniteActivation : Error { using Error::Error; };
struct NonFiniteInput : Error { using Error::Error; };

// training
struct TooFewSamples : Error { using Error::Error; };
struct EmptySplit : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };

// experiments
struct TooFewDomains : Error { using Error::Error; };

}  // namespace slagflow
