#pragma once

#include <stdexcept>
#include <string>

namespace qfl {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// statevec
struct ZeroVectorError : Error { using Error::Error; };
struct DimensionTooLargeError : Error { using Error::Error; };
struct ShapeMismatchError : Error { using Error::Error; };
struct IndexOutOfRangeError : Error { using Error::Error; };
struct InvalidProbabilityError : Error { using Error::Error; };

// model / fed
struct EmptyShardError : Error { using Error::Error; };
struct TooFewExamplesError : Error { using Error::Error; };
struct EmptyListError : Error { using Error::Error; };

// dp accountant
struct ZeroSigmaError : Error { using Error::Error; };
struct UnachievableError : Error { using Error::Error; };

// attack
struct DegenerateLabelsError : Error { using Error::Error; };
struct EmptyEvaluationSetError : Error { using Error::Error; };

// data ingestion
struct BadMagicError : Error { using Error::Error; };
struct CountMismatchError : Error { using Error::Error; };
struct TruncatedFileError : Error { using Error::Error; };
struct MultiChannelUnsupportedError : Error { using Error::Error; };

// configuration
struct ConfigError : Error { using Error::Error; };

// command front end: a checkpoint that cannot be loaded or does not fit the
// requested run (its own exit code, distinct from config and runtime errors)
struct CheckpointMismatchError : Error { using Error::Error; };

} // namespace qfl
