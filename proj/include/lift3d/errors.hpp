#pragma once

#include <stdexcept>
#include <string>

namespace lift3d {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File / schema level.
struct ParseError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct DanglingReference : Error { using Error::Error; };
struct MissingKeypointFile : Error { using Error::Error; };
struct EmptyClass : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };

// Numerics.
struct SingularSystem : Error { using Error::Error; };
struct NonConvergence : Error { using Error::Error; };

// Spatial model.
struct EmptyCluster : Error { using Error::Error; };
struct UnknownComponent : Error { using Error::Error; };

// Lifting.
struct TooFewCorrespondences : Error { using Error::Error; };
struct NoVisibleKeypoints : Error { using Error::Error; };
struct DivergedBehindCamera : Error { using Error::Error; };
struct MissingPriors : Error { using Error::Error; };
struct NoProtoForClass : Error { using Error::Error; };

// Evaluation.
struct MissingAzimuth : Error { using Error::Error; };

}  // namespace lift3d
