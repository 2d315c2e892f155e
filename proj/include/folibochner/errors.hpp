#pragma once

#include <stdexcept>
#include <string>

namespace folib {

// Base class for every error the library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Jet / expression layer -----------------------------------------------------

// Evaluation hit a point outside an operation's domain (division by zero,
// sqrt/log of a non-positive value, non-integer power of a negative base).
struct DomainError : Error { using Error::Error; };

// Expression references a variable index outside the chart dimension.
struct ArityError : Error { using Error::Error; };

// Requested derivative order exceeds the jet's truncation order, or a jet was
// constructed with an unusable order.
struct OrderError : Error { using Error::Error; };

// Expression text failed to parse.
struct BadExpression : Error { using Error::Error; };

// Geometry layer -------------------------------------------------------------

// Metric failed the positivity check at an evaluation point.
struct MetricNotSPD : Error { using Error::Error; };

// Declared vertical fields are linearly dependent at an evaluation point.
struct DegenerateVerticalSpan : Error { using Error::Error; };

// Could not complete the vertical frame to a full orthonormal frame.
struct RankDeficientHorizontal : Error { using Error::Error; };

// Model description is inconsistent (shape mismatches, missing blocks, bad
// parameters).
struct ModelError : Error { using Error::Error; };

// Structure constants fail antisymmetry, Jacobi, or the grading rules.
struct BadStructureConstants : Error { using Error::Error; };

// Heat layer -----------------------------------------------------------------

// Group elements from different groups were combined.
struct StructureMismatch : Error { using Error::Error; };

// The sampling scheme is only valid when the horizontal Laplacian is a plain
// sum of squares of the frame fields; this model has first-order terms.
struct SchemeUnsupported : Error { using Error::Error; };

struct NonpositiveTime : Error { using Error::Error; };

// Spectral-gap estimation requested on a model without a stationary law.
struct NotCompactModel : Error { using Error::Error; };

// The step-two nondegeneracy constant is requested but the bracket form is
// degenerate on the vertical space.
struct NotStepTwo : Error { using Error::Error; };

// Tensors / comparison layer -------------------------------------------------

struct EmptySampleSet : Error { using Error::Error; };

// lambda = +infinity is only meaningful when the trace form iota vanishes.
struct InfiniteLambdaWithNonzeroIota : Error { using Error::Error; };

// Comparison bound evaluated past the first conjugate radius.
struct RadiusBeyondConjugate : Error { using Error::Error; };

struct NonpositiveK : Error { using Error::Error; };

struct SampleAtOrigin : Error { using Error::Error; };

// Driver ---------------------------------------------------------------------

struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

} // namespace folib
