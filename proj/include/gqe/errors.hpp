#pragma once

#include <stdexcept>
#include <string>

namespace gqe {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file; message carries file and line number.
struct ParseError : Error {
    using Error::Error;
};

// Edge or query violates the declared node/relation typing.
struct SchemaError : Error {
    using Error::Error;
};

// Caller passed an out-of-contract value (bad fraction, unknown id, ...).
struct ArgumentError : Error {
    using Error::Error;
};

// Tensor dimension mismatch.
struct ShapeError : Error {
    using Error::Error;
};

// Non-finite value, zero-norm embedding, or similar numeric failure.
struct NumericError : Error {
    using Error::Error;
};

// Input exceeds a configured memory budget.
struct CapacityError : Error {
    using Error::Error;
};

// Rejection sampling hit its retry cap.
struct SamplingError : Error {
    using Error::Error;
};

// Artifact on disk is unusable (wrong version, mismatched graph, ...).
struct DataError : Error {
    using Error::Error;
};

}  // namespace gqe
