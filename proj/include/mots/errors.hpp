#pragma once

#include <stdexcept>
#include <string>

namespace mots {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad characters, truncated streams, unknown fields.
/// The CLI maps it to exit status 2.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Well-formed input that breaks a semantic rule (overlapping masks,
/// duplicate ids, empty masks). The CLI maps it to exit status 3.
class ConstraintError : public Error {
public:
    using Error::Error;
};

/// Operands with different image dimensions.
class DimensionError : public ConstraintError {
public:
    using ConstraintError::ConstraintError;
};

/// A loss evaluated on a batch with no valid anchor or triplet.
class UndefinedLossError : public Error {
public:
    using Error::Error;
};

} // namespace mots
