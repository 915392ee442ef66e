#pragma once

#include <stdexcept>
#include <string>

namespace gando {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Requested distortion level is not part of its pool.
class LevelError : public Error {
public:
    using Error::Error;
};

/// Tensor or image dimensions disagree with what an operation expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Scene placement gave up after the rejection-sampling budget.
class PlacementError : public Error {
public:
    using Error::Error;
};

/// Mini-batch violates the even-size requirement of the augmentation rule.
class BatchSizeError : public Error {
public:
    using Error::Error;
};

/// A loss or gradient became NaN/Inf.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid experiment or training configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Checkpoint, manifest or image file could not be read or validated.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Filesystem write failure.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace gando
