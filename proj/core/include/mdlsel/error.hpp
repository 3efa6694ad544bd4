#pragma once

#include <stdexcept>
#include <string>

namespace mdlsel {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Requested more distinct items than the domain can hold.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// A feature was requested that the task configuration does not carry.
class FeatureAbsent : public Error {
public:
    using Error::Error;
};

/// Tensor or batch shapes disagree.
class ShapeMismatch : public Error {
public:
    using Error::Error;
};

/// Malformed file or byte stream.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace mdlsel
