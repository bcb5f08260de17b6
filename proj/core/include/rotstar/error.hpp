#pragma once

#include <stdexcept>
#include <string>

namespace rotstar {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid spec, config file, or option value. The message names the field.
class ConfigError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

// Image or kernel dimensions that cannot be combined.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Board pose that cannot be imaged (plane through the camera centre, board behind the camera).
class PoseError : public Error {
public:
    using Error::Error;
};

// Bilinear lookup too close to the image border.
class SamplingError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace rotstar
