#pragma once

#include <stdexcept>
#include <string>

namespace raune {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor rank/shape/range contract violations (includes dimension errors such as
// inputs whose spatial size is not divisible by the network's downsampling factor).
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration values; the message names the offending field.
struct ConfigError : Error {
    using Error::Error;
};

// File system and image decode/encode failures; the message carries the path.
struct IoError : Error {
    using Error::Error;
};

// Corrupt, truncated or version-mismatched tensor containers and checkpoints.
struct CheckpointError : Error {
    using Error::Error;
};

}  // namespace raune
