#pragma once

#include <stdexcept>
#include <string>

namespace vad {

// Base for everything thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad user input: config files, CLI values, malformed specs. CLI exit code 1.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

// Runtime data problems: unreadable files, bad labels, corrupt checkpoints. CLI exit code 2.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what) {}
};

// Tensor/layer dimension mismatches.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

// Aborted optimization (non-finite loss and friends).
class TrainError : public Error {
public:
    explicit TrainError(const std::string& what) : Error(what) {}
};

}  // namespace vad
