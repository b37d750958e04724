#pragma once

#include <stdexcept>
#include <string>

namespace cgcnn {

// Shape or precondition violations on caller-supplied data.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite values produced or consumed during optimization.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Configuration problems: unknown keys, missing required keys, type mismatches.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cgcnn
