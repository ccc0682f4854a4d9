#pragma once

#include <stdexcept>
#include <string>

namespace cgt {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Caller broke an operation's precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

// NaN/Inf in a forward pass or diverging training.
class NumericalError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IngestionError : public Error {
public:
    using Error::Error;
};

}  // namespace cgt
