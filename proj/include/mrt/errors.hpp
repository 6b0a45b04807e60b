#pragma once

#include <stdexcept>
#include <string>

namespace mrt {

// Base of every error raised by the library. The CLI maps ConfigError and
// its relatives to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

// Batch statistics cannot be formed (e.g. BatchNorm in train mode with B=1).
class StatisticsError : public Error {
public:
    using Error::Error;
};

class SplitError : public Error {
public:
    using Error::Error;
};

// Two aggregation boundaries rounded onto the same quantisation mark.
class CollapseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mrt
