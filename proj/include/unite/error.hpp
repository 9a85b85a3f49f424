#pragma once

#include <stdexcept>
#include <string>

namespace unite {

// Base of every error raised by the toolkit. The subclass decides the CLI
// exit code: usage errors map to 1, data errors to 2, numerical failures to 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

// Malformed input files, missing fields, inconsistent datasets, I/O failures.
class DataError : public Error {
public:
    using Error::Error;
};

// Non-finite losses or scores, undefined statistics.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace unite
