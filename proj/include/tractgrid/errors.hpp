#pragma once

#include <stdexcept>
#include <string>

namespace tractgrid {

// Every failure raised by the library derives from Error so callers can
// catch broadly; the CLI maps the concrete type to an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class DegenerateGeometry : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class CheckInvalid : public Error {
public:
    using Error::Error;
};

} // namespace tractgrid
