#pragma once

#include <stdexcept>
#include <string>

namespace bdverify {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller violated an operation's documented precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// A network, dataset or report file could not be parsed.
class FormatError : public Error {
public:
    using Error::Error;
};

// A constraint system references undeclared variables or is otherwise
// ill-formed. Distinct from an UNKNOWN solver verdict.
class MalformedSystemError : public Error {
public:
    using Error::Error;
};

#define BDV_REQUIRE(cond, msg)                                                 \
    do {                                                                       \
        if (!(cond))                                                           \
            throw ::bdverify::PreconditionError(msg);                          \
    } while (0)

}  // namespace bdverify
