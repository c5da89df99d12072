#pragma once

#include <stdexcept>
#include <string>

namespace cerf {

/// Broad failure category; the CLI maps each one to an exit status.
enum class ErrorKind {
    invalid_argument,  // precondition or configuration violated
    data,              // malformed or inconsistent input data
    numerical,         // non-finite values, singular systems, failed convergence
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_argument(const std::string& what) {
    throw Error(ErrorKind::invalid_argument, what);
}

[[noreturn]] inline void fail_data(const std::string& what) {
    throw Error(ErrorKind::data, what);
}

[[noreturn]] inline void fail_numerical(const std::string& what) {
    throw Error(ErrorKind::numerical, what);
}

inline void require(bool condition, const std::string& what) {
    if (!condition) fail_argument(what);
}

}  // namespace cerf
