#pragma once

#include <stdexcept>
#include <string>

namespace lw {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
    io,       // exit 1
    domain,   // exit 2
    usage,    // exit 64
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error domain_error(const std::string& what) { return {ErrorKind::domain, what}; }
inline Error io_error(const std::string& what) { return {ErrorKind::io, what}; }
inline Error usage_error(const std::string& what) { return {ErrorKind::usage, what}; }

inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::io: return 1;
    case ErrorKind::domain: return 2;
    case ErrorKind::usage: return 64;
    }
    return 2;
}

} // namespace lw
