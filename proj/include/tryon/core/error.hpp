#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace tryon {

/// Raised when tensor dimensions violate an operation's contract.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when values (not shapes) are outside an operation's domain.
class ValueError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// File or directory access failed; the message carries the offending path.
class IoError : public std::runtime_error {
public:
    IoError(const std::string& what, std::string path)
        : std::runtime_error(what + ": " + path), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Numerical breakdown (NaN/Inf) during an iterative procedure.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template <class... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    (os << ... << std::forward<Args>(args));
    return os.str();
}

}  // namespace detail

template <class Err = ShapeError, class... Args>
[[noreturn]] void fail(Args&&... args) {
    throw Err(detail::concat(std::forward<Args>(args)...));
}

template <class Err = ShapeError, class... Args>
void require(bool cond, Args&&... args) {
    if (!cond) fail<Err>(std::forward<Args>(args)...);
}

}  // namespace tryon
