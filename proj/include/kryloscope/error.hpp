#pragma once

#include <stdexcept>
#include <string>

namespace kryloscope {

/// Base class for all library errors.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a family (e.g. marginal at n=1).
class domain_error : public error {
public:
    using error::error;
};

/// Index outside a tabulated range.
class index_error : public error {
public:
    using error::error;
};

/// Input that fails a structural check (non-Hermitian H, zero seed, bad file).
class validation_error : public error {
public:
    using error::error;
};

/// Numerical procedure that did not converge or blew up.
class numerical_error : public error {
public:
    using error::error;
};

/// Malformed input file; carries the 1-based line number when known.
class parse_error : public validation_error {
public:
    parse_error(const std::string& what, int line)
        : validation_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line)
    {
    }
    [[nodiscard]] int line() const noexcept { return line_; }

private:
    int line_;
};

} // namespace kryloscope
