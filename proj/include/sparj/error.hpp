#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sparj {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class CovarianceError : public Error {
public:
    using Error::Error;
};

/// A filter or smoother recursion could not proceed at `step` (1-based time index).
class FilterError : public Error {
public:
    FilterError(const std::string& what, std::size_t step)
        : Error(what + " at step " + std::to_string(step)), step_(step)
    {
    }

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class ParseError : public Error {
public:
    using Error::Error;
};

} // namespace sparj
