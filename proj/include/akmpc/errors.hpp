#pragma once

#include <stdexcept>
#include <string>

namespace akmpc {

/// Malformed, missing or inconsistent input data (files, dimensions, config).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a finite, well-posed result.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Gram matrix of an unregularized least-squares fit is singular.
class RankDeficientError : public NumericError {
public:
    RankDeficientError(const std::string& what, int deficient)
        : NumericError(what), deficient_(deficient) {}

    /// Number of dimensions missing from the numerical rank.
    int deficient() const noexcept { return deficient_; }

private:
    int deficient_;
};

}  // namespace akmpc
