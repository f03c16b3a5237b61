#pragma once

#include <stdexcept>
#include <string>

namespace growthssm {

/// Base for all library errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad dimensions, bad labels, bad files, bad arguments.
class InputError : public Error {
  public:
    using Error::Error;
};

/// Filter/smoother/optimizer breakdown (singular variances, non-finite values).
class NumericalError : public Error {
  public:
    using Error::Error;
};

/// Not enough non-missing data to absorb every diffuse dimension.
class InsufficientDataError : public NumericalError {
  public:
    InsufficientDataError(const std::string& what, int absorbed, int required)
        : NumericalError(what), absorbed_(absorbed), required_(required) {}

    int absorbed() const { return absorbed_; }
    int required() const { return required_; }

  private:
    int absorbed_;
    int required_;
};

} // namespace growthssm
