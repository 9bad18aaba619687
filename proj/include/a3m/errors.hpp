#pragma once

#include <stdexcept>
#include <string>

namespace a3m {

/// Shape or extent disagreement between operands.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Label, class or attribute index outside its declared range.
class IndexError : public std::out_of_range {
  public:
    using std::out_of_range::out_of_range;
};

/// Invalid configuration or specification field.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed text or binary input.
class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf produced where finite values are required.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace a3m
